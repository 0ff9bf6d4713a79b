#pragma once

// Fixtures and independent oracles shared by the test executables.

#include "spatialrel/descriptor.hpp"
#include "spatialrel/geometry.hpp"
#include "spatialrel/random.hpp"
#include "spatialrel/synth.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unistd.h>
#include <vector>

namespace testing {

namespace fs = std::filesystem;
using srel::Vec3;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("spatialrel-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline srel::PointCloud cloud_of(std::vector<Vec3> pts) {
  srel::PointCloud c;
  c.points = std::move(pts);
  return c;
}

inline srel::Scene scene_of(std::vector<Vec3> ref, std::vector<Vec3> tgt,
                            srel::Pose pose = srel::Pose::identity(), std::string id = "t") {
  srel::Scene s;
  s.id = std::move(id);
  s.reference = cloud_of(std::move(ref));
  s.target = cloud_of(std::move(tgt));
  s.relative_pose = pose;
  return s;
}

inline std::vector<Vec3> random_points(srel::Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<Vec3> pts;
  for (std::size_t i = 0; i < n; ++i) {
    pts.emplace_back(rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi));
  }
  return pts;
}

inline srel::Pose random_pose(srel::Rng& rng, double t = 1.0) {
  Eigen::Quaterniond q(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  q.normalize();
  return {Vec3(rng.uniform(-t, t), rng.uniform(-t, t), rng.uniform(-t, t)), q};
}

inline double l1(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Raw angles and distances of a scene, computed literally with acos on the
/// normalized vectors. Target points are placed by the relative pose; no
/// downsampling.
struct PairValues {
  std::vector<double> theta;  // degrees
  std::vector<double> phi;    // degrees
  std::vector<double> dist;   // meters, all pairs
};

inline PairValues pair_values(const srel::Scene& scene, const Vec3& g = Vec3(0, 0, -1)) {
  PairValues out;
  Vec3 c = Vec3::Zero();
  for (const auto& p : scene.reference.points) c += p;
  c /= static_cast<double>(scene.reference.points.size());
  std::vector<Vec3> placed;
  for (const auto& p : scene.target.points) placed.push_back(scene.relative_pose.apply(p));
  const double kPi = std::acos(-1.0);
  for (const auto& pk : scene.reference.points) {
    const Vec3 a = pk - c;
    for (const auto& pl : placed) {
      const Vec3 b = pl - pk;
      out.dist.push_back(b.norm());
      if (a.norm() > 1e-9 && b.norm() > 1e-9) {
        const double cosv = std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0);
        out.theta.push_back(std::acos(cosv) * 180.0 / kPi);
      }
      const Vec3 n1 = a.cross(g);
      const Vec3 n2 = a.cross(b);
      if (n1.norm() > 1e-9 && n2.norm() > 1e-9) {
        const double cosv = std::clamp(n1.dot(n2) / (n1.norm() * n2.norm()), -1.0, 1.0);
        out.phi.push_back(std::acos(cosv) * 180.0 / kPi);
      }
    }
  }
  return out;
}

inline std::size_t oracle_angle_bin(double deg) {
  return std::min<std::size_t>(8, static_cast<std::size_t>(std::floor(deg / 20.0)));
}

inline std::size_t oracle_dist_bin(double m) {
  return std::min<std::size_t>(20, static_cast<std::size_t>(std::floor(m / 0.06)));
}

/// Brute-force descriptor: acos angles, a full sort of all pair distances
/// and the n = max(1, floor(m / 10)) smallest of them.
inline std::array<double, 39> brute_descriptor(const srel::Scene& scene) {
  PairValues v = pair_values(scene);
  std::array<double, 39> h{};
  for (double t : v.theta) h[oracle_angle_bin(t)] += 1.0 / static_cast<double>(v.theta.size());
  for (double p : v.phi) h[9 + oracle_angle_bin(p)] += 1.0 / static_cast<double>(v.phi.size());
  std::sort(v.dist.begin(), v.dist.end());
  const std::size_t n = std::max<std::size_t>(1, v.dist.size() / 10);
  for (std::size_t i = 0; i < n; ++i) h[18 + oracle_dist_bin(v.dist[i])] += 1.0 / static_cast<double>(n);
  return h;
}

/// Drops points until no pair value of the scene lies within `margin`
/// (degrees or meters) of an inner bin edge, no phi pair is close to
/// degenerate, and the closest-pair cut does not straddle a bin edge. Rigid
/// motions of the result then bin every value identically.
inline srel::Scene boundary_safe(srel::Scene scene, double margin = 1e-3) {
  const Vec3 g(0, 0, -1);
  // Inner edges only: 0 and 180 degrees close the range rather than split bins.
  auto near_edge = [&](double v, double width, double top) {
    const double k = std::round(v / width);
    if (k <= 0 || k * width >= top) return false;
    return std::abs(v - width * k) < margin;
  };
  const double kPi = std::acos(-1.0);
  auto& ref = scene.reference.points;
  auto& tgt = scene.target.points;
  while (ref.size() > 2 && !tgt.empty()) {
    Vec3 c = Vec3::Zero();
    for (const auto& p : ref) c += p;
    c /= static_cast<double>(ref.size());
    std::vector<Vec3> placed;
    for (const auto& p : tgt) placed.push_back(scene.relative_pose.apply(p));
    std::vector<int> bad_ref(ref.size(), 0), bad_tgt(placed.size(), 0);
    std::vector<std::tuple<double, std::size_t, std::size_t>> dist;
    for (std::size_t k = 0; k < ref.size(); ++k) {
      const Vec3 a = ref[k] - c;
      for (std::size_t l = 0; l < placed.size(); ++l) {
        const Vec3 b = placed[l] - ref[k];
        dist.emplace_back(b.norm(), k, l);
        int bad = 0;
        const double cosv = std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0);
        if (near_edge(std::acos(cosv) * 180.0 / kPi, 20.0, 180.0)) ++bad;
        const Vec3 n1 = a.cross(g), n2 = a.cross(b);
        if (n2.norm() < 1e-6 * a.norm() * b.norm()) {
          ++bad;
        } else {
          const double cphi = std::clamp(n1.dot(n2) / (n1.norm() * n2.norm()), -1.0, 1.0);
          if (near_edge(std::acos(cphi) * 180.0 / kPi, 20.0, 180.0)) ++bad;
        }
        bad_ref[k] += bad;
        bad_tgt[l] += bad;
      }
    }
    std::sort(dist.begin(), dist.end());
    const std::size_t n = std::max<std::size_t>(1, dist.size() / 10);
    for (std::size_t i = 0; i < std::min(n + 1, dist.size()); ++i) {
      if (near_edge(std::get<0>(dist[i]), 0.06, 20 * 0.06 + 1e-9)) {
        ++bad_ref[std::get<1>(dist[i])];
        ++bad_tgt[std::get<2>(dist[i])];
      }
    }
    const auto wr = std::max_element(bad_ref.begin(), bad_ref.end());
    const auto wt = std::max_element(bad_tgt.begin(), bad_tgt.end());
    if (*wr == 0 && *wt == 0) return scene;
    if (*wr >= *wt) {
      ref.erase(ref.begin() + (wr - bad_ref.begin()));
    } else {
      tgt.erase(tgt.begin() + (wt - bad_tgt.begin()));
    }
  }
  throw std::runtime_error("could not make scene boundary safe");
}

inline srel::Scene on_top_boxes(std::uint64_t seed, double density = 3000.0) {
  srel::synth::RelationSpec r;
  r.kind = srel::synth::RelationKind::OnTop;
  r.seed = seed;
  return srel::synth::generate_scene(srel::synth::ShapeSpec::box(0.2, 0.2, 0.1, seed),
                                     srel::synth::ShapeSpec::box(0.08, 0.08, 0.08, seed + 1), r,
                                     "on-top-" + std::to_string(seed));
}

}  // namespace testing
