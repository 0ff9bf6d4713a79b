#include "spatialrel/descriptor.hpp"

#include "spatialrel/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace srel {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

double clamped_acos_deg(double c) { return std::acos(std::clamp(c, -1.0, 1.0)) * kRadToDeg; }

}  // namespace

std::optional<double> angle_theta(const Vec3& p_k, const Vec3& c_k, const Vec3& p_l) {
  const Vec3 a = p_k - c_k;
  const Vec3 v = p_l - p_k;
  const double na = a.norm();
  const double nv = v.norm();
  if (na <= kDegenerateNorm || nv <= kDegenerateNorm) return std::nullopt;
  return clamped_acos_deg(a.dot(v) / (na * nv));
}

std::optional<double> angle_phi(const Vec3& p_k, const Vec3& c_k, const Vec3& p_l,
                                const Vec3& gravity) {
  const Vec3 a = p_k - c_k;
  const Vec3 c1 = a.cross(gravity);
  const Vec3 c2 = a.cross(p_l - p_k);
  const double n1 = c1.norm();
  const double n2 = c2.norm();
  if (n1 <= kDegenerateNorm || n2 <= kDegenerateNorm) return std::nullopt;
  return clamped_acos_deg(c1.dot(c2) / (n1 * n2));
}

std::size_t angle_bin(double degrees) {
  if (!(degrees > 0.0)) return 0;
  const auto b = static_cast<std::size_t>(std::floor(degrees / kAngleBinDegrees));
  return std::min(b, kThetaBins - 1);
}

std::size_t distance_bin(double meters) {
  if (!(meters > 0.0)) return 0;
  const double b = std::floor(meters / kDistBinMeters);
  if (b >= static_cast<double>(kDistBins - 1)) return kDistBins - 1;
  return static_cast<std::size_t>(b);
}

std::size_t closest_pair_count(std::size_t pair_count) {
  return std::max<std::size_t>(1, pair_count / 10);
}

RelationDescriptor PairHistograms::normalized() const {
  if (theta_pairs == 0 || phi_pairs == 0 || dist_pairs == 0) {
    throw InvalidScene("descriptor has a histogram without contributing pairs");
  }
  std::array<double, kDescriptorDim> bins{};
  for (std::size_t i = 0; i < kThetaBins; ++i) {
    bins[i] = static_cast<double>(theta[i]) / static_cast<double>(theta_pairs);
  }
  for (std::size_t i = 0; i < kPhiBins; ++i) {
    bins[kThetaBins + i] = static_cast<double>(phi[i]) / static_cast<double>(phi_pairs);
  }
  for (std::size_t i = 0; i < kDistBins; ++i) {
    bins[kThetaBins + kPhiBins + i] =
        static_cast<double>(dist[i]) / static_cast<double>(dist_pairs);
  }
  return RelationDescriptor(bins);
}

ReferenceFrameCache::ReferenceFrameCache(const PointCloud& reference,
                                         const WorldConvention& convention)
    : centroid_(srel::centroid(reference)) {
  const Vec3& g = convention.gravity;
  points_.reserve(reference.size());
  for (const auto& p : reference.points) {
    RefPoint rp{};
    rp.p = p;
    const Vec3 a = p - centroid_;
    rp.a_norm = a.norm();
    rp.theta_ok = rp.a_norm > kDegenerateNorm;
    if (rp.theta_ok) {
      rp.u = a / rp.a_norm;
      const Vec3 c1 = a.cross(g);
      const double n1 = c1.norm();
      rp.phi_ok = n1 > kDegenerateNorm;
      if (rp.phi_ok) rp.w = (c1 / n1).cross(rp.u);
    }
    points_.push_back(rp);
  }
  // theta >= 20 m  <=>  cos(theta) <= cos(20 m)
  for (std::size_t m = 1; m < kThetaBins; ++m) {
    cos_edges_[m - 1] = std::cos(static_cast<double>(m) * kAngleBinDegrees / kRadToDeg);
  }
}

namespace {

// Number of entries of the descending edge list that are >= c, i.e. the bin
// of cosine c. Written out so the per-pair loop vectorizes.
inline double count_at_least(const std::array<double, kThetaBins - 1>& e, double c) {
  return (c <= e[0] ? 1.0 : 0.0) + (c <= e[1] ? 1.0 : 0.0) + (c <= e[2] ? 1.0 : 0.0) +
         (c <= e[3] ? 1.0 : 0.0) + (c <= e[4] ? 1.0 : 0.0) + (c <= e[5] ? 1.0 : 0.0) +
         (c <= e[6] ? 1.0 : 0.0) + (c <= e[7] ? 1.0 : 0.0);
}

}  // namespace

PairHistograms ReferenceFrameCache::accumulate(std::span<const Vec3> placed) const {
  PairHistograms h;
  std::array<std::size_t, kDistBins> all_dist{};
  const double degenerate2 = kDegenerateNorm * kDegenerateNorm;
  const std::size_t m = placed.size();

  std::vector<double> qx(m), qy(m), qz(m);
  for (std::size_t j = 0; j < m; ++j) {
    qx[j] = placed[j].x();
    qy[j] = placed[j].y();
    qz[j] = placed[j].z();
  }
  // Per-pair bins computed in a branch-free pass, then counted.
  std::vector<double> dbin(m), tbin(m), pbin(m), tok(m), pok(m);

  const auto& edges = cos_edges_;
  for (const auto& rp : points_) {
    const double px = rp.p.x(), py = rp.p.y(), pz = rp.p.z();
    const double ux = rp.u.x(), uy = rp.u.y(), uz = rp.u.z();
    const double wx = rp.w.x(), wy = rp.w.y(), wz = rp.w.z();
    const double a2 = rp.a_norm * rp.a_norm;
    for (std::size_t j = 0; j < m; ++j) {
      const double dx = qx[j] - px, dy = qy[j] - py, dz = qz[j] - pz;
      const double vv = dx * dx + dy * dy + dz * dz;
      const double len = std::sqrt(vv);
      dbin[j] = std::min(len / kDistBinMeters, static_cast<double>(kDistBins - 1));
      const double uv = ux * dx + uy * dy + uz * dz;
      const double ct = uv / len;
      // |a x v|^2 = |a|^2 (|v|^2 - (u.v)^2)
      const double perp2 = std::max(vv - uv * uv, 0.0);
      const double cp = (wx * dx + wy * dy + wz * dz) / std::sqrt(perp2);
      tbin[j] = count_at_least(edges, ct);
      pbin[j] = count_at_least(edges, cp);
      tok[j] = vv > degenerate2 ? 1.0 : 0.0;
      pok[j] = a2 * perp2 > degenerate2 ? 1.0 : 0.0;
    }
    for (std::size_t j = 0; j < m; ++j) {
      // truncation equals floor for non-negative lengths
      ++all_dist[static_cast<std::size_t>(dbin[j])];
      if (!rp.theta_ok || tok[j] == 0.0) continue;
      ++h.theta[static_cast<std::size_t>(tbin[j])];
      ++h.theta_pairs;
      if (!rp.phi_ok || pok[j] == 0.0) continue;
      ++h.phi[static_cast<std::size_t>(pbin[j])];
      ++h.phi_pairs;
    }
  }

  // The n smallest distances fill whole bins up to the one holding the n-th.
  const std::size_t total = points_.size() * m;
  if (total > 0) {
    std::size_t remaining = closest_pair_count(total);
    h.dist_pairs = remaining;
    for (std::size_t b = 0; b < kDistBins && remaining > 0; ++b) {
      const std::size_t take = std::min(remaining, all_dist[b]);
      h.dist[b] = take;
      remaining -= take;
    }
  }
  return h;
}

RelationDescriptor ReferenceFrameCache::describe(std::span<const Vec3> placed) const {
  return accumulate(placed).normalized();
}

PointCloud prepare_cloud(const PointCloud& cloud, const DescriptorOptions& options) {
  if (!options.voxel) return cloud;
  return voxel_downsample(cloud, *options.voxel);
}

RelationDescriptor compute_descriptor(const Scene& scene, const WorldConvention& convention,
                                      const DescriptorOptions& options) {
  if (scene.reference.empty() || scene.target.empty()) {
    throw InvalidScene("scene '" + scene.id + "' has an empty cloud");
  }
  const PointCloud reference = prepare_cloud(scene.reference, options);
  const PointCloud target = prepare_cloud(scene.target, options);
  const ReferenceFrameCache cache(reference, convention);
  const PointCloud placed = transform_cloud(target, scene.relative_pose);
  try {
    return cache.describe(placed.points);
  } catch (const InvalidScene& e) {
    throw InvalidScene("scene '" + scene.id + "': " + e.what());
  }
}

}  // namespace srel
