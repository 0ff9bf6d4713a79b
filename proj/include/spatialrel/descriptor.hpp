#pragma once

#include "spatialrel/geometry.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>

namespace srel {

inline constexpr std::size_t kThetaBins = 9;
inline constexpr std::size_t kPhiBins = 9;
inline constexpr std::size_t kDistBins = 21;
inline constexpr std::size_t kDescriptorDim = kThetaBins + kPhiBins + kDistBins;
inline constexpr double kAngleBinDegrees = 20.0;
inline constexpr double kDistBinMeters = 0.06;
/// Fraction of the closest cross-object pairs entering the distance histogram.
inline constexpr double kClosestPairFraction = 0.10;
inline constexpr double kDegenerateNorm = 1e-9;

/// Bumped whenever descriptor numerics change; keys the database cache.
inline constexpr const char* kDescriptorVersion = "pair-histogram-v1";

/// Concatenated [theta | phi | distance] histograms, each summing to one.
class RelationDescriptor {
 public:
  RelationDescriptor() { bins_.fill(0.0); }
  explicit RelationDescriptor(const std::array<double, kDescriptorDim>& bins) : bins_(bins) {}

  std::span<const double> values() const { return bins_; }
  std::span<const double> theta() const { return std::span(bins_).subspan(0, kThetaBins); }
  std::span<const double> phi() const { return std::span(bins_).subspan(kThetaBins, kPhiBins); }
  std::span<const double> dist() const {
    return std::span(bins_).subspan(kThetaBins + kPhiBins, kDistBins);
  }
  double operator[](std::size_t i) const { return bins_[i]; }
  const std::array<double, kDescriptorDim>& array() const { return bins_; }

  bool operator==(const RelationDescriptor&) const = default;

 private:
  std::array<double, kDescriptorDim> bins_;
};

/// Angle in degrees between (p_k - c_k) and (p_l - p_k); nullopt when
/// either vector is degenerate.
std::optional<double> angle_theta(const Vec3& p_k, const Vec3& c_k, const Vec3& p_l);

/// Angle in degrees between the normals of the planes spanned by
/// (p_k - c_k, g) and (p_k - c_k, p_l - p_k); nullopt when degenerate.
std::optional<double> angle_phi(const Vec3& p_k, const Vec3& c_k, const Vec3& p_l,
                                const Vec3& gravity);

/// Bin of an angle in [0, 180]; 180 falls in the last bin.
std::size_t angle_bin(double degrees);
/// Bin of a distance; overflow goes to the last bin.
std::size_t distance_bin(double meters);

/// Number of closest pairs kept for the distance histogram.
std::size_t closest_pair_count(std::size_t pair_count);

struct DescriptorOptions {
  /// Voxel edge for downsampling both clouds before pairing; nullopt keeps
  /// every point.
  std::optional<double> voxel = 0.01;
};

/// Downsamples a cloud per the options (identity when voxel is unset).
PointCloud prepare_cloud(const PointCloud& cloud, const DescriptorOptions& options);

/// r = f(s). Both clouds are downsampled in their own frame, the target is
/// placed by the relative pose, then every cross-object pair is binned.
RelationDescriptor compute_descriptor(const Scene& scene,
                                      const WorldConvention& convention = WorldConvention::standard(),
                                      const DescriptorOptions& options = {});

/// Unnormalized histogram counts with the number of contributing pairs.
struct PairHistograms {
  std::array<std::size_t, kThetaBins> theta{};
  std::array<std::size_t, kPhiBins> phi{};
  std::array<std::size_t, kDistBins> dist{};
  std::size_t theta_pairs = 0;
  std::size_t phi_pairs = 0;
  std::size_t dist_pairs = 0;

  /// Divides each histogram by its own count.
  RelationDescriptor normalized() const;
};

/// Precomputed per-reference-point quantities so many placements of a target
/// can be scored against one reference without repeating that work.
class ReferenceFrameCache {
 public:
  ReferenceFrameCache(const PointCloud& reference, const WorldConvention& convention);

  /// Raw bin counts for target points already expressed in the reference
  /// frame.
  PairHistograms accumulate(std::span<const Vec3> placed_target) const;

  /// Normalized descriptor; throws InvalidScene when a histogram has no
  /// contributing pair.
  RelationDescriptor describe(std::span<const Vec3> placed_target) const;

  const Vec3& centroid() const { return centroid_; }
  std::size_t size() const { return points_.size(); }

 private:
  struct RefPoint {
    Vec3 p;
    Vec3 u;        // unit (p - c)
    Vec3 w;        // n1 x u, so that n1 . (u x v) == w . v
    double a_norm; // |p - c|
    bool theta_ok;
    bool phi_ok;
  };
  std::vector<RefPoint> points_;
  Vec3 centroid_;
  std::array<double, kThetaBins - 1> cos_edges_{};
};

}  // namespace srel
