#pragma once

#include "spatialrel/descriptor.hpp"
#include "spatialrel/errors.hpp"
#include "spatialrel/geometry.hpp"
#include "spatialrel/metrics.hpp"

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <vector>

namespace srel {

enum class RotationSampling { YawOnly, UniformSO3 };

struct SearchConfig {
  /// Half-width of the translation cube per axis; nullopt selects
  /// 1.5 x (sum of bounding-sphere radii).
  std::optional<double> extent;
  double resolution = 0.03;
  RotationSampling rotation = RotationSampling::YawOnly;
  double yaw_step_deg = 30.0;
  /// Number of seeded uniform rotations in UniformSO3 mode.
  std::size_t rotation_count = 12;
  double collision_epsilon = kDefaultCollisionEpsilon;
  /// Check every sample for collisions instead of only new minima. The
  /// returned candidate is the same either way.
  bool strict_collision = false;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  DescriptorOptions descriptor;
  /// Keep every evaluated sample (loss only) for inspection.
  bool keep_samples = false;

  void validate() const;
};

struct PoseCandidate {
  Pose pose;  // placed object relative to the reference
  RelationDescriptor descriptor;
  double loss = 0.0;
  bool feasible = false;
};

struct SampleRecord {
  Pose pose;
  double loss;
};

struct SearchResult {
  PoseCandidate best;
  std::size_t evaluated_samples = 0;
  std::size_t collision_checks = 0;
  std::vector<SampleRecord> samples;  // filled when keep_samples
};

/// Thrown when every sample collides; carries the lowest-loss colliding
/// candidate that was checked.
class NoSolution : public Error {
 public:
  NoSolution(const std::string& what, std::optional<PoseCandidate> best_infeasible)
      : Error("no_solution", what), best_infeasible_(std::move(best_infeasible)) {}
  const std::optional<PoseCandidate>& best_infeasible() const { return best_infeasible_; }

 private:
  std::optional<PoseCandidate> best_infeasible_;
};

/// Minimum distance from the candidate to any demonstration.
double demo_loss(const MetricModel& model, std::span<const RelationDescriptor> demos,
                 const RelationDescriptor& candidate);

/// Point the translation lattice is anchored on: the solid center when the
/// cloud carries a solid, otherwise its centroid.
Vec3 placement_anchor(const PointCloud& cloud);

std::vector<Eigen::Quaterniond> rotation_samples(const SearchConfig& config);

/// Lattice positions for the placed object's anchor, in the reference frame.
std::vector<Vec3> translation_grid(const PointCloud& reference, const PointCloud& placed,
                                   const SearchConfig& config);

/// Exhaustive search over translation_grid x rotation_samples holding the
/// reference fixed. Returns the feasible sample of least loss, ties broken
/// by lexicographic (translation, quaternion w x y z). Throws NoSolution.
SearchResult optimize_pose(const PointCloud& reference, const PointCloud& placed,
                           std::span<const RelationDescriptor> demos, const MetricModel& model,
                           const SearchConfig& config = {});

struct Ranking {
  std::vector<std::size_t> order;  // candidate indices, best first
  std::vector<double> losses;      // per candidate index
  double average_precision = 0.0;
};

/// Average precision of a ranked list against the relevant index set.
double average_precision(std::span<const std::size_t> order, const std::set<std::size_t>& relevant);

/// Ranks candidate descriptors by demo loss (ties by index) and scores the
/// ranking against the relevant set.
Ranking rank_and_map(std::span<const RelationDescriptor> candidates,
                     const std::set<std::size_t>& relevant, const MetricModel& model,
                     std::span<const RelationDescriptor> demos);

/// Same, computing each candidate's descriptor from poses of `placed`
/// against `reference`.
Ranking rank_and_map(const PointCloud& reference, const PointCloud& placed,
                     std::span<const Pose> candidates, const std::set<std::size_t>& relevant,
                     const MetricModel& model, std::span<const RelationDescriptor> demos,
                     const DescriptorOptions& options = {});

double mean_average_precision(std::span<const Ranking> rankings);

std::string to_string(RotationSampling r);  // "yaw" or "so3"
RotationSampling rotation_sampling_from_string(const std::string& s);

/// Overrides the fields present in `j` on top of `base`; unknown keys are
/// rejected. Keys: extent (number or null), resolution, rotation,
/// yaw_step_deg, rotation_count, collision_epsilon, strict_collision, seed,
/// threads.
SearchConfig search_config_from_json(const Json& j, SearchConfig base = {});
Json search_config_to_json(const SearchConfig& config);

Json candidate_to_json(const PoseCandidate& candidate);
Json search_result_to_json(const SearchResult& result);

}  // namespace srel
