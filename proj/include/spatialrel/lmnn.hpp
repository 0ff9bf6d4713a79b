#pragma once

#include "spatialrel/metrics.hpp"
#include "spatialrel/relationdb.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace srel {

struct TrainingConfig {
  std::size_t k_targets = 3;
  double margin = 1.0;    // zeta
  double tradeoff = 1.0;  // lambda
  std::size_t max_iters = 200;
  double initial_step = 1e-2;
  std::size_t imposter_refresh = 10;
  std::uint64_t seed = 0;

  /// max_iters may be zero (no-op training); everything else positive.
  void validate() const;
};

/// Dense symmetric matrix of optional binary labels; the diagonal reads 1.
class LabelMatrix {
 public:
  explicit LabelMatrix(std::size_t n = 0) : n_(n), cells_(n * n, kMissing) {}

  std::size_t size() const { return n_; }
  std::optional<int> get(std::size_t i, std::size_t j) const {
    if (i == j) return 1;
    const auto v = cells_[i * n_ + j];
    if (v == kMissing) return std::nullopt;
    return v;
  }
  void set(std::size_t i, std::size_t j, int y) {
    cells_[i * n_ + j] = static_cast<std::int8_t>(y);
    cells_[j * n_ + i] = static_cast<std::int8_t>(y);
  }

 private:
  static constexpr std::int8_t kMissing = -1;
  std::size_t n_;
  std::vector<std::int8_t> cells_;
};

/// Training examples: one descriptor per row plus pairwise labels. Class
/// names never enter training.
struct LabeledSet {
  Eigen::MatrixXd features;
  LabelMatrix labels;
  std::vector<std::string> ids;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
};

/// Rows in the order of `ids` (all database ids when empty).
LabeledSet labeled_set(const RelationDatabase& db, const std::vector<std::string>& ids = {});

using TargetNeighbors = std::vector<std::vector<std::size_t>>;

/// For each example, its k nearest labeled-similar examples under `model`
/// (ties by index). Examples without a similar peer get an empty set and a
/// warning.
TargetNeighbors find_target_neighbors(const LabeledSet& data, const MetricModel& model,
                                      std::size_t k,
                                      std::vector<std::string>* warnings = nullptr);
TargetNeighbors find_target_neighbors(const RelationDatabase& db, const MetricModel& model,
                                      std::size_t k,
                                      std::vector<std::string>* warnings = nullptr);

struct ImposterTriple {
  std::size_t i;
  std::size_t j;  // target neighbor of i
  std::size_t k;  // labeled dissimilar to i

  bool operator==(const ImposterTriple&) const = default;
};

struct IterationRecord {
  std::size_t iter;
  double loss;
  double step;
  bool accepted;
};

struct TrainingState {
  TargetNeighbors targets;
  /// Triples with an active hinge as of the last refresh.
  std::vector<ImposterTriple> imposters;
  Eigen::MatrixXd map;
  /// Loss after initialization and after every accepted step.
  std::vector<double> loss_trace;
  std::vector<IterationRecord> log;
  std::vector<std::string> warnings;
};

/// Pull term over target neighbors plus lambda times the hinge over every
/// (i, j in N(i), k with y(i,k) = 0). Evaluated from a precomputed distance
/// matrix of the mapped features.
double lmnn_loss(const TrainingState& state, const TrainingConfig& config, const LabeledSet& data);
double lmnn_loss(const Eigen::MatrixXd& map, const TargetNeighbors& targets,
                 const TrainingConfig& config, const LabeledSet& data);

/// Triples whose hinge argument is positive under `map`.
std::vector<ImposterTriple> active_imposters(const Eigen::MatrixXd& map,
                                             const TargetNeighbors& targets,
                                             const TrainingConfig& config,
                                             const LabeledSet& data);

/// Gradient with respect to L of the loss restricted to the given imposter
/// triples (exact gradient when they are the currently active ones).
Eigen::MatrixXd lmnn_gradient(const Eigen::MatrixXd& map, const TargetNeighbors& targets,
                              const std::vector<ImposterTriple>& imposters,
                              const TrainingConfig& config, const LabeledSet& data);

/// Full-batch gradient descent on L from the identity with step halving on
/// rejected steps; imposters re-collected every refresh period and after
/// every rejection. Returns the best-loss iterate.
MetricModel train_lmnn(const LabeledSet& data, const TrainingConfig& config,
                       TrainingState* state_out = nullptr, std::ostream* log = nullptr);
MetricModel train_lmnn(const RelationDatabase& db, const TrainingConfig& config,
                       TrainingState* state_out = nullptr, std::ostream* log = nullptr);

/// Count of triples (i, j in N(i), k) with y(i,k) = 0 violating the margin.
std::size_t count_margin_violations(const MetricModel& model, const TargetNeighbors& targets,
                                    const TrainingConfig& config, const LabeledSet& data);

}  // namespace srel
