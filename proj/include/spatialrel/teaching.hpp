#pragma once

#include "spatialrel/io.hpp"
#include "spatialrel/lmnn.hpp"
#include "spatialrel/metrics.hpp"
#include "spatialrel/relationdb.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace srel {

enum class SessionState { Collecting, Labeled, Finalized };
enum class Decision { Prior, Local };

std::string to_string(SessionState s);
std::string to_string(Decision d);
SessionState session_state_from_string(const std::string& s);
Decision decision_from_string(const std::string& s);

struct TeachingConfig {
  std::size_t queries_per_demo = 8;  // Q
  double epsilon_star = 0.77;
  /// y(i,j) = 0 and y(i,k) = 0 for a demo i  =>  y(j,k) = 1
  bool dissimilar_rule = true;
  /// y(i,j) = 1 and y(i,k) = 1 for a demo i  =>  y(j,k) = 1
  bool similar_rule = true;

  void validate() const;
};

struct DemoQueries {
  std::string demo;
  std::vector<std::string> neighbors;  // nearest first
};

struct Contradiction {
  std::string i;
  std::string j;
  int derived = 1;
  int teacher = 0;
};

/// Labels over D* = demos followed by the neighbor set, in that order.
struct CompletedLabels {
  std::vector<std::string> ids;
  std::size_t demo_count = 0;
  LabelMatrix labels;
  std::vector<Contradiction> contradictions;
};

/// One run of the interactive protocol: queries for the new demonstrations,
/// teacher labels on the union of their neighbors, the confidence gate and
/// the chosen metric.
class TeachingSession {
 public:
  /// Demo descriptors are computed with `options`, which should match the
  /// database the session queries.
  TeachingSession(std::string id, std::vector<Scene> demos, TeachingConfig config = {},
                  DescriptorOptions options = {});

  const std::string& id() const { return id_; }
  const std::vector<Scene>& demos() const { return demos_; }
  const std::vector<RelationDescriptor>& demo_descriptors() const { return demo_descriptors_; }
  const TeachingConfig& config() const { return config_; }
  const DescriptorOptions& descriptor_options() const { return options_; }
  SessionState state() const { return state_; }
  /// Set when the database was empty and the session fell back to training
  /// on the demonstrations alone.
  bool degenerate() const { return degenerate_; }

  /// Q nearest database scenes per demo under `prior` (scenes sharing a demo
  /// id are skipped). The neighbor set is their union in first-appearance
  /// order. Throws ProtocolError on an empty database after marking the
  /// session degenerate.
  const std::vector<DemoQueries>& collect_queries(const RelationDatabase& db,
                                                  const MetricModel& prior);

  const std::vector<DemoQueries>& queries() const { return queries_; }
  const std::vector<std::string>& neighbor_set() const { return neighbors_; }
  bool queries_collected() const { return collected_; }

  /// Applies labels in order after validating all of them: each id must be
  /// in the neighbor set and y in {0, 1}. Relabeling replaces the earlier
  /// answer. Throws SessionFinalized after finalize.
  void submit_labels(const std::vector<std::pair<std::string, int>>& labels);
  void submit_label(const std::string& scene_id, int y) { submit_labels({{scene_id, y}}); }

  const std::map<std::string, int>& teacher_labels() const { return labels_; }
  std::vector<std::string> unlabeled() const;

  /// Share of the neighbor set labeled similar. Throws IncompleteSession
  /// while any neighbor is unlabeled or queries were never collected.
  double epsilon_nn() const;

  /// Y* from the teacher labels and the transitivity rules. Database labels
  /// between neighbors count as teacher labels and win over derived ones.
  CompletedLabels complete_labels(const RelationDatabase* db = nullptr) const;

  /// Gate: epsilon_nn >= epsilon_star keeps `prior`, otherwise trains LMNN on
  /// D* with Y*. A training failure propagates and leaves the session
  /// labeled.
  const MetricModel& finalize(const RelationDatabase& db, const MetricModel& prior,
                              const TrainingConfig& training = {});

  std::optional<Decision> decision() const { return decision_; }
  std::optional<double> recorded_epsilon() const { return epsilon_; }
  const std::optional<MetricModel>& outcome() const { return outcome_; }
  const std::vector<Contradiction>& contradictions() const { return contradictions_; }

  Json to_json() const;
  static TeachingSession from_json(const Json& j);

 private:
  TeachingSession() = default;
  void require_not_finalized() const;
  void refresh_state();

  std::string id_;
  std::vector<Scene> demos_;
  std::vector<RelationDescriptor> demo_descriptors_;
  TeachingConfig config_;
  DescriptorOptions options_;
  SessionState state_ = SessionState::Collecting;
  bool degenerate_ = false;
  bool collected_ = false;
  std::vector<DemoQueries> queries_;
  std::vector<std::string> neighbors_;
  std::map<std::string, int> labels_;
  std::optional<Decision> decision_;
  std::optional<double> epsilon_;
  std::optional<MetricModel> outcome_;
  std::vector<Contradiction> contradictions_;
};

void save_session(const TeachingSession& session, const std::filesystem::path& path);
TeachingSession load_session(const std::filesystem::path& path);

/// Answers a query for `scene_id` with 0 or 1.
using Labeler = std::function<int(const std::string& scene_id)>;

/// Oracle teacher: 1 when the queried scene's relation tag equals `tag`.
Labeler tag_oracle(const RelationDatabase& db, std::string tag);

/// Runs collect, label-all and finalize with the given labeler.
const MetricModel& run_offline_session(TeachingSession& session, const RelationDatabase& db,
                                       const MetricModel& prior, const Labeler& labeler,
                                       const TrainingConfig& training = {});

}  // namespace srel
