#include "spatialrel/teaching.hpp"

#include "spatialrel/errors.hpp"

#include <algorithm>
#include <set>

namespace srel {

std::string to_string(SessionState s) {
  switch (s) {
    case SessionState::Collecting: return "collecting";
    case SessionState::Labeled: return "labeled";
    case SessionState::Finalized: return "finalized";
  }
  return "unknown";
}

std::string to_string(Decision d) { return d == Decision::Prior ? "prior" : "local"; }

SessionState session_state_from_string(const std::string& s) {
  if (s == "collecting") return SessionState::Collecting;
  if (s == "labeled") return SessionState::Labeled;
  if (s == "finalized") return SessionState::Finalized;
  throw ParseError("unknown session state '" + s + "'");
}

Decision decision_from_string(const std::string& s) {
  if (s == "prior") return Decision::Prior;
  if (s == "local") return Decision::Local;
  throw ParseError("unknown decision '" + s + "'");
}

void TeachingConfig::validate() const {
  if (queries_per_demo == 0) throw InvalidInput("queries per demo must be positive");
  if (!(epsilon_star >= 0.0 && epsilon_star <= 1.0)) {
    throw InvalidInput("epsilon_star must lie in [0, 1]");
  }
}

TeachingSession::TeachingSession(std::string id, std::vector<Scene> demos, TeachingConfig config,
                                 DescriptorOptions options)
    : id_(std::move(id)), demos_(std::move(demos)), config_(config), options_(options) {
  config_.validate();
  if (demos_.empty()) throw InvalidInput("a teaching session needs at least one demonstration");
  std::set<std::string> seen;
  for (const auto& d : demos_) {
    if (!seen.insert(d.id).second) throw InvalidInput("duplicate demo id '" + d.id + "'");
    demo_descriptors_.push_back(compute_descriptor(d, WorldConvention::standard(), options_));
  }
}

void TeachingSession::require_not_finalized() const {
  if (state_ == SessionState::Finalized) {
    throw SessionFinalized("session '" + id_ + "' is finalized");
  }
}

void TeachingSession::refresh_state() {
  if (state_ == SessionState::Finalized) return;
  if (degenerate_) {
    state_ = SessionState::Labeled;
    return;
  }
  state_ = collected_ && unlabeled().empty() ? SessionState::Labeled : SessionState::Collecting;
}

const std::vector<DemoQueries>& TeachingSession::collect_queries(const RelationDatabase& db,
                                                                 const MetricModel& prior) {
  require_not_finalized();
  if (collected_ || degenerate_) throw ProtocolError("queries were already collected");

  std::set<std::string> demo_ids;
  for (const auto& d : demos_) demo_ids.insert(d.id);
  std::vector<std::string> pool;
  for (const auto& id : db.ids()) {
    if (!demo_ids.count(id)) pool.push_back(id);
  }
  if (pool.empty()) {
    degenerate_ = true;
    refresh_state();
    throw ProtocolError("database has no scenes to query; session '" + id_ +
                        "' falls back to training on its demonstrations");
  }

  std::set<std::string> in_union;
  for (std::size_t i = 0; i < demos_.size(); ++i) {
    const KnnResult r = knn_query(db, prior, demo_descriptors_[i], config_.queries_per_demo,
                                  std::span<const std::string>(pool));
    queries_.push_back({demos_[i].id, r.ids});
    for (const auto& n : r.ids) {
      if (in_union.insert(n).second) neighbors_.push_back(n);
    }
  }
  collected_ = true;
  refresh_state();
  return queries_;
}

void TeachingSession::submit_labels(const std::vector<std::pair<std::string, int>>& labels) {
  require_not_finalized();
  if (!collected_) throw ProtocolError("no queries have been collected for session '" + id_ + "'");
  const std::set<std::string> queried(neighbors_.begin(), neighbors_.end());
  for (const auto& [scene, y] : labels) {
    if (!queried.count(scene)) throw InvalidInput("scene '" + scene + "' was not queried");
    if (y != 0 && y != 1) throw InvalidInput("label for '" + scene + "' must be 0 or 1");
  }
  for (const auto& [scene, y] : labels) labels_[scene] = y;
  refresh_state();
}

std::vector<std::string> TeachingSession::unlabeled() const {
  std::vector<std::string> out;
  for (const auto& n : neighbors_) {
    if (!labels_.count(n)) out.push_back(n);
  }
  return out;
}

double TeachingSession::epsilon_nn() const {
  if (degenerate_) throw ProtocolError("session '" + id_ + "' has no neighbor set");
  if (!collected_) throw IncompleteSession("queries have not been collected");
  const auto missing = unlabeled();
  if (!missing.empty()) {
    throw IncompleteSession(std::to_string(missing.size()) + " queried scenes are unlabeled");
  }
  std::size_t similar = 0;
  for (const auto& n : neighbors_) similar += labels_.at(n) == 1 ? 1 : 0;
  return static_cast<double>(similar) / static_cast<double>(neighbors_.size());
}

CompletedLabels TeachingSession::complete_labels(const RelationDatabase* db) const {
  if (!degenerate_) {
    if (!collected_) throw IncompleteSession("queries have not been collected");
    if (!unlabeled().empty()) throw IncompleteSession("queried scenes remain unlabeled");
  }
  CompletedLabels out;
  for (const auto& d : demos_) out.ids.push_back(d.id);
  out.demo_count = demos_.size();
  out.ids.insert(out.ids.end(), neighbors_.begin(), neighbors_.end());
  const std::size_t nd = out.demo_count;
  const std::size_t n = out.ids.size();
  out.labels = LabelMatrix(n);

  for (std::size_t i = 0; i < nd; ++i) {
    for (std::size_t j = i + 1; j < nd; ++j) out.labels.set(i, j, 1);
  }
  for (std::size_t i = 0; i < nd; ++i) {
    for (std::size_t j = nd; j < n; ++j) out.labels.set(i, j, labels_.at(out.ids[j]));
  }
  // Every demo carries the same teacher answer for a neighbor, so the rules
  // reduce to comparing the two answers.
  for (std::size_t j = nd; j < n; ++j) {
    const int yj = labels_.at(out.ids[j]);
    for (std::size_t k = j + 1; k < n; ++k) {
      const int yk = labels_.at(out.ids[k]);
      const bool derived = (yj == 0 && yk == 0 && config_.dissimilar_rule) ||
                           (yj == 1 && yk == 1 && config_.similar_rule);
      std::optional<int> teacher;
      if (db && db->contains(out.ids[j]) && db->contains(out.ids[k])) {
        teacher = db->label(out.ids[j], out.ids[k]);
      }
      if (teacher) {
        out.labels.set(j, k, *teacher);
        if (derived && *teacher != 1) {
          out.contradictions.push_back({out.ids[j], out.ids[k], 1, *teacher});
        }
      } else if (derived) {
        out.labels.set(j, k, 1);
      }
    }
  }
  return out;
}

const MetricModel& TeachingSession::finalize(const RelationDatabase& db, const MetricModel& prior,
                                             const TrainingConfig& training) {
  require_not_finalized();
  std::optional<double> eps;
  if (!degenerate_) eps = epsilon_nn();

  if (eps && *eps >= config_.epsilon_star) {
    outcome_ = prior;
    decision_ = Decision::Prior;
    contradictions_.clear();
  } else {
    CompletedLabels completed = complete_labels(&db);
    LabeledSet data;
    data.ids = completed.ids;
    data.labels = completed.labels;
    data.features.resize(static_cast<Eigen::Index>(data.ids.size()),
                         static_cast<Eigen::Index>(kDescriptorDim));
    for (std::size_t r = 0; r < data.ids.size(); ++r) {
      const RelationDescriptor& d =
          r < completed.demo_count ? demo_descriptors_[r] : db.descriptor(data.ids[r]);
      for (std::size_t c = 0; c < kDescriptorDim; ++c) {
        data.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = d[c];
      }
    }
    MetricModel local = train_lmnn(data, training);
    outcome_ = std::move(local);
    decision_ = Decision::Local;
    contradictions_ = std::move(completed.contradictions);
  }
  epsilon_ = eps;
  state_ = SessionState::Finalized;
  return *outcome_;
}

Json TeachingSession::to_json() const {
  Json demos = Json::array();
  for (const auto& d : demos_) demos.push_back(scene_to_json(d));
  Json queries = Json::array();
  for (const auto& q : queries_) queries.push_back({{"demo", q.demo}, {"neighbors", q.neighbors}});
  Json labels = Json::array();
  for (const auto& n : neighbors_) {
    auto it = labels_.find(n);
    if (it != labels_.end()) labels.push_back({{"scene", n}, {"y", it->second}});
  }
  Json contradictions = Json::array();
  for (const auto& c : contradictions_) {
    contradictions.push_back({{"i", c.i}, {"j", c.j}, {"derived", c.derived}, {"teacher", c.teacher}});
  }
  Json j{{"format", "teaching-session-v1"},
         {"id", id_},
         {"state", to_string(state_)},
         {"config",
          {{"queries_per_demo", config_.queries_per_demo},
           {"epsilon_star", config_.epsilon_star},
           {"dissimilar_rule", config_.dissimilar_rule},
           {"similar_rule", config_.similar_rule}}},
         {"voxel", options_.voxel ? Json(*options_.voxel) : Json(nullptr)},
         {"degenerate", degenerate_},
         {"queries_collected", collected_},
         {"demos", demos},
         {"queries", queries},
         {"neighbor_set", neighbors_},
         {"labels", labels},
         {"epsilon_nn", epsilon_ ? Json(*epsilon_) : Json(nullptr)},
         {"decision", decision_ ? Json(to_string(*decision_)) : Json(nullptr)},
         {"contradictions", contradictions}};
  if (outcome_) {
    j["metric"] = {{"id", outcome_->id()}, {"model", metric_to_json(*outcome_)}};
  } else {
    j["metric"] = nullptr;
  }
  return j;
}

TeachingSession TeachingSession::from_json(const Json& j) {
  TeachingSession s;
  try {
    if (j.at("format").get<std::string>() != "teaching-session-v1") {
      throw ParseError("unsupported session format");
    }
    s.id_ = j.at("id").get<std::string>();
    const Json& c = j.at("config");
    s.config_.queries_per_demo = c.at("queries_per_demo").get<std::size_t>();
    s.config_.epsilon_star = c.at("epsilon_star").get<double>();
    s.config_.dissimilar_rule = c.at("dissimilar_rule").get<bool>();
    s.config_.similar_rule = c.at("similar_rule").get<bool>();
    s.config_.validate();
    if (!j.at("voxel").is_null()) s.options_.voxel = j.at("voxel").get<double>();
    for (const auto& d : j.at("demos")) s.demos_.push_back(scene_from_json(d));
    if (s.demos_.empty()) throw ParseError("session has no demonstrations");
    for (const auto& d : s.demos_) {
      s.demo_descriptors_.push_back(compute_descriptor(d, WorldConvention::standard(), s.options_));
    }
    s.degenerate_ = j.at("degenerate").get<bool>();
    s.collected_ = j.at("queries_collected").get<bool>();
    for (const auto& q : j.at("queries")) {
      s.queries_.push_back({q.at("demo").get<std::string>(),
                            q.at("neighbors").get<std::vector<std::string>>()});
    }
    s.neighbors_ = j.at("neighbor_set").get<std::vector<std::string>>();
    for (const auto& l : j.at("labels")) {
      const int y = l.at("y").get<int>();
      if (y != 0 && y != 1) throw ParseError("session label must be 0 or 1");
      s.labels_[l.at("scene").get<std::string>()] = y;
    }
    if (!j.at("epsilon_nn").is_null()) s.epsilon_ = j.at("epsilon_nn").get<double>();
    if (!j.at("decision").is_null()) s.decision_ = decision_from_string(j.at("decision").get<std::string>());
    for (const auto& x : j.at("contradictions")) {
      s.contradictions_.push_back({x.at("i").get<std::string>(), x.at("j").get<std::string>(),
                                   x.at("derived").get<int>(), x.at("teacher").get<int>()});
    }
    if (!j.at("metric").is_null()) s.outcome_ = metric_from_json(j.at("metric").at("model"));
    s.state_ = session_state_from_string(j.at("state").get<std::string>());
  } catch (const Json::exception& e) {
    throw ParseError(std::string("session: ") + e.what());
  }
  if (s.state_ == SessionState::Finalized && !s.outcome_) {
    throw ParseError("finalized session without a metric");
  }
  return s;
}

void save_session(const TeachingSession& session, const std::filesystem::path& path) {
  write_text_file(path, session.to_json().dump(2) + "\n");
}

TeachingSession load_session(const std::filesystem::path& path) {
  return TeachingSession::from_json(read_json_file(path));
}

Labeler tag_oracle(const RelationDatabase& db, std::string tag) {
  return [&db, tag = std::move(tag)](const std::string& scene_id) {
    const auto& tags = db.scene(scene_id).tags;
    return !tags.empty() && tags.front() == tag ? 1 : 0;
  };
}

const MetricModel& run_offline_session(TeachingSession& session, const RelationDatabase& db,
                                       const MetricModel& prior, const Labeler& labeler,
                                       const TrainingConfig& training) {
  if (!session.queries_collected() && !session.degenerate()) {
    try {
      session.collect_queries(db, prior);
    } catch (const ProtocolError&) {
      if (!session.degenerate()) throw;
    }
  }
  std::vector<std::pair<std::string, int>> answers;
  for (const auto& id : session.unlabeled()) answers.emplace_back(id, labeler(id));
  if (!answers.empty()) session.submit_labels(answers);
  return session.finalize(db, prior, training);
}

}  // namespace srel
