#include "spatialrel/lmnn.hpp"

#include "spatialrel/errors.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace srel {

namespace {

// Squared mapped distances between all rows.
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& map, const Eigen::MatrixXd& features) {
  const Eigen::MatrixXd z = features * map.transpose();
  const Eigen::Index n = z.rows();
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    d(a, a) = 0.0;
    for (Eigen::Index b = a + 1; b < n; ++b) {
      const double v = (z.row(a) - z.row(b)).squaredNorm();
      d(a, b) = v;
      d(b, a) = v;
    }
  }
  return d;
}

std::vector<std::vector<std::size_t>> dissimilar_lists(const LabeledSet& data) {
  const std::size_t n = data.size();
  std::vector<std::vector<std::size_t>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      if (data.labels.get(i, k) == 0) out[i].push_back(k);
    }
  }
  return out;
}

void check_shapes(const Eigen::MatrixXd& map, const LabeledSet& data) {
  if (map.rows() != map.cols() || map.cols() != data.features.cols()) {
    throw InvalidInput("map dimension does not match the features");
  }
  if (data.labels.size() != data.size()) throw InvalidInput("label matrix size mismatch");
}

}  // namespace

void TrainingConfig::validate() const {
  if (k_targets == 0) throw InvalidInput("k_targets must be positive");
  if (!(margin > 0.0)) throw InvalidInput("margin must be positive");
  if (!(tradeoff > 0.0)) throw InvalidInput("tradeoff must be positive");
  if (!(initial_step > 0.0)) throw InvalidInput("initial step must be positive");
  if (imposter_refresh == 0) throw InvalidInput("imposter refresh period must be positive");
}

LabeledSet labeled_set(const RelationDatabase& db, const std::vector<std::string>& ids_in) {
  LabeledSet out;
  out.ids = ids_in.empty() ? db.ids() : ids_in;
  const std::size_t n = out.ids.size();
  out.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kDescriptorDim));
  out.labels = LabelMatrix(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& d = db.descriptor(out.ids[i]);
    for (std::size_t c = 0; c < kDescriptorDim; ++c) {
      out.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = d[c];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (auto y = db.label(out.ids[i], out.ids[j])) out.labels.set(i, j, *y);
    }
  }
  return out;
}

TargetNeighbors find_target_neighbors(const LabeledSet& data, const MetricModel& model,
                                      std::size_t k, std::vector<std::string>* warnings) {
  const std::size_t n = data.size();
  TargetNeighbors out(n);
  std::vector<std::vector<double>> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = data.features.row(static_cast<Eigen::Index>(i));
    rows[i].reserve(static_cast<std::size_t>(r.size()));
    for (Eigen::Index c = 0; c < r.size(); ++c) rows[i].push_back(r[c]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::size_t>> similar;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && data.labels.get(i, j) == 1) {
        similar.emplace_back(model.distance(rows[i], rows[j]), j);
      }
    }
    if (similar.empty()) {
      if (warnings) {
        warnings->push_back("example " + (i < data.ids.size() ? data.ids[i] : std::to_string(i)) +
                            " has no labeled-similar peer; excluded from the pull term");
      }
      continue;
    }
    std::sort(similar.begin(), similar.end());
    const std::size_t take = std::min(k, similar.size());
    for (std::size_t t = 0; t < take; ++t) out[i].push_back(similar[t].second);
  }
  return out;
}

TargetNeighbors find_target_neighbors(const RelationDatabase& db, const MetricModel& model,
                                      std::size_t k, std::vector<std::string>* warnings) {
  return find_target_neighbors(labeled_set(db), model, k, warnings);
}

double lmnn_loss(const Eigen::MatrixXd& map, const TargetNeighbors& targets,
                 const TrainingConfig& config, const LabeledSet& data) {
  check_shapes(map, data);
  const Eigen::MatrixXd d = squared_distances(map, data.features);
  const auto dissimilar = dissimilar_lists(data);
  double pull = 0.0;
  double push = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t j : targets[i]) {
      const double dij = d(ii, static_cast<Eigen::Index>(j));
      pull += dij;
      for (std::size_t k : dissimilar[i]) {
        push += std::max(0.0, config.margin + dij - d(ii, static_cast<Eigen::Index>(k)));
      }
    }
  }
  return pull + config.tradeoff * push;
}

double lmnn_loss(const TrainingState& state, const TrainingConfig& config, const LabeledSet& data) {
  return lmnn_loss(state.map, state.targets, config, data);
}

std::vector<ImposterTriple> active_imposters(const Eigen::MatrixXd& map,
                                             const TargetNeighbors& targets,
                                             const TrainingConfig& config,
                                             const LabeledSet& data) {
  check_shapes(map, data);
  const Eigen::MatrixXd d = squared_distances(map, data.features);
  const auto dissimilar = dissimilar_lists(data);
  std::vector<ImposterTriple> out;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t j : targets[i]) {
      const double dij = d(ii, static_cast<Eigen::Index>(j));
      for (std::size_t k : dissimilar[i]) {
        if (config.margin + dij - d(ii, static_cast<Eigen::Index>(k)) > 0.0) {
          out.push_back({i, j, k});
        }
      }
    }
  }
  return out;
}

Eigen::MatrixXd lmnn_gradient(const Eigen::MatrixXd& map, const TargetNeighbors& targets,
                              const std::vector<ImposterTriple>& imposters,
                              const TrainingConfig& config, const LabeledSet& data) {
  check_shapes(map, data);
  const auto n = static_cast<Eigen::Index>(data.size());
  // sum_w w (x_a - x_b)(x_a - x_b)^T == X^T S X with S the weighted Laplacian.
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
  auto add = [&s](std::size_t a_, std::size_t b_, double w) {
    const auto a = static_cast<Eigen::Index>(a_);
    const auto b = static_cast<Eigen::Index>(b_);
    s(a, a) += w;
    s(b, b) += w;
    s(a, b) -= w;
    s(b, a) -= w;
  };
  for (std::size_t i = 0; i < targets.size(); ++i) {
    for (std::size_t j : targets[i]) add(i, j, 1.0);
  }
  for (const auto& t : imposters) {
    add(t.i, t.j, config.tradeoff);
    add(t.i, t.k, -config.tradeoff);
  }
  const Eigen::MatrixXd scatter = data.features.transpose() * (s * data.features);
  return 2.0 * map * scatter;
}

std::size_t count_margin_violations(const MetricModel& model, const TargetNeighbors& targets,
                                    const TrainingConfig& config, const LabeledSet& data) {
  const Eigen::MatrixXd map = model.kind() == MetricKind::Mahalanobis
                                  ? model.map()
                                  : Eigen::MatrixXd::Identity(data.features.cols(),
                                                              data.features.cols());
  return active_imposters(map, targets, config, data).size();
}

MetricModel train_lmnn(const LabeledSet& data, const TrainingConfig& config,
                       TrainingState* state_out, std::ostream* log) {
  config.validate();
  const std::size_t n = data.size();
  if (n < 2) throw TrainingError("training needs at least two examples");
  if (data.labels.size() != n) throw TrainingError("label matrix size mismatch");
  bool any_similar = false;
  for (std::size_t i = 0; i < n && !any_similar; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (data.labels.get(i, j) == 1) {
        any_similar = true;
        break;
      }
    }
  }
  if (!any_similar) throw TrainingError("label set has no similar pair");

  const auto dim = data.features.cols();
  TrainingState state;
  state.map = Eigen::MatrixXd::Identity(dim, dim);
  state.targets = find_target_neighbors(data, MetricModel(MetricKind::Euclidean),
                                        config.k_targets, &state.warnings);
  double loss = lmnn_loss(state, config, data);
  state.loss_trace.push_back(loss);
  state.imposters = active_imposters(state.map, state.targets, config, data);
  if (log) *log << "0 " << loss << " " << config.initial_step << " 1\n";

  double step = config.initial_step;
  for (std::size_t iter = 1; iter <= config.max_iters; ++iter) {
    if (loss <= 0.0) break;
    const Eigen::MatrixXd grad =
        lmnn_gradient(state.map, state.targets, state.imposters, config, data);
    if (!grad.allFinite() || grad.squaredNorm() == 0.0) break;
    const Eigen::MatrixXd candidate = state.map - step * grad;
    const double candidate_loss = lmnn_loss(candidate, state.targets, config, data);
    const bool accepted = std::isfinite(candidate_loss) && candidate_loss <= loss;
    state.log.push_back({iter, accepted ? candidate_loss : loss, step, accepted});
    if (log) *log << iter << " " << candidate_loss << " " << step << " " << (accepted ? 1 : 0) << "\n";
    if (accepted) {
      state.map = candidate;
      loss = candidate_loss;
      state.loss_trace.push_back(loss);
      step *= 1.2;
      if (iter % config.imposter_refresh == 0) {
        state.imposters = active_imposters(state.map, state.targets, config, data);
      }
    } else {
      step *= 0.5;
      state.imposters = active_imposters(state.map, state.targets, config, data);
      if (step < 1e-14) break;
    }
  }

  MetricModel model = MetricModel::mahalanobis(state.map);
  if (state_out) *state_out = std::move(state);
  return model;
}

MetricModel train_lmnn(const RelationDatabase& db, const TrainingConfig& config,
                       TrainingState* state_out, std::ostream* log) {
  return train_lmnn(labeled_set(db), config, state_out, log);
}

}  // namespace srel
