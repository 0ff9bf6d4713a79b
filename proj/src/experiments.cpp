#include "spatialrel/experiments.hpp"

#include "spatialrel/errors.hpp"
#include "spatialrel/random.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace srel {

using synth::RelationKind;

const MetricScores& RetrievalReport::at(const std::string& metric) const {
  for (const auto& s : scores) {
    if (s.metric == metric) return s;
  }
  throw NotFound("no scores for metric '" + metric + "'");
}

namespace {

void summarize(MetricScores& s) {
  const double n = static_cast<double>(s.per_split.size());
  s.mean = std::accumulate(s.per_split.begin(), s.per_split.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : s.per_split) ss += (v - s.mean) * (v - s.mean);
  s.stddev = s.per_split.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

RetrievalReport evaluate_retrieval(const RelationDatabase& db, const RetrievalProtocol& protocol) {
  if (protocol.splits == 0) throw InvalidInput("at least one split is required");
  if (!(protocol.train_frac > 0.0 && protocol.train_frac < 1.0)) {
    throw InvalidInput("train fraction must lie in (0, 1)");
  }
  if (protocol.metrics.empty()) throw InvalidInput("no metrics to evaluate");
  for (const auto& m : protocol.metrics) {
    if (m != "lmnn") metric_kind_from_string(m);
  }

  RetrievalReport report;
  for (const auto& m : protocol.metrics) report.scores.push_back({m, {}, 0.0, 0.0});
  const auto ids = db.ids();
  const std::uint64_t split_base = derive_seed(protocol.seed, "retrieval.splits");
  for (std::size_t i = 0; i < protocol.splits; ++i) {
    const Split split = random_split(ids, protocol.train_frac, derive_seed(split_base, i));
    for (auto& s : report.scores) {
      MetricModel model(MetricKind::Euclidean);
      if (s.metric == "lmnn") {
        TrainingConfig cfg = protocol.training;
        cfg.seed = derive_seed(derive_seed(protocol.seed, "retrieval.lmnn"), i);
        model = train_lmnn(labeled_set(db, split.train), cfg);
      } else {
        model = MetricModel(metric_kind_from_string(s.metric));
      }
      s.per_split.push_back(
          retrieval_success(db, model, split.test, protocol.k, protocol.threshold));
    }
  }
  for (auto& s : report.scores) summarize(s);
  return report;
}

CandidateSet make_candidates(RelationKind relation, std::size_t count, std::size_t relevant,
                             double density, std::uint64_t seed) {
  if (relevant == 0 || relevant > count) throw InvalidInput("relevant count must lie in [1, count]");
  Rng rng(derive_seed(seed, "candidates.pair"));
  synth::ShapeSpec ref_spec, placed_spec;
  bool found = false;
  for (int attempt = 0; attempt < 64 && !found; ++attempt) {
    std::tie(ref_spec, placed_spec) = synth::draw_shapes(relation, rng, density);
    try {
      synth::RelationSpec probe{relation, 0.0, 0.0, 0};
      synth::generate_scene(ref_spec, placed_spec, probe);
      found = true;
    } catch (const GenerationError&) {
    }
  }
  if (!found) throw GenerationError("no object pair realizes '" + synth::to_string(relation) + "'");

  CandidateSet out;
  out.relation = relation;
  out.reference = synth::sample_surface(ref_spec);
  out.placed = synth::sample_surface(placed_spec);
  const Solid ref_solid = ref_spec.solid();
  const Solid placed_solid = placed_spec.solid();

  auto try_pose = [&](RelationKind kind, std::uint64_t s) -> std::optional<Pose> {
    synth::RelationSpec spec;
    spec.kind = kind;
    spec.seed = s;
    for (int attempt = 0; attempt < 16; ++attempt) {
      spec.seed = derive_seed(s, static_cast<std::uint64_t>(attempt));
      Pose pose;
      try {
        pose = synth::relation_pose(ref_solid, placed_solid, spec);
      } catch (const GenerationError&) {
        return std::nullopt;
      }
      if (!clouds_collide(out.reference, transform_cloud(out.placed, pose), kDefaultCollisionEpsilon)) {
        return pose;
      }
    }
    return std::nullopt;
  };

  std::vector<std::pair<Pose, bool>> pool;
  const std::uint64_t rel_seed = derive_seed(seed, "candidates.relevant");
  for (std::size_t i = 0; i < relevant; ++i) {
    auto pose = try_pose(relation, derive_seed(rel_seed, i));
    if (!pose) throw GenerationError("could not place relevant candidate " + std::to_string(i));
    pool.emplace_back(*pose, true);
  }
  std::vector<RelationKind> others;
  for (auto k : synth::all_relations()) {
    if (k != relation) others.push_back(k);
  }
  const std::uint64_t other_seed = derive_seed(seed, "candidates.distractor");
  std::size_t cursor = 0;
  for (std::size_t i = relevant; i < count;) {
    if (others.empty()) throw GenerationError("no distractor relation fits the object pair");
    const std::size_t slot = cursor % others.size();
    auto pose = try_pose(others[slot], derive_seed(other_seed, i));
    if (!pose) {
      others.erase(others.begin() + static_cast<std::ptrdiff_t>(slot));
      continue;
    }
    pool.emplace_back(*pose, false);
    ++cursor;
    ++i;
  }

  Rng shuffle(derive_seed(seed, "candidates.order"));
  for (std::size_t i = pool.size(); i > 1; --i) {
    std::swap(pool[i - 1], pool[shuffle.below(i)]);
  }
  for (std::size_t i = 0; i < pool.size(); ++i) {
    out.poses.push_back(pool[i].first);
    if (pool[i].second) out.relevant.insert(i);
  }
  return out;
}

namespace {

void check_map_protocol(const MapProtocol& protocol) {
  if (protocol.relations.empty()) throw InvalidInput("no relations to evaluate");
  if (protocol.rounds == 0 || protocol.demos_per_round == 0 || protocol.repeats == 0) {
    throw InvalidInput("rounds, demos per round and repeats must be positive");
  }
}

}  // namespace

MapRun evaluate_map_run(const MapProtocol& protocol, std::uint64_t seed) {
  check_map_protocol(protocol);
  synth::DatasetSpec prior_spec;
  for (auto k : synth::all_relations()) prior_spec.counts[k] = protocol.prior_per_relation;
  prior_spec.seed = derive_seed(seed, "map.prior");
  prior_spec.density = protocol.density;
  prior_spec.id_prefix = "prior";
  RelationDatabase db = synth::generate_dataset(prior_spec);

  MapRun run;
  run.seed = seed;
  std::vector<CandidateSet> sets;
  for (auto k : protocol.relations) {
    sets.push_back(make_candidates(k, protocol.candidates, protocol.relevant, protocol.density,
                                   derive_seed(seed, "map.candidates." + synth::to_string(k))));
  }
  const MetricModel euclidean(MetricKind::Euclidean);
  TrainingConfig prior_cfg = protocol.training;
  prior_cfg.seed = derive_seed(seed, "map.prior.lmnn");
  MetricModel prior = train_lmnn(db, prior_cfg);

  for (std::size_t round = 1; round <= protocol.rounds; ++round) {
    MapRound mr;
    mr.round = round;
    mr.database_size = db.size();
    std::vector<TeachingSession> sessions;
    for (std::size_t r = 0; r < protocol.relations.size(); ++r) {
      const auto kind = protocol.relations[r];
      const std::string tag = synth::to_string(kind);
      const std::uint64_t base = derive_seed(seed, "map.demos." + tag);
      std::vector<Scene> demos;
      for (std::size_t j = 0; j < protocol.demos_per_round; ++j) {
        char id[96];
        std::snprintf(id, sizeof(id), "demo-%s-r%zu-%zu", tag.c_str(), round, j);
        demos.push_back(synth::random_scene(kind, derive_seed(base, round * 1000 + j), id,
                                            protocol.density));
      }
      TeachingSession session("map-" + tag + "-r" + std::to_string(round), std::move(demos),
                              protocol.teaching, db.options());
      TrainingConfig local_cfg = protocol.training;
      local_cfg.seed = derive_seed(base, round);
      const MetricModel& learned =
          run_offline_session(session, db, prior, tag_oracle(db, tag), local_cfg);
      const auto& cs = sets[r];
      mr.ap_learned.push_back(rank_and_map(cs.reference, cs.placed, cs.poses, cs.relevant, learned,
                                           session.demo_descriptors())
                                  .average_precision);
      mr.ap_prior.push_back(rank_and_map(cs.reference, cs.placed, cs.poses, cs.relevant, prior,
                                         session.demo_descriptors())
                                .average_precision);
      mr.ap_euclidean.push_back(rank_and_map(cs.reference, cs.placed, cs.poses, cs.relevant,
                                             euclidean, session.demo_descriptors())
                                    .average_precision);
      mr.epsilon_nn.push_back(session.recorded_epsilon().value_or(0.0));
      mr.decisions.push_back(to_string(*session.decision()));
      sessions.push_back(std::move(session));
    }
    // The round's demonstrations and the oracle's answers extend the database.
    for (const auto& session : sessions) {
      for (const auto& d : session.demos()) db.add_scene(d);
      const auto& demos = session.demos();
      for (std::size_t a = 0; a < demos.size(); ++a) {
        for (std::size_t b = a + 1; b < demos.size(); ++b) db.set_label(demos[a].id, demos[b].id, 1);
        for (const auto& [scene, y] : session.teacher_labels()) db.set_label(demos[a].id, scene, y);
      }
    }
    prior_cfg.seed = derive_seed(seed, round);
    prior = train_lmnn(db, prior_cfg);
    mr.map_learned = mean_of(mr.ap_learned);
    mr.map_prior = mean_of(mr.ap_prior);
    mr.map_euclidean = mean_of(mr.ap_euclidean);
    run.rounds.push_back(std::move(mr));
  }
  return run;
}

MapReport evaluate_map(const MapProtocol& protocol) {
  check_map_protocol(protocol);
  MapReport report;
  for (auto k : protocol.relations) report.relations.push_back(synth::to_string(k));
  const std::uint64_t base = derive_seed(protocol.seed, "map.repeats");
  double learned = 0.0, prior = 0.0, euclidean = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < protocol.repeats; ++r) {
    report.runs.push_back(evaluate_map_run(protocol, derive_seed(base, r)));
    const auto& rounds = report.runs.back().rounds;
    for (std::size_t i = rounds.size() > 1 ? 1 : 0; i < rounds.size(); ++i) {
      learned += rounds[i].map_learned;
      prior += rounds[i].map_prior;
      euclidean += rounds[i].map_euclidean;
      ++n;
    }
  }
  report.map_learned = learned / static_cast<double>(n);
  report.map_prior = prior / static_cast<double>(n);
  report.map_euclidean = euclidean / static_cast<double>(n);
  return report;
}

double random_map_floor(std::size_t candidates, std::size_t relevant, std::size_t trials,
                        std::uint64_t seed) {
  if (trials == 0) throw InvalidInput("trials must be positive");
  Rng rng(seed);
  std::vector<std::size_t> order(candidates);
  std::set<std::size_t> rel;
  for (std::size_t i = 0; i < relevant; ++i) rel.insert(i);
  double sum = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    sum += average_precision(order, rel);
  }
  return sum / static_cast<double>(trials);
}

}  // namespace srel
