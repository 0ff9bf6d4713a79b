#include "doctest.h"
#include "support.hpp"

#include "spatialrel/errors.hpp"
#include "spatialrel/experiments.hpp"

#include <cmath>

using namespace srel;
using synth::RelationKind;

namespace {

RelationDatabase small_db() {
  synth::DatasetSpec spec = synth::DatasetSpec::uniform(6, 21);
  spec.density = 1500;
  return synth::generate_dataset(spec);
}

TrainingConfig quick_training() {
  TrainingConfig t;
  t.max_iters = 30;
  return t;
}

// Expected AP of a uniformly random ranking with R relevant among N.
double expected_random_ap(std::size_t n, std::size_t r) {
  double s = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    s += 1.0 / k + (k - 1.0) / k * (r - 1.0) / (n - 1.0);
  }
  return s / n;
}

}  // namespace

TEST_CASE("retrieval protocol validation") {
  const RelationDatabase db = small_db();
  RetrievalProtocol p;
  p.splits = 0;
  CHECK_THROWS_AS(evaluate_retrieval(db, p), InvalidInput);
  p = {};
  p.train_frac = 1.0;
  CHECK_THROWS_AS(evaluate_retrieval(db, p), InvalidInput);
  p = {};
  p.metrics = {"manhattan"};
  CHECK_THROWS_AS(evaluate_retrieval(db, p), InvalidInput);
  p.metrics = {};
  CHECK_THROWS_AS(evaluate_retrieval(db, p), InvalidInput);
}

TEST_CASE("retrieval scores per split") {
  const RelationDatabase db = small_db();
  RetrievalProtocol p;
  p.splits = 4;
  p.metrics = {"euclidean", "chi-square", "lmnn"};
  p.training = quick_training();
  p.seed = 3;
  const RetrievalReport report = evaluate_retrieval(db, p);
  REQUIRE(report.scores.size() == 3);
  CHECK_THROWS_AS(report.at("kl"), NotFound);

  const auto& e = report.at("euclidean");
  REQUIRE(e.per_split.size() == 4);
  double mean = 0, ss = 0;
  for (double v : e.per_split) mean += v / 4;
  for (double v : e.per_split) ss += (v - mean) * (v - mean);
  CHECK(e.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(e.stddev == doctest::Approx(std::sqrt(ss / 3)).epsilon(1e-12));

  // Each split's Euclidean score is the success rate over its test ids.
  const std::uint64_t base = derive_seed(3, "retrieval.splits");
  for (std::size_t i = 0; i < 4; ++i) {
    const Split s = random_split(db.ids(), 0.75, derive_seed(base, i));
    CHECK(e.per_split[i] ==
          retrieval_success(db, MetricModel(MetricKind::Euclidean), s.test, 5, 3));
  }
  for (const auto& s : report.scores) {
    for (double v : s.per_split) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  const RetrievalReport again = evaluate_retrieval(db, p);
  for (std::size_t m = 0; m < 3; ++m) CHECK(again.scores[m].per_split == report.scores[m].per_split);
}

TEST_CASE("candidate sets") {
  CHECK_THROWS_AS(make_candidates(RelationKind::OnTop, 10, 0, 1500, 1), InvalidInput);
  CHECK_THROWS_AS(make_candidates(RelationKind::OnTop, 10, 11, 1500, 1), InvalidInput);

  const CandidateSet cs = make_candidates(RelationKind::OnTop, 20, 5, 1500, 4);
  CHECK(cs.poses.size() == 20);
  CHECK(cs.relevant.size() == 5);
  CHECK(*cs.relevant.rbegin() < 20);
  REQUIRE(cs.reference.solid.has_value());
  const double top = 0.5 * cs.reference.solid->height();
  for (std::size_t i = 0; i < cs.poses.size(); ++i) {
    const PointCloud placed = transform_cloud(cs.placed, cs.poses[i]);
    CHECK_FALSE(clouds_collide(cs.reference, placed));
    double lo = 1e9;
    for (const auto& p : placed.points) lo = std::min(lo, p.z());
    if (cs.relevant.count(i)) CHECK(lo == doctest::Approx(top).epsilon(1e-9));
  }

  const CandidateSet again = make_candidates(RelationKind::OnTop, 20, 5, 1500, 4);
  CHECK(again.relevant == cs.relevant);
  for (std::size_t i = 0; i < cs.poses.size(); ++i) {
    CHECK(again.poses[i].translation == cs.poses[i].translation);
  }

  const CandidateSet inside = make_candidates(RelationKind::Inside, 12, 3, 1500, 5);
  CHECK(inside.reference.solid->kind == SolidKind::Bowl);
}

TEST_CASE("map rounds") {
  MapProtocol p;
  p.relations = {RelationKind::OnTop, RelationKind::NextTo};
  p.candidates = 12;
  p.relevant = 3;
  p.rounds = 2;
  p.demos_per_round = 3;
  p.prior_per_relation = 4;
  p.repeats = 1;
  p.density = 1500;
  p.teaching.queries_per_demo = 4;
  p.training = quick_training();
  p.seed = 8;

  const MapReport report = evaluate_map(p);
  CHECK(report.relations == std::vector<std::string>{"on-top", "next-to"});
  REQUIRE(report.runs.size() == 1);
  const auto& rounds = report.runs[0].rounds;
  REQUIRE(rounds.size() == 2);
  CHECK(rounds[0].database_size == 24);
  CHECK(rounds[1].database_size == 30);
  for (const auto& r : rounds) {
    REQUIRE(r.ap_learned.size() == 2);
    for (double ap : r.ap_learned) CHECK((ap > 0.0 && ap <= 1.0));
    for (const auto& d : r.decisions) CHECK((d == "prior" || d == "local"));
    CHECK(r.map_euclidean == doctest::Approx((r.ap_euclidean[0] + r.ap_euclidean[1]) / 2));
  }
  CHECK(report.map_learned == doctest::Approx(rounds[1].map_learned));
  CHECK(report.map_euclidean == doctest::Approx(rounds[1].map_euclidean));

  const MapRun direct = evaluate_map_run(p, derive_seed(derive_seed(8, "map.repeats"), 0));
  CHECK(direct.rounds[1].ap_learned == rounds[1].ap_learned);

  p.rounds = 0;
  CHECK_THROWS_AS(evaluate_map(p), InvalidInput);
}

TEST_CASE("random floor") {
  CHECK(random_map_floor(75, 15, 20000, 2) == doctest::Approx(expected_random_ap(75, 15)).epsilon(0.02));
  CHECK(random_map_floor(10, 3, 20000, 2) == doctest::Approx(expected_random_ap(10, 3)).epsilon(0.02));
  CHECK(random_map_floor(5, 5, 10, 2) == doctest::Approx(1.0));
  CHECK_THROWS_AS(random_map_floor(75, 15, 0, 2), InvalidInput);
}
