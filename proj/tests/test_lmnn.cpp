#include "doctest.h"
#include "lmnn_oracle.hpp"
#include "support.hpp"

#include "spatialrel/errors.hpp"
#include "spatialrel/lmnn.hpp"
#include "spatialrel/synth.hpp"

#include <sstream>

using namespace srel;

using namespace testing;

TEST_CASE("config validation") {
  TrainingConfig c;
  CHECK_NOTHROW(c.validate());
  c.max_iters = 0;
  CHECK_NOTHROW(c.validate());
  for (auto mutate : std::vector<void (*)(TrainingConfig&)>{
           [](TrainingConfig& x) { x.k_targets = 0; }, [](TrainingConfig& x) { x.margin = 0; },
           [](TrainingConfig& x) { x.tradeoff = -1; }, [](TrainingConfig& x) { x.initial_step = 0; },
           [](TrainingConfig& x) { x.imposter_refresh = 0; }}) {
    TrainingConfig bad;
    mutate(bad);
    CHECK_THROWS_AS(bad.validate(), InvalidInput);
  }
}

TEST_CASE("two similar examples are each other's target") {
  Eigen::MatrixXd x(2, 2);
  x << 0, 0, 1, 1;
  const auto t = find_target_neighbors(toy_set(x, {0, 0}), MetricModel(MetricKind::Euclidean), 3);
  CHECK(t[0] == std::vector<std::size_t>{1});
  CHECK(t[1] == std::vector<std::size_t>{0});
}

TEST_CASE("unknown labels give an empty set and a warning") {
  LabeledSet s;
  s.features = Eigen::MatrixXd::Zero(3, 2);
  s.features(1, 0) = 1;
  s.features(2, 1) = 1;
  s.labels = LabelMatrix(3);
  s.labels.set(1, 2, 1);
  s.ids = {"a", "b", "c"};
  std::vector<std::string> warnings;
  const auto t = find_target_neighbors(s, MetricModel(MetricKind::Euclidean), 3, &warnings);
  CHECK(t[0].empty());
  CHECK(t[1] == std::vector<std::size_t>{2});
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("a") != std::string::npos);
}

TEST_CASE("target neighbors match exhaustive search") {
  // Six points on a line with hand-planted gaps.
  Eigen::MatrixXd x(6, 1);
  x << 0.0, 0.1, 0.35, 0.9, 2.0, 2.05;
  const std::vector<int> cls{0, 0, 1, 0, 1, 0};
  const LabeledSet s = toy_set(x, cls);
  for (std::size_t k : {1u, 2u, 3u}) {
    const auto t = find_target_neighbors(s, MetricModel(MetricKind::Euclidean), k);
    for (std::size_t i = 0; i < 6; ++i) {
      std::vector<std::pair<double, std::size_t>> all;
      for (std::size_t j = 0; j < 6; ++j) {
        if (j != i && cls[j] == cls[i]) all.emplace_back(std::abs(x(i, 0) - x(j, 0)), j);
      }
      std::sort(all.begin(), all.end());
      std::vector<std::size_t> want;
      for (std::size_t r = 0; r < std::min(k, all.size()); ++r) want.push_back(all[r].second);
      CHECK(t[i] == want);
    }
  }
  // Point 0: similar peers 1 (0.1), 3 (0.9), 5 (2.05).
  CHECK(find_target_neighbors(s, MetricModel(MetricKind::Euclidean), 2)[0] ==
        std::vector<std::size_t>{1, 3});
}

TEST_CASE("hand-evaluated losses") {
  TrainingConfig c;
  Eigen::MatrixXd x(2, 1);
  x << 0, 0;
  // Coincident target neighbors and no dissimilar peer.
  CHECK(lmnn_loss(Eigen::MatrixXd::Identity(1, 1), {{1}, {0}}, c, toy_set(x, {0, 0})) == 0.0);

  // d(i,j) = 0 and d(i,k)^2 = zeta / 2 for one triple.
  c.margin = 0.8;
  Eigen::MatrixXd y(3, 1);
  y << 0, 0, std::sqrt(0.4);
  LabeledSet s = toy_set(y, {0, 0, 1});
  const TargetNeighbors only_first{{1}, {}, {}};
  CHECK(lmnn_loss(Eigen::MatrixXd::Identity(1, 1), only_first, c, s) ==
        doctest::Approx(c.margin / 2).epsilon(1e-12));
}

TEST_CASE("loss equals the triple loop oracle") {
  Rng rng(31);
  TrainingConfig c;
  c.tradeoff = 0.7;
  c.margin = 0.5;
  for (int t = 0; t < 10; ++t) {
    const LabeledSet s = random_set(rng, 20, 5, 3);
    const auto targets = find_target_neighbors(s, MetricModel(MetricKind::Euclidean), 3);
    const Eigen::MatrixXd L = random_map(rng, 5);
    CHECK(lmnn_loss(L, targets, c, s) ==
          doctest::Approx(oracle_loss(L, targets, c, s)).epsilon(1e-8));
    CHECK(active_imposters(L, targets, c, s).size() == oracle_violations(L, targets, c, s));
  }
}

TEST_CASE("gradient matches central differences") {
  Rng rng(32);
  TrainingConfig c;
  for (int t = 0; t < 5; ++t) {
    const LabeledSet s = random_set(rng, 15, 4, 3);
    const auto targets = find_target_neighbors(s, MetricModel(MetricKind::Euclidean), 2);
    const Eigen::MatrixXd L = random_map(rng, 4);
    const auto imp = active_imposters(L, targets, c, s);
    const Eigen::MatrixXd g = lmnn_gradient(L, targets, imp, c, s);
    Eigen::MatrixXd fd(4, 4);
    const double h = 1e-6;
    for (Eigen::Index e = 0; e < L.size(); ++e) {
      Eigen::MatrixXd lp = L, lm = L;
      lp.data()[e] += h;
      lm.data()[e] -= h;
      fd.data()[e] = (lmnn_loss(lp, targets, c, s) - lmnn_loss(lm, targets, c, s)) / (2 * h);
    }
    CHECK((fd - g).norm() / g.norm() < 1e-4);
  }
}

TEST_CASE("no-op training returns the identity") {
  Rng rng(33);
  const LabeledSet s = random_set(rng, 12, 3, 2);
  TrainingConfig c;
  c.max_iters = 0;
  const MetricModel m = train_lmnn(s, c);
  CHECK(m.kind() == MetricKind::Mahalanobis);
  CHECK(m.map() == Eigen::MatrixXd::Identity(3, 3));
  const MetricModel e(MetricKind::Euclidean);
  const std::vector<double> a{0.1, 0.2, 0.3}, b{-1, 0.5, 2};
  CHECK(std::abs(m.distance(a, b) - e.distance(a, b)) < 1e-12);
}

TEST_CASE("separating two elongated clusters") {
  // Classes lie on two parallel lines, overlapping along x.
  Rng rng(34);
  Eigen::MatrixXd x(40, 2);
  std::vector<int> cls;
  for (Eigen::Index i = 0; i < 40; ++i) {
    const int c = static_cast<int>(i % 2);
    cls.push_back(c);
    x(i, 0) = rng.uniform(-3, 3);
    x(i, 1) = 0.5 * c;
  }
  const LabeledSet s = toy_set(x, cls);
  TrainingConfig c;
  c.max_iters = 500;
  TrainingState state;
  const MetricModel m = train_lmnn(s, c, &state);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2, 2);
  CHECK(oracle_violations(I, state.targets, c, s) > 0);
  CHECK(oracle_violations(m.map(), state.targets, c, s) == 0);
  CHECK(count_margin_violations(m, state.targets, c, s) == 0);
}

TEST_CASE("accepted losses never increase and the log is complete") {
  Rng rng(35);
  const LabeledSet s = random_set(rng, 30, 6, 3);
  TrainingConfig c;
  c.max_iters = 60;
  TrainingState state;
  std::ostringstream log;
  const MetricModel m = train_lmnn(s, c, &state, &log);
  REQUIRE(state.loss_trace.size() >= 2);
  for (std::size_t i = 1; i < state.loss_trace.size(); ++i) {
    CHECK(state.loss_trace[i] <= state.loss_trace[i - 1]);
  }
  CHECK(state.loss_trace.back() < state.loss_trace.front());
  CHECK(lmnn_loss(m.map(), state.targets, c, s) == doctest::Approx(state.loss_trace.back()));

  // "iter loss step accepted", starting with the initial loss.
  std::istringstream lines(log.str());
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    std::istringstream f(line);
    std::size_t iter;
    double loss, step;
    int accepted;
    REQUIRE(static_cast<bool>(f >> iter >> loss >> step >> accepted));
    CHECK(iter == count);
    CHECK((accepted == 0 || accepted == 1));
    ++count;
  }
  CHECK(count == state.log.size() + 1);
  for (const auto& t : state.imposters) {
    CHECK(s.labels.get(t.i, t.k) == 0);
    CHECK(s.labels.get(t.i, t.j) == 1);
  }
}

TEST_CASE("deterministic") {
  Rng rng(36);
  const LabeledSet s = random_set(rng, 25, 5, 3);
  TrainingConfig c;
  c.max_iters = 40;
  CHECK(train_lmnn(s, c) == train_lmnn(s, c));
}

TEST_CASE("labels without a similar pair are rejected") {
  Rng rng(37);
  LabeledSet s = random_set(rng, 5, 2, 1);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = i + 1; j < 5; ++j) s.labels.set(i, j, 0);
  }
  CHECK_THROWS_AS(train_lmnn(s, TrainingConfig{}), TrainingError);
  LabeledSet one = random_set(rng, 1, 2, 1);
  CHECK_THROWS_AS(train_lmnn(one, TrainingConfig{}), TrainingError);
}

TEST_CASE("unknown labels contribute nothing") {
  Rng rng(38);
  LabeledSet s = random_set(rng, 12, 3, 2);
  const auto targets = find_target_neighbors(s, MetricModel(MetricKind::Euclidean), 2);
  TrainingConfig c;
  const Eigen::MatrixXd L = random_map(rng, 3);
  // Forgetting a dissimilar label removes exactly its hinge terms.
  std::size_t i = 0, k = 0;
  for (k = 1; k < s.size(); ++k) {
    if (s.labels.get(i, k) == 0) break;
  }
  REQUIRE(k < s.size());
  LabeledSet forgotten = s;
  forgotten.labels = LabelMatrix(s.size());
  for (std::size_t a = 0; a < s.size(); ++a) {
    for (std::size_t b = a + 1; b < s.size(); ++b) {
      if ((a == i && b == k) || (a == k && b == i)) continue;
      forgotten.labels.set(a, b, *s.labels.get(a, b));
    }
  }
  double removed = 0;
  for (std::size_t j : targets[i]) {
    removed += std::max(0.0, c.margin + sqdist(L, s, i, j) - sqdist(L, s, i, k));
  }
  for (std::size_t j : targets[k]) {
    removed += std::max(0.0, c.margin + sqdist(L, s, k, j) - sqdist(L, s, k, i));
  }
  CHECK(lmnn_loss(L, targets, c, forgotten) ==
        doctest::Approx(lmnn_loss(L, targets, c, s) - c.tradeoff * removed).epsilon(1e-10));
}

TEST_CASE("trained model survives a save and load round trip") {
  RelationDatabase db = synth::generate_dataset(synth::DatasetSpec::uniform(6, 41));
  TrainingConfig c;
  c.max_iters = 30;
  const MetricModel m = train_lmnn(db, c);
  testing::TempDir dir;
  save_metric(m, dir / "m.json");
  const MetricModel back = load_metric(dir / "m.json");
  CHECK(back.map() == m.map());
  const auto ids = db.ids();
  for (std::size_t p = 0; p < 20; ++p) {
    const auto& probe = db.descriptor(ids[p % ids.size()]);
    CHECK(knn_query(db, m, probe, 10).ids == knn_query(db, back, probe, 10).ids);
  }
}

TEST_CASE("database training uses similarity labels only") {
  // Renaming every relation tag leaves the learned map unchanged.
  RelationDatabase db = synth::generate_dataset(synth::DatasetSpec::uniform(4, 42));
  RelationDatabase renamed(db.options());
  for (const auto& id : db.ids()) {
    Scene s = db.scene(id);
    for (auto& tag : s.tags) tag = "renamed-" + tag;
    renamed.add_scene(std::move(s));
  }
  for (const auto& l : db.labels()) renamed.set_label(l.i, l.j, l.y);
  TrainingConfig c;
  c.max_iters = 20;
  CHECK(train_lmnn(db, c) == train_lmnn(renamed, c));
}
