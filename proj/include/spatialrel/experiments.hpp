#pragma once

#include "spatialrel/lmnn.hpp"
#include "spatialrel/posesearch.hpp"
#include "spatialrel/relationdb.hpp"
#include "spatialrel/synth.hpp"
#include "spatialrel/teaching.hpp"

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace srel {

// Retrieval over repeated random splits: each metric is scored by the share
// of test probes with at least `threshold` similar scenes among their k
// nearest training scenes. "lmnn" trains on each split's training part.
struct RetrievalProtocol {
  std::size_t splits = 15;
  double train_frac = 0.75;
  std::size_t k = 5;
  std::size_t threshold = 3;
  std::vector<std::string> metrics{"euclidean", "lmnn"};
  TrainingConfig training;
  std::uint64_t seed = 0;
};

struct MetricScores {
  std::string metric;
  std::vector<double> per_split;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
};

struct RetrievalReport {
  std::vector<MetricScores> scores;
  const MetricScores& at(const std::string& metric) const;
};

RetrievalReport evaluate_retrieval(const RelationDatabase& db, const RetrievalProtocol& protocol);

// Pose ranking in rounds: for each evaluated relation a fresh object pair
// gets `candidates` poses, `relevant` of them realizing the relation and the
// rest drawn from the other relations the pair admits. Every round brings
// `demos_per_round` new demonstrations per relation; a teaching session with
// a tag oracle picks the prior or a local metric, which ranks the candidates
// by demo loss over those demonstrations (Euclidean ranks them with the same
// demos). The demonstrations and their query labels then join the database
// and the prior metric is retrained. The whole run repeats with independent
// seeds; the summary averages every round after the first over all repeats.
struct MapProtocol {
  std::vector<synth::RelationKind> relations{
      synth::RelationKind::OnTop, synth::RelationKind::Inside, synth::RelationKind::NextTo,
      synth::RelationKind::Inclined, synth::RelationKind::OnTopCorner};
  std::size_t candidates = 75;
  std::size_t relevant = 15;
  std::size_t rounds = 6;
  std::size_t demos_per_round = 5;
  std::size_t prior_per_relation = 10;
  std::size_t repeats = 20;
  double density = 3000.0;
  TeachingConfig teaching;
  TrainingConfig training;
  std::uint64_t seed = 0;
};

struct MapRound {
  std::size_t round = 0;
  std::size_t database_size = 0;  // before this round's demos are added
  std::vector<double> ap_learned;  // per evaluated relation, session outcome
  std::vector<double> ap_prior;    // prior metric entering the round
  std::vector<double> ap_euclidean;
  std::vector<double> epsilon_nn;
  std::vector<std::string> decisions;
  double map_learned = 0.0;
  double map_prior = 0.0;
  double map_euclidean = 0.0;
};

struct MapRun {
  std::uint64_t seed = 0;
  std::vector<MapRound> rounds;
};

struct MapReport {
  std::vector<std::string> relations;
  std::vector<MapRun> runs;
  double map_learned = 0.0;
  double map_prior = 0.0;
  double map_euclidean = 0.0;
};

/// One object pair, its candidate poses and the indices that realize the
/// relation.
struct CandidateSet {
  synth::RelationKind relation;
  PointCloud reference;
  PointCloud placed;
  std::vector<Pose> poses;
  std::set<std::size_t> relevant;
};

CandidateSet make_candidates(synth::RelationKind relation, std::size_t count, std::size_t relevant,
                             double density, std::uint64_t seed);

MapReport evaluate_map(const MapProtocol& protocol);

/// One repeat of the round protocol with `seed` in place of the protocol's.
MapRun evaluate_map_run(const MapProtocol& protocol, std::uint64_t seed);

/// Mean average precision of uniformly shuffled rankings.
double random_map_floor(std::size_t candidates, std::size_t relevant, std::size_t trials,
                        std::uint64_t seed);

}  // namespace srel
