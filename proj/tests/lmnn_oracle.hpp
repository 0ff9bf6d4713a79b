#pragma once

// Labeled toy sets and scalar oracles for the metric-learning objective.

#include "spatialrel/lmnn.hpp"
#include "spatialrel/random.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace testing {

using srel::LabeledSet;
using srel::LabelMatrix;
using srel::Rng;
using srel::TargetNeighbors;
using srel::TrainingConfig;

inline LabeledSet toy_set(const Eigen::MatrixXd& x, const std::vector<int>& cls) {
  LabeledSet s;
  s.features = x;
  s.labels = LabelMatrix(cls.size());
  for (std::size_t i = 0; i < cls.size(); ++i) {
    s.ids.push_back("x" + std::to_string(i));
    for (std::size_t j = i + 1; j < cls.size(); ++j) s.labels.set(i, j, cls[i] == cls[j] ? 1 : 0);
  }
  return s;
}

inline LabeledSet random_set(Rng& rng, std::size_t n, Eigen::Index dim, int classes) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), dim);
  std::vector<int> cls;
  for (std::size_t i = 0; i < n; ++i) {
    cls.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(classes))));
    for (Eigen::Index c = 0; c < dim; ++c) x(static_cast<Eigen::Index>(i), c) = rng.uniform(-1, 1);
  }
  return toy_set(x, cls);
}

inline Eigen::MatrixXd random_map(Rng& rng, Eigen::Index dim) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Identity(dim, dim);
  for (Eigen::Index i = 0; i < L.size(); ++i) L.data()[i] += rng.uniform(-0.3, 0.3);
  return L;
}

inline double sqdist(const Eigen::MatrixXd& L, const LabeledSet& s, std::size_t a, std::size_t b) {
  const Eigen::VectorXd d = L * (s.features.row(static_cast<Eigen::Index>(a)) -
                                 s.features.row(static_cast<Eigen::Index>(b)))
                                    .transpose();
  return d.squaredNorm();
}

// Scalar triple enumeration of the objective.
inline double oracle_loss(const Eigen::MatrixXd& L, const TargetNeighbors& t, const TrainingConfig& c,
                   const LabeledSet& s) {
  double pull = 0, push = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j : t[i]) {
      pull += sqdist(L, s, i, j);
      for (std::size_t k = 0; k < s.size(); ++k) {
        if (s.labels.get(i, k) != 0) continue;
        push += std::max(0.0, c.margin + sqdist(L, s, i, j) - sqdist(L, s, i, k));
      }
    }
  }
  return pull + c.tradeoff * push;
}

inline std::size_t oracle_violations(const Eigen::MatrixXd& L, const TargetNeighbors& t,
                              const TrainingConfig& c, const LabeledSet& s) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j : t[i]) {
      for (std::size_t k = 0; k < s.size(); ++k) {
        if (s.labels.get(i, k) == 0 && c.margin + sqdist(L, s, i, j) - sqdist(L, s, i, k) > 0) ++n;
      }
    }
  }
  return n;
}

}  // namespace testing
