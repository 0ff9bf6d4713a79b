#include "spatialrel/metrics.hpp"

#include "spatialrel/errors.hpp"
#include "spatialrel/random.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace srel {

namespace {

std::vector<double> as_distribution(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) {
    if (x < 0.0) throw InvalidInput("probabilistic distance needs non-negative bins");
    sum += x;
  }
  if (!(sum > 0.0)) throw InvalidInput("probabilistic distance needs a non-zero vector");
  std::vector<double> p(v.begin(), v.end());
  for (double& x : p) x /= sum;
  return p;
}

std::vector<double> smoothed(std::vector<double> p) {
  const double z = 1.0 + kKlSmoothing * static_cast<double>(p.size());
  for (double& x : p) x = (x + kKlSmoothing) / z;
  return p;
}

// Sum p ln(p/q) with 0 ln 0 := 0; q > 0 wherever p > 0 is the caller's duty.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
  }
  return s;
}

double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double chi_square(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double den = a[i] + b[i];
    if (den <= 0.0) continue;
    const double d = a[i] - b[i];
    s += d * d / den;
  }
  return 0.5 * s;
}

double bhattacharyya(std::span<const double> a, std::span<const double> b) {
  const auto p = as_distribution(a);
  const auto q = as_distribution(b);
  double bc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) bc += std::sqrt(p[i] * q[i]);
  return std::max(0.0, -std::log(std::max(bc, 1e-300)));
}

double kl(std::span<const double> a, std::span<const double> b) {
  const auto p = smoothed(as_distribution(a));
  const auto q = smoothed(as_distribution(b));
  return std::max(0.0, kl_divergence(p, q));
}

double js(std::span<const double> a, std::span<const double> b) {
  const auto p = as_distribution(a);
  const auto q = as_distribution(b);
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  return std::max(0.0, 0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(q, m));
}

double correlation(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) {
    // Pearson is undefined on constant vectors.
    return std::equal(a.begin(), a.end(), b.begin()) ? 0.0 : 1.0;
  }
  const double r = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  return std::max(0.0, 1.0 - r);
}

}  // namespace

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::Euclidean: return "euclidean";
    case MetricKind::ChiSquare: return "chi-square";
    case MetricKind::Bhattacharyya: return "bhattacharyya";
    case MetricKind::Correlation: return "correlation";
    case MetricKind::KL: return "kl";
    case MetricKind::JS: return "js";
    case MetricKind::Mahalanobis: return "mahalanobis";
  }
  return "unknown";
}

MetricKind metric_kind_from_string(const std::string& s) {
  for (auto k : {MetricKind::Euclidean, MetricKind::ChiSquare, MetricKind::Bhattacharyya,
                 MetricKind::Correlation, MetricKind::KL, MetricKind::JS,
                 MetricKind::Mahalanobis}) {
    if (to_string(k) == s) return k;
  }
  throw InvalidInput("unknown metric kind '" + s + "'");
}

const std::vector<MetricKind>& baseline_kinds() {
  static const std::vector<MetricKind> kinds{MetricKind::Euclidean,   MetricKind::KL,
                                             MetricKind::Correlation, MetricKind::ChiSquare,
                                             MetricKind::Bhattacharyya, MetricKind::JS};
  return kinds;
}

MetricModel::MetricModel(MetricKind kind) : kind_(kind) {
  if (kind == MetricKind::Mahalanobis) map_ = Eigen::MatrixXd::Identity(kDescriptorDim, kDescriptorDim);
}

MetricModel MetricModel::mahalanobis(Eigen::MatrixXd map) {
  if (map.rows() != map.cols() || map.rows() == 0) {
    throw InvalidInput("mahalanobis map must be square and non-empty");
  }
  if (!map.allFinite()) throw InvalidInput("mahalanobis map must be finite");
  MetricModel m;
  m.kind_ = MetricKind::Mahalanobis;
  m.map_ = std::move(map);
  return m;
}

MetricModel MetricModel::identity_mahalanobis(std::size_t dim) {
  return mahalanobis(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim),
                                               static_cast<Eigen::Index>(dim)));
}

double MetricModel::distance(std::span<const double> a, std::span<const double> b) const {
  if (a.size() != b.size() || a.empty()) {
    throw InvalidInput("descriptor dimension mismatch");
  }
  switch (kind_) {
    case MetricKind::Euclidean: return euclidean(a, b);
    case MetricKind::ChiSquare: return chi_square(a, b);
    case MetricKind::Bhattacharyya: return bhattacharyya(a, b);
    case MetricKind::Correlation: return correlation(a, b);
    case MetricKind::KL: return kl(a, b);
    case MetricKind::JS: return js(a, b);
    case MetricKind::Mahalanobis: {
      if (a.size() != dim()) throw InvalidInput("descriptor dimension mismatch");
      Eigen::VectorXd diff(static_cast<Eigen::Index>(a.size()));
      for (std::size_t i = 0; i < a.size(); ++i) diff[static_cast<Eigen::Index>(i)] = a[i] - b[i];
      return (map_ * diff).norm();
    }
  }
  return 0.0;
}

std::string MetricModel::id() const {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "m-%016llx",
                static_cast<unsigned long long>(fnv1a64(metric_to_json(*this).dump())));
  return buf;
}

bool MetricModel::operator==(const MetricModel& other) const {
  if (kind_ != other.kind_) return false;
  if (kind_ != MetricKind::Mahalanobis) return true;
  return map_.rows() == other.map_.rows() && map_.cols() == other.map_.cols() &&
         map_ == other.map_;
}

double distance(const MetricModel& model, const RelationDescriptor& a, const RelationDescriptor& b) {
  return model.distance(a, b);
}

Json metric_to_json(const MetricModel& model) {
  Json j{{"kind", to_string(model.kind())}};
  if (model.kind() == MetricKind::Mahalanobis) {
    const auto& m = model.map();
    j["dim"] = m.cols();
    Json values = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) values.push_back(m(r, c));
    }
    j["map"] = std::move(values);
  } else {
    j["dim"] = kDescriptorDim;
  }
  return j;
}

MetricModel metric_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("metric: expected a JSON object");
  if (!j.contains("kind") || !j.at("kind").is_string()) {
    throw ParseError("metric: missing string field 'kind'");
  }
  MetricKind kind;
  try {
    kind = metric_kind_from_string(j.at("kind").get<std::string>());
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("metric: field 'kind': ") + e.what());
  }
  if (kind != MetricKind::Mahalanobis) return MetricModel(kind);

  if (!j.contains("dim") || !j.at("dim").is_number_unsigned()) {
    throw ParseError("metric: missing unsigned field 'dim'");
  }
  const auto dim = j.at("dim").get<std::size_t>();
  if (dim == 0) throw ParseError("metric: field 'dim' must be positive");
  if (!j.contains("map") || !j.at("map").is_array()) {
    throw ParseError("metric: missing array field 'map'");
  }
  const Json& values = j.at("map");
  if (values.size() != dim * dim) {
    throw ParseError("metric: field 'map' has " + std::to_string(values.size()) +
                     " entries, expected " + std::to_string(dim * dim));
  }
  const auto n = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd map(n, n);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i].is_number()) {
      throw ParseError("metric: field 'map' entry " + std::to_string(i) + " is not a number");
    }
    map(static_cast<Eigen::Index>(i / dim), static_cast<Eigen::Index>(i % dim)) =
        values[i].get<double>();
  }
  try {
    return MetricModel::mahalanobis(std::move(map));
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("metric: ") + e.what());
  }
}

void save_metric(const MetricModel& model, const std::filesystem::path& path) {
  write_text_file(path, metric_to_json(model).dump() + "\n");
}

MetricModel load_metric(const std::filesystem::path& path) {
  try {
    return metric_from_json(read_json_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace srel
