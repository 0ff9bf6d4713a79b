#pragma once

#include "spatialrel/descriptor.hpp"
#include "spatialrel/io.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace srel {

enum class MetricKind { Euclidean, ChiSquare, Bhattacharyya, Correlation, KL, JS, Mahalanobis };

std::string to_string(MetricKind kind);
MetricKind metric_kind_from_string(const std::string& s);
/// The six fixed baselines, in report order.
const std::vector<MetricKind>& baseline_kinds();

inline constexpr double kKlSmoothing = 1e-6;

/// A distance over descriptors. Baselines carry no parameters; the
/// Mahalanobis kind carries the linear map L and computes ||L (a - b)||.
class MetricModel {
 public:
  MetricModel() = default;
  explicit MetricModel(MetricKind kind);
  /// Mahalanobis model with the given square map.
  static MetricModel mahalanobis(Eigen::MatrixXd map);
  static MetricModel identity_mahalanobis(std::size_t dim = kDescriptorDim);

  MetricKind kind() const { return kind_; }
  const Eigen::MatrixXd& map() const { return map_; }
  /// Input dimension the model accepts (0 for baselines: any).
  std::size_t dim() const { return static_cast<std::size_t>(map_.cols()); }

  double distance(std::span<const double> a, std::span<const double> b) const;
  double distance(const RelationDescriptor& a, const RelationDescriptor& b) const {
    return distance(a.values(), b.values());
  }

  /// Stable content hash of the serialized model.
  std::string id() const;

  bool operator==(const MetricModel& other) const;

 private:
  MetricKind kind_ = MetricKind::Euclidean;
  Eigen::MatrixXd map_;
};

double distance(const MetricModel& model, const RelationDescriptor& a, const RelationDescriptor& b);

Json metric_to_json(const MetricModel& model);
MetricModel metric_from_json(const Json& j);

void save_metric(const MetricModel& model, const std::filesystem::path& path);
MetricModel load_metric(const std::filesystem::path& path);

}  // namespace srel
