#include "spatialrel/posesearch.hpp"

#include "spatialrel/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <thread>

namespace srel {

namespace {

std::array<double, 7> order_key(const Pose& p) {
  const auto& t = p.translation;
  const auto& q = p.rotation;
  return {t.x(), t.y(), t.z(), q.w(), q.x(), q.y(), q.z()};
}

bool better(double loss_a, const Pose& a, double loss_b, const Pose& b) {
  if (loss_a != loss_b) return loss_a < loss_b;
  return order_key(a) < order_key(b);
}

struct WorkerResult {
  std::optional<PoseCandidate> best;
  std::optional<PoseCandidate> best_infeasible;
  std::size_t evaluated = 0;
  std::size_t checks = 0;
  std::vector<SampleRecord> samples;
};

bool improves(const std::optional<PoseCandidate>& current, double loss, const Pose& pose) {
  return !current || better(loss, pose, current->loss, current->pose);
}

}  // namespace

void SearchConfig::validate() const {
  if (!(resolution > 0.0)) throw InvalidInput("search resolution must be positive");
  if (extent && !(*extent >= 0.0)) throw InvalidInput("search extent must be non-negative");
  if (rotation == RotationSampling::YawOnly && !(yaw_step_deg > 0.0 && yaw_step_deg <= 360.0)) {
    throw InvalidInput("yaw step must lie in (0, 360]");
  }
  if (rotation == RotationSampling::UniformSO3 && rotation_count == 0) {
    throw InvalidInput("rotation count must be at least 1");
  }
  if (collision_epsilon < 0.0) throw InvalidInput("collision epsilon must be non-negative");
}

double demo_loss(const MetricModel& model, std::span<const RelationDescriptor> demos,
                 const RelationDescriptor& candidate) {
  if (demos.empty()) throw InvalidInput("demo loss needs at least one demonstration");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& d : demos) best = std::min(best, model.distance(d, candidate));
  return best;
}

Vec3 placement_anchor(const PointCloud& cloud) {
  if (cloud.solid) return cloud.solid->pose.translation;
  return centroid(cloud);
}

std::vector<Eigen::Quaterniond> rotation_samples(const SearchConfig& config) {
  std::vector<Eigen::Quaterniond> out;
  if (config.rotation == RotationSampling::YawOnly) {
    const auto n = static_cast<std::size_t>(std::max(1.0, std::floor(360.0 / config.yaw_step_deg + 1e-9)));
    for (std::size_t k = 0; k < n; ++k) {
      const double yaw = static_cast<double>(k) * config.yaw_step_deg * std::numbers::pi / 180.0;
      out.emplace_back(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
    }
    return out;
  }
  // Shoemake's uniform unit quaternions, sign fixed to w >= 0.
  Rng rng(derive_seed(config.seed, "posesearch.rotations"));
  for (std::size_t k = 0; k < config.rotation_count; ++k) {
    const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
    const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
    const double t2 = 2.0 * std::numbers::pi * u2, t3 = 2.0 * std::numbers::pi * u3;
    Eigen::Quaterniond q(b * std::cos(t3), a * std::sin(t2), a * std::cos(t2), b * std::sin(t3));
    if (q.w() < 0.0) q.coeffs() *= -1.0;
    out.push_back(q.normalized());
  }
  return out;
}

std::vector<Vec3> translation_grid(const PointCloud& reference, const PointCloud& placed,
                                   const SearchConfig& config) {
  config.validate();
  const double extent = config.extent.value_or(
      1.5 * (bounding_sphere_radius(reference) + bounding_sphere_radius(placed)));
  const auto n = static_cast<long long>(std::floor(extent / config.resolution + 1e-9));
  const Vec3 origin = placement_anchor(reference);
  std::vector<Vec3> grid;
  grid.reserve(static_cast<std::size_t>((2 * n + 1) * (2 * n + 1) * (2 * n + 1)));
  for (long long i = -n; i <= n; ++i) {
    for (long long j = -n; j <= n; ++j) {
      for (long long k = -n; k <= n; ++k) {
        grid.push_back(origin + config.resolution * Vec3(static_cast<double>(i),
                                                         static_cast<double>(j),
                                                         static_cast<double>(k)));
      }
    }
  }
  return grid;
}

SearchResult optimize_pose(const PointCloud& reference, const PointCloud& placed,
                           std::span<const RelationDescriptor> demos, const MetricModel& model,
                           const SearchConfig& config) {
  config.validate();
  if (reference.empty() || placed.empty()) throw InvalidInput("pose search needs non-empty clouds");
  if (demos.empty()) throw InvalidInput("pose search needs at least one demonstration");

  const PointCloud ref_prepared = prepare_cloud(reference, config.descriptor);
  const PointCloud placed_prepared = prepare_cloud(placed, config.descriptor);
  const ReferenceFrameCache cache(ref_prepared, WorldConvention::standard());
  const auto rotations = rotation_samples(config);
  const auto grid = translation_grid(reference, placed, config);
  const Vec3 anchor = placement_anchor(placed);

  std::vector<std::vector<Vec3>> rotated(rotations.size());
  std::vector<Vec3> rotated_anchor(rotations.size());
  for (std::size_t r = 0; r < rotations.size(); ++r) {
    const Eigen::Matrix3d m = rotations[r].toRotationMatrix();
    rotated[r].reserve(placed_prepared.size());
    for (const auto& p : placed_prepared.points) rotated[r].push_back(m * p);
    rotated_anchor[r] = m * anchor;
  }

  auto run = [&](std::size_t begin, std::size_t end) {
    WorkerResult w;
    std::vector<Vec3> pts(placed_prepared.size());
    for (std::size_t gi = begin; gi < end; ++gi) {
      for (std::size_t r = 0; r < rotations.size(); ++r) {
        Pose pose{grid[gi] - rotated_anchor[r], rotations[r]};
        for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = rotated[r][i] + pose.translation;
        RelationDescriptor desc;
        double loss;
        try {
          desc = cache.describe(pts);
          loss = demo_loss(model, demos, desc);
        } catch (const InvalidScene&) {
          continue;
        }
        ++w.evaluated;
        if (config.keep_samples) w.samples.push_back({pose, loss});
        if (!config.strict_collision && !improves(w.best, loss, pose)) continue;
        ++w.checks;
        const bool collides =
            clouds_collide(reference, transform_cloud(placed, pose), config.collision_epsilon);
        if (!collides) {
          if (improves(w.best, loss, pose)) w.best = PoseCandidate{pose, desc, loss, true};
        } else if (improves(w.best_infeasible, loss, pose)) {
          w.best_infeasible = PoseCandidate{pose, desc, loss, false};
        }
      }
    }
    return w;
  };

  const std::size_t threads = std::clamp<std::size_t>(config.threads, 1, std::max<std::size_t>(1, grid.size()));
  std::vector<WorkerResult> parts(threads);
  if (threads == 1) {
    parts[0] = run(0, grid.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (grid.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = std::min(grid.size(), t * chunk);
      const std::size_t e = std::min(grid.size(), b + chunk);
      pool.emplace_back([&, t, b, e] { parts[t] = run(b, e); });
    }
    for (auto& th : pool) th.join();
  }

  SearchResult result;
  std::optional<PoseCandidate> best, best_infeasible;
  for (auto& w : parts) {
    result.evaluated_samples += w.evaluated;
    result.collision_checks += w.checks;
    if (w.best && improves(best, w.best->loss, w.best->pose)) best = w.best;
    if (w.best_infeasible && improves(best_infeasible, w.best_infeasible->loss, w.best_infeasible->pose)) {
      best_infeasible = w.best_infeasible;
    }
    if (config.keep_samples) {
      result.samples.insert(result.samples.end(), w.samples.begin(), w.samples.end());
    }
  }
  if (!best) {
    throw NoSolution("no collision-free sample among " + std::to_string(result.evaluated_samples),
                     best_infeasible);
  }
  result.best = *best;
  return result;
}

double average_precision(std::span<const std::size_t> order, const std::set<std::size_t>& relevant) {
  if (relevant.empty()) throw InvalidInput("average precision needs a relevant set");
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (relevant.count(order[rank])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return sum / static_cast<double>(relevant.size());
}

Ranking rank_and_map(std::span<const RelationDescriptor> candidates,
                     const std::set<std::size_t>& relevant, const MetricModel& model,
                     std::span<const RelationDescriptor> demos) {
  if (relevant.empty()) throw InvalidInput("ranking needs a non-empty relevant set");
  for (std::size_t r : relevant) {
    if (r >= candidates.size()) throw InvalidInput("relevant index outside the candidate list");
  }
  Ranking out;
  out.losses.reserve(candidates.size());
  for (const auto& c : candidates) out.losses.push_back(demo_loss(model, demos, c));
  out.order.resize(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) out.order[i] = i;
  std::stable_sort(out.order.begin(), out.order.end(),
                   [&](std::size_t a, std::size_t b) { return out.losses[a] < out.losses[b]; });
  out.average_precision = average_precision(out.order, relevant);
  return out;
}

Ranking rank_and_map(const PointCloud& reference, const PointCloud& placed,
                     std::span<const Pose> candidates, const std::set<std::size_t>& relevant,
                     const MetricModel& model, std::span<const RelationDescriptor> demos,
                     const DescriptorOptions& options) {
  const PointCloud ref_prepared = prepare_cloud(reference, options);
  const PointCloud placed_prepared = prepare_cloud(placed, options);
  const ReferenceFrameCache cache(ref_prepared, WorldConvention::standard());
  std::vector<RelationDescriptor> descriptors;
  descriptors.reserve(candidates.size());
  for (const auto& pose : candidates) {
    descriptors.push_back(cache.describe(transform_cloud(placed_prepared, pose).points));
  }
  return rank_and_map(descriptors, relevant, model, demos);
}

double mean_average_precision(std::span<const Ranking> rankings) {
  if (rankings.empty()) throw InvalidInput("mean average precision over no rankings");
  double s = 0.0;
  for (const auto& r : rankings) s += r.average_precision;
  return s / static_cast<double>(rankings.size());
}

std::string to_string(RotationSampling r) {
  return r == RotationSampling::YawOnly ? "yaw" : "so3";
}

RotationSampling rotation_sampling_from_string(const std::string& s) {
  if (s == "yaw") return RotationSampling::YawOnly;
  if (s == "so3") return RotationSampling::UniformSO3;
  throw InvalidInput("unknown rotation sampling '" + s + "' (expected yaw or so3)");
}

SearchConfig search_config_from_json(const Json& j, SearchConfig base) {
  if (!j.is_object()) throw InvalidInput("search config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "extent") {
        base.extent = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      } else if (key == "resolution") {
        base.resolution = v.get<double>();
      } else if (key == "rotation") {
        base.rotation = rotation_sampling_from_string(v.get<std::string>());
      } else if (key == "yaw_step_deg") {
        base.yaw_step_deg = v.get<double>();
      } else if (key == "rotation_count") {
        base.rotation_count = v.get<std::size_t>();
      } else if (key == "collision_epsilon") {
        base.collision_epsilon = v.get<double>();
      } else if (key == "strict_collision") {
        base.strict_collision = v.get<bool>();
      } else if (key == "seed") {
        base.seed = v.get<std::uint64_t>();
      } else if (key == "threads") {
        base.threads = v.get<std::size_t>();
      } else {
        throw InvalidInput("unknown search config key '" + key + "'");
      }
    }
  } catch (const Json::exception& e) {
    throw InvalidInput(std::string("search config: ") + e.what());
  }
  base.validate();
  return base;
}

Json search_config_to_json(const SearchConfig& c) {
  return {{"extent", c.extent ? Json(*c.extent) : Json(nullptr)},
          {"resolution", c.resolution},
          {"rotation", to_string(c.rotation)},
          {"yaw_step_deg", c.yaw_step_deg},
          {"rotation_count", c.rotation_count},
          {"collision_epsilon", c.collision_epsilon},
          {"strict_collision", c.strict_collision},
          {"seed", c.seed}};
}

Json candidate_to_json(const PoseCandidate& c) {
  return {{"pose", pose_to_json(c.pose)},
          {"loss", c.loss},
          {"feasible", c.feasible},
          {"descriptor", c.descriptor.array()}};
}

Json search_result_to_json(const SearchResult& r) {
  return {{"candidate", candidate_to_json(r.best)},
          {"evaluated_samples", r.evaluated_samples},
          {"collision_checks", r.collision_checks}};
}

}  // namespace srel
