#include "spatialrel/geometry.hpp"

#include "spatialrel/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>
#include <unordered_map>

namespace srel {

namespace {

bool finite(const Vec3& v) { return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z()); }

// Signed distance of a 2D (radial, axial) offset pair for capped cylinders.
double capped_sdf(double dr, double dz) {
  const double ox = std::max(dr, 0.0);
  const double oz = std::max(dz, 0.0);
  return std::sqrt(ox * ox + oz * oz) + std::min(std::max(dr, dz), 0.0);
}

}  // namespace

Pose Pose::from_yaw(double radians, const Vec3& t) {
  return from_axis_angle(Vec3::UnitZ(), radians, t);
}

Pose Pose::from_axis_angle(const Vec3& axis, double radians, const Vec3& t) {
  return {t, Eigen::Quaterniond(Eigen::AngleAxisd(radians, axis.normalized()))};
}

Pose Pose::compose(const Pose& other) const {
  Pose out;
  out.rotation = (rotation * other.rotation).normalized();
  out.translation = rotation * other.translation + translation;
  return out;
}

Pose Pose::inverse() const {
  Pose out;
  out.rotation = rotation.conjugate();
  out.translation = -(out.rotation * translation);
  return out;
}

void Pose::validate() const {
  if (!finite(translation) || !std::isfinite(rotation.w()) || !finite(rotation.vec())) {
    throw InvalidInput("pose has non-finite components");
  }
  if (std::abs(rotation.norm() - 1.0) > 1e-9) {
    throw InvalidInput("pose rotation is not a unit quaternion");
  }
}

Pose operator*(const Pose& a, const Pose& b) { return a.compose(b); }

Solid Solid::box(const Vec3& half_extents) {
  Solid s;
  s.kind = SolidKind::Box;
  s.half_extents = half_extents;
  return s;
}

Solid Solid::cylinder(double radius, double half_height) {
  Solid s;
  s.kind = SolidKind::Cylinder;
  s.radius = radius;
  s.half_height = half_height;
  return s;
}

Solid Solid::bowl(double outer_radius, double inner_radius, double half_height,
                  double bottom_thickness) {
  Solid s;
  s.kind = SolidKind::Bowl;
  s.radius = outer_radius;
  s.inner_radius = inner_radius;
  s.half_height = half_height;
  s.bottom_thickness = bottom_thickness;
  return s;
}

double Solid::signed_distance(const Vec3& p_frame) const {
  const Vec3 p = pose.inverse().apply(p_frame);
  switch (kind) {
    case SolidKind::Box: {
      const Vec3 q = p.cwiseAbs() - half_extents;
      return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
    }
    case SolidKind::Cylinder: {
      const double r = std::hypot(p.x(), p.y());
      return capped_sdf(r - radius, std::abs(p.z()) - half_height);
    }
    case SolidKind::Bowl: {
      const double r = std::hypot(p.x(), p.y());
      const double outer = capped_sdf(r - radius, std::abs(p.z()) - half_height);
      // Open-topped cavity above the floor.
      const double floor_z = -half_height + bottom_thickness;
      const double cavity = capped_sdf(r - inner_radius, floor_z - p.z());
      return std::max(outer, -cavity);
    }
  }
  return std::numeric_limits<double>::infinity();
}

double Solid::height() const {
  return kind == SolidKind::Box ? 2.0 * half_extents.z() : 2.0 * half_height;
}

Vec3 Solid::interior_point() const {
  if (kind == SolidKind::Bowl) return pose.apply(Vec3(0.0, 0.0, -half_height + 0.5 * bottom_thickness));
  return pose.translation;
}

double Solid::bounding_radius() const {
  if (kind == SolidKind::Box) return half_extents.norm();
  return std::hypot(radius, half_height);
}

void Solid::validate() const {
  pose.validate();
  switch (kind) {
    case SolidKind::Box:
      if (!(half_extents.minCoeff() > 0.0)) throw InvalidInput("box extents must be positive");
      break;
    case SolidKind::Cylinder:
      if (!(radius > 0.0 && half_height > 0.0)) {
        throw InvalidInput("cylinder dimensions must be positive");
      }
      break;
    case SolidKind::Bowl:
      if (!(radius > 0.0 && half_height > 0.0 && inner_radius > 0.0 &&
            inner_radius < radius && bottom_thickness > 0.0 &&
            bottom_thickness < 2.0 * half_height)) {
        throw InvalidInput("bowl dimensions inconsistent");
      }
      break;
  }
}

std::string to_string(SolidKind kind) {
  switch (kind) {
    case SolidKind::Box: return "box";
    case SolidKind::Cylinder: return "cylinder";
    case SolidKind::Bowl: return "bowl";
  }
  return "unknown";
}

SolidKind solid_kind_from_string(const std::string& s) {
  if (s == "box") return SolidKind::Box;
  if (s == "cylinder") return SolidKind::Cylinder;
  if (s == "bowl") return SolidKind::Bowl;
  throw InvalidInput("unknown solid kind '" + s + "'");
}

void Scene::validate() const {
  if (reference.empty() || target.empty()) {
    throw InvalidScene("scene '" + id + "' has an empty cloud");
  }
  relative_pose.validate();
  for (const auto* cloud : {&reference, &target}) {
    for (const auto& p : cloud->points) {
      if (!finite(p)) throw InvalidScene("scene '" + id + "' has non-finite points");
    }
  }
}

PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose) {
  PointCloud out;
  out.points.reserve(cloud.points.size());
  const Eigen::Matrix3d r = pose.rotation_matrix();
  for (const auto& p : cloud.points) out.points.push_back(r * p + pose.translation);
  if (cloud.solid) {
    out.solid = *cloud.solid;
    out.solid->pose = pose.compose(cloud.solid->pose);
  }
  return out;
}

Vec3 centroid(const PointCloud& cloud) {
  if (cloud.empty()) throw InvalidInput("centroid of an empty cloud");
  Vec3 sum = Vec3::Zero();
  for (const auto& p : cloud.points) sum += p;
  return sum / static_cast<double>(cloud.points.size());
}

double bounding_sphere_radius(const PointCloud& cloud) {
  const Vec3 c = centroid(cloud);
  double r2 = 0.0;
  for (const auto& p : cloud.points) r2 = std::max(r2, (p - c).squaredNorm());
  return std::sqrt(r2);
}

PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  if (!(voxel > 0.0) || !std::isfinite(voxel)) {
    throw InvalidInput("voxel size must be positive");
  }
  using Cell = std::tuple<long long, long long, long long>;
  struct Acc {
    Vec3 sum = Vec3::Zero();
    std::size_t count = 0;
  };
  std::map<Cell, Acc> cells;
  for (const auto& p : cloud.points) {
    const Cell key{static_cast<long long>(std::floor(p.x() / voxel)),
                   static_cast<long long>(std::floor(p.y() / voxel)),
                   static_cast<long long>(std::floor(p.z() / voxel))};
    auto& acc = cells[key];
    acc.sum += p;
    ++acc.count;
  }
  PointCloud out;
  out.solid = cloud.solid;
  out.points.reserve(cells.size());
  for (const auto& [key, acc] : cells) {
    out.points.push_back(acc.sum / static_cast<double>(acc.count));
  }
  return out;
}

Scene transform_scene(const Scene& scene, const Pose& world) {
  Scene out = scene;
  out.reference = transform_cloud(scene.reference, world);
  out.relative_pose = world.compose(scene.relative_pose);
  return out;
}

PointCloud placed_target(const Scene& scene) {
  return transform_cloud(scene.target, scene.relative_pose);
}

namespace {

bool solid_penetrated(const Solid& solid, const std::vector<Vec3>& points, double epsilon) {
  // Bounding sphere rejection before the exact test.
  const Vec3 center = solid.pose.translation;
  const double reach = solid.bounding_radius() + 1e-9;
  for (const auto& p : points) {
    if ((p - center).squaredNorm() > reach * reach) continue;
    if (solid.signed_distance(p) < -epsilon) return true;
  }
  return false;
}

bool any_pair_closer(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double epsilon) {
  if (epsilon <= 0.0) {
    return false;
  }
  struct Hash {
    std::size_t operator()(const std::tuple<long long, long long, long long>& k) const noexcept {
      const auto [x, y, z] = k;
      return static_cast<std::size_t>(x * 73856093LL ^ y * 19349663LL ^ z * 83492791LL);
    }
  };
  using Cell = std::tuple<long long, long long, long long>;
  auto cell_of = [epsilon](const Vec3& p) {
    return Cell{static_cast<long long>(std::floor(p.x() / epsilon)),
                static_cast<long long>(std::floor(p.y() / epsilon)),
                static_cast<long long>(std::floor(p.z() / epsilon))};
  };
  std::unordered_map<Cell, std::vector<std::size_t>, Hash> grid;
  for (std::size_t i = 0; i < a.size(); ++i) grid[cell_of(a[i])].push_back(i);
  const double eps2 = epsilon * epsilon;
  for (const auto& q : b) {
    const auto [cx, cy, cz] = cell_of(q);
    for (long long dx = -1; dx <= 1; ++dx) {
      for (long long dy = -1; dy <= 1; ++dy) {
        for (long long dz = -1; dz <= 1; ++dz) {
          auto it = grid.find(Cell{cx + dx, cy + dy, cz + dz});
          if (it == grid.end()) continue;
          for (std::size_t i : it->second) {
            if ((a[i] - q).squaredNorm() < eps2) return true;
          }
        }
      }
    }
  }
  return false;
}

}  // namespace

bool clouds_collide(const PointCloud& reference, const PointCloud& placed, double epsilon) {
  if (epsilon < 0.0) throw InvalidInput("collision epsilon must be non-negative");
  if (reference.solid || placed.solid) {
    if (reference.solid && solid_penetrated(*reference.solid, placed.points, epsilon)) return true;
    if (placed.solid && solid_penetrated(*placed.solid, reference.points, epsilon)) return true;
    // Coincident surfaces never dip below -epsilon, so full overlap shows
    // only through the interiors.
    if (reference.solid && placed.solid) {
      if (reference.solid->signed_distance(placed.solid->interior_point()) < -epsilon) return true;
      if (placed.solid->signed_distance(reference.solid->interior_point()) < -epsilon) return true;
    }
    return false;
  }
  return any_pair_closer(reference.points, placed.points, epsilon);
}

bool collision_check(const Scene& scene, double epsilon) {
  return clouds_collide(scene.reference, placed_target(scene), epsilon);
}

}  // namespace srel
