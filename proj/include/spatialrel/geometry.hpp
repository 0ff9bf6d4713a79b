#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>
#include <string>
#include <vector>

namespace srel {

using Vec3 = Eigen::Vector3d;

/// World frame convention: gravity points along -z.
struct WorldConvention {
  Vec3 gravity{0.0, 0.0, -1.0};

  static const WorldConvention& standard() {
    static const WorldConvention kStandard{};
    return kStandard;
  }
};

/// Rigid transform. Rotation is a unit quaternion stored (w, x, y, z) when
/// serialized; composition uses the Hamilton product.
struct Pose {
  Vec3 translation = Vec3::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();

  static Pose identity() { return {}; }
  static Pose from_translation(const Vec3& t) { return {t, Eigen::Quaterniond::Identity()}; }
  static Pose from_yaw(double radians, const Vec3& t = Vec3::Zero());
  static Pose from_axis_angle(const Vec3& axis, double radians, const Vec3& t = Vec3::Zero());

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Eigen::Matrix3d rotation_matrix() const { return rotation.toRotationMatrix(); }

  /// this ∘ other: apply `other` first, then `this`.
  Pose compose(const Pose& other) const;
  Pose inverse() const;

  /// Throws InvalidInput when the quaternion is not unit within 1e-9 or any
  /// component is non-finite.
  void validate() const;
};

Pose operator*(const Pose& a, const Pose& b);

/// Analytic solid used by the synthetic generator; each kind is centered at
/// its local origin with its axis along local z.
enum class SolidKind { Box, Cylinder, Bowl };

struct Solid {
  SolidKind kind = SolidKind::Box;
  // Box: half extents (x, y, z). Cylinder: radius, half height.
  // Bowl: outer radius, inner radius, half height, bottom thickness.
  Vec3 half_extents = Vec3::Zero();
  double radius = 0.0;
  double inner_radius = 0.0;
  double half_height = 0.0;
  double bottom_thickness = 0.0;
  /// Maps solid-local coordinates into the owning cloud's frame.
  Pose pose;

  static Solid box(const Vec3& half_extents);
  static Solid cylinder(double radius, double half_height);
  static Solid bowl(double outer_radius, double inner_radius, double half_height,
                    double bottom_thickness);

  /// Signed distance of `p` (in the owning cloud frame); negative inside.
  /// Exact for box and cylinder, a sign-correct bound for the bowl.
  double signed_distance(const Vec3& p) const;

  /// Height of the solid along its own axis.
  double height() const;
  /// A point deep inside the material (center, or the middle of a bowl's
  /// floor), in the owning cloud frame.
  Vec3 interior_point() const;
  /// Radius of the smallest origin-centered sphere containing the solid.
  double bounding_radius() const;

  void validate() const;
};

std::string to_string(SolidKind kind);
SolidKind solid_kind_from_string(const std::string& s);

struct PointCloud {
  std::vector<Vec3> points;
  std::optional<Solid> solid;

  bool empty() const { return points.empty(); }
  std::size_t size() const { return points.size(); }
};

/// One demonstration: the target cloud placed relative to the reference.
struct Scene {
  std::string id;
  PointCloud reference;
  PointCloud target;
  /// Pose of the target object expressed in the reference object's frame.
  Pose relative_pose;
  std::vector<std::string> tags;

  void validate() const;
};

PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose);

Vec3 centroid(const PointCloud& cloud);

/// Largest distance from the centroid to any point.
double bounding_sphere_radius(const PointCloud& cloud);

/// One representative per occupied voxel (mean of its members), ordered by
/// lexicographic cell index. The solid description is carried through.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel);

/// Applies a rigid transform to a whole scene: the reference cloud moves by
/// `world`, and the target follows through its relative pose. Used to test
/// invariances of the descriptor.
Scene transform_scene(const Scene& scene, const Pose& world);

/// Target points expressed in the reference frame.
PointCloud placed_target(const Scene& scene);

constexpr double kDefaultCollisionEpsilon = 1e-3;

/// True when the two objects interpenetrate by more than `epsilon`. Each
/// solid present is tested against the other object's surface points (and
/// its interior point when both carry solids); without any solid, true when
/// some cross-object pair is closer than `epsilon`.
bool collision_check(const Scene& scene, double epsilon = kDefaultCollisionEpsilon);

/// Same predicate with the target already expressed in the reference frame.
bool clouds_collide(const PointCloud& reference, const PointCloud& placed_target,
                    double epsilon = kDefaultCollisionEpsilon);

}  // namespace srel
