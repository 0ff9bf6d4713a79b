#pragma once

#include "spatialrel/geometry.hpp"
#include "spatialrel/relationdb.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace srel::synth {

/// A primitive to sample. Dimensions are full sizes in meters.
struct ShapeSpec {
  SolidKind kind = SolidKind::Box;
  Vec3 size = Vec3(0.1, 0.1, 0.1);  // box: x, y, z extents
  double radius = 0.05;             // cylinder or bowl outer radius
  double inner_radius = 0.04;       // bowl cavity radius
  double height = 0.1;              // cylinder or bowl height
  double bottom_thickness = 0.01;   // bowl floor
  double density = 3000.0;          // surface points per square meter
  std::uint64_t seed = 0;

  static ShapeSpec box(double sx, double sy, double sz, std::uint64_t seed = 0);
  static ShapeSpec cylinder(double radius, double height, std::uint64_t seed = 0);
  static ShapeSpec bowl(double radius, double inner_radius, double height,
                        double bottom_thickness, std::uint64_t seed = 0);

  Solid solid() const;
  void validate() const;
};

/// Stratified-random surface sample carrying the exact solid.
PointCloud sample_surface(const ShapeSpec& shape);

enum class RelationKind { OnTop, Inside, NextTo, Inclined, OnTopCorner, InclinedInside };

std::string to_string(RelationKind kind);
RelationKind relation_kind_from_string(const std::string& s);
const std::vector<RelationKind>& all_relations();

struct RelationSpec {
  RelationKind kind = RelationKind::OnTop;
  double jitter_translation = 0.01;  // meters, uniform in [-j, j] per lateral axis
  double jitter_yaw_deg = 15.0;      // uniform in [-j, j]
  std::uint64_t seed = 0;
};

/// Relative pose placing `placed` against `reference` in the named relation.
/// Throws GenerationError for impossible combinations.
Pose relation_pose(const Solid& reference, const Solid& placed, const RelationSpec& relation);

/// Scene with the relation tag attached; verified collision-free.
Scene generate_scene(const ShapeSpec& reference, const ShapeSpec& placed,
                     const RelationSpec& relation, const std::string& id = "");

struct DatasetSpec {
  std::map<RelationKind, std::size_t> counts;
  std::uint64_t seed = 0;
  double density = 3000.0;
  double jitter_translation = 0.01;
  double jitter_yaw_deg = 15.0;
  DescriptorOptions descriptor;
  /// Prefix for scene ids, e.g. "s" -> "s-on-top-007".
  std::string id_prefix = "s";

  /// Equal count for every relation kind.
  static DatasetSpec uniform(std::size_t per_relation, std::uint64_t seed);
};

/// Random shapes suited to the relation (bowls for the containment kinds).
std::pair<ShapeSpec, ShapeSpec> draw_shapes(RelationKind kind, Rng& rng, double density);

/// One scene of the given relation with random shapes; retries shape draws
/// that cannot realize the relation.
Scene random_scene(RelationKind kind, std::uint64_t seed, const std::string& id,
                   double density = 3000.0, double jitter_translation = 0.01,
                   double jitter_yaw_deg = 15.0);

/// Scenes for every requested relation, with full ground-truth labels: the
/// same relation tag gives y = 1, different tags y = 0.
RelationDatabase generate_dataset(const DatasetSpec& spec);

/// Labels every pair of scenes in `db` by relation tag equality.
void label_by_tags(RelationDatabase& db);

/// First tag of a scene, or empty.
std::string relation_tag(const Scene& scene);

}  // namespace srel::synth
