#include "spatialrel/synth.hpp"

#include "spatialrel/errors.hpp"
#include "spatialrel/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace srel::synth {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;
// Minimum radial gap kept between a contained object and the bowl wall.
constexpr double kWallClearance = 0.002;

std::size_t cells(double length, double density) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(length * std::sqrt(density))));
}

void sample_rect(const Vec3& origin, const Vec3& e1, const Vec3& e2, double density, Rng& rng,
                 std::vector<Vec3>& out) {
  const std::size_t n1 = cells(e1.norm(), density);
  const std::size_t n2 = cells(e2.norm(), density);
  for (std::size_t a = 0; a < n1; ++a) {
    for (std::size_t b = 0; b < n2; ++b) {
      const double u = (static_cast<double>(a) + rng.uniform()) / static_cast<double>(n1);
      const double v = (static_cast<double>(b) + rng.uniform()) / static_cast<double>(n2);
      out.push_back(origin + u * e1 + v * e2);
    }
  }
}

// Area-uniform stratified samples of the annulus r0 <= r <= r1 at height z.
void sample_annulus(double r0, double r1, double z, double density, Rng& rng,
                    std::vector<Vec3>& out) {
  const std::size_t rings = cells(r1 - r0, density);
  for (std::size_t i = 0; i < rings; ++i) {
    const double ra = r0 + (r1 - r0) * static_cast<double>(i) / static_cast<double>(rings);
    const double rb = r0 + (r1 - r0) * static_cast<double>(i + 1) / static_cast<double>(rings);
    const double area = kPi * (rb * rb - ra * ra);
    const std::size_t n = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(area * density)));
    for (std::size_t k = 0; k < n; ++k) {
      const double t = 2.0 * kPi * (static_cast<double>(k) + rng.uniform()) / static_cast<double>(n);
      const double r = std::sqrt(ra * ra + (rb * rb - ra * ra) * rng.uniform());
      out.push_back(Vec3(r * std::cos(t), r * std::sin(t), z));
    }
  }
}

void sample_tube(double r, double z0, double z1, double density, Rng& rng,
                 std::vector<Vec3>& out) {
  const std::size_t nt = std::max<std::size_t>(3, cells(2.0 * kPi * r, density));
  const std::size_t nz = cells(z1 - z0, density);
  for (std::size_t a = 0; a < nt; ++a) {
    for (std::size_t b = 0; b < nz; ++b) {
      const double t = 2.0 * kPi * (static_cast<double>(a) + rng.uniform()) / static_cast<double>(nt);
      const double z = z0 + (z1 - z0) * (static_cast<double>(b) + rng.uniform()) / static_cast<double>(nz);
      out.push_back(Vec3(r * std::cos(t), r * std::sin(t), z));
    }
  }
}

// Half extent of the rotated solid along unit direction d.
double extent_along(const Solid& s, const Eigen::Matrix3d& r, const Vec3& d) {
  if (s.kind == SolidKind::Box) {
    double e = 0.0;
    for (int k = 0; k < 3; ++k) e += std::abs(d.dot(r.col(k))) * s.half_extents[k];
    return e;
  }
  const double c = std::abs(d.dot(r.col(2)));
  return s.half_height * c + s.radius * std::sqrt(std::max(0.0, 1.0 - c * c));
}

// Bound on the horizontal distance of any point of the rotated solid from
// its center.
double horizontal_radius(const Solid& s, const Eigen::Matrix3d& r) {
  if (s.kind == SolidKind::Box) {
    double best = 0.0;
    for (int sx : {-1, 1}) {
      for (int sy : {-1, 1}) {
        for (int sz : {-1, 1}) {
          const Vec3 c = r * Vec3(sx * s.half_extents.x(), sy * s.half_extents.y(),
                                  sz * s.half_extents.z());
          best = std::max(best, std::hypot(c.x(), c.y()));
        }
      }
    }
    return best;
  }
  const Vec3 axis = r.col(2);
  const double tilt = std::sqrt(std::max(0.0, 1.0 - axis.z() * axis.z()));
  return s.half_height * tilt + s.radius;
}

double horizontal_extent(const Solid& s, const Vec3& d) {
  if (s.kind == SolidKind::Box) return std::abs(d.x()) * s.half_extents.x() + std::abs(d.y()) * s.half_extents.y();
  return s.radius;
}

}  // namespace

ShapeSpec ShapeSpec::box(double sx, double sy, double sz, std::uint64_t seed) {
  ShapeSpec s;
  s.kind = SolidKind::Box;
  s.size = Vec3(sx, sy, sz);
  s.seed = seed;
  return s;
}

ShapeSpec ShapeSpec::cylinder(double radius, double height, std::uint64_t seed) {
  ShapeSpec s;
  s.kind = SolidKind::Cylinder;
  s.radius = radius;
  s.height = height;
  s.seed = seed;
  return s;
}

ShapeSpec ShapeSpec::bowl(double radius, double inner_radius, double height,
                          double bottom_thickness, std::uint64_t seed) {
  ShapeSpec s;
  s.kind = SolidKind::Bowl;
  s.radius = radius;
  s.inner_radius = inner_radius;
  s.height = height;
  s.bottom_thickness = bottom_thickness;
  s.seed = seed;
  return s;
}

Solid ShapeSpec::solid() const {
  switch (kind) {
    case SolidKind::Box: return Solid::box(0.5 * size);
    case SolidKind::Cylinder: return Solid::cylinder(radius, 0.5 * height);
    case SolidKind::Bowl: return Solid::bowl(radius, inner_radius, 0.5 * height, bottom_thickness);
  }
  return {};
}

void ShapeSpec::validate() const {
  if (!(density > 0.0)) throw InvalidInput("sampling density must be positive");
  solid().validate();
}

PointCloud sample_surface(const ShapeSpec& shape) {
  shape.validate();
  Rng rng(shape.seed);
  PointCloud cloud;
  cloud.solid = shape.solid();
  auto& pts = cloud.points;
  const double d = shape.density;
  switch (shape.kind) {
    case SolidKind::Box: {
      const Vec3 h = 0.5 * shape.size;
      const Vec3 ex(shape.size.x(), 0, 0), ey(0, shape.size.y(), 0), ez(0, 0, shape.size.z());
      sample_rect(Vec3(-h.x(), -h.y(), -h.z()), ex, ey, d, rng, pts);
      sample_rect(Vec3(-h.x(), -h.y(), h.z()), ex, ey, d, rng, pts);
      sample_rect(Vec3(-h.x(), -h.y(), -h.z()), ex, ez, d, rng, pts);
      sample_rect(Vec3(-h.x(), h.y(), -h.z()), ex, ez, d, rng, pts);
      sample_rect(Vec3(-h.x(), -h.y(), -h.z()), ey, ez, d, rng, pts);
      sample_rect(Vec3(h.x(), -h.y(), -h.z()), ey, ez, d, rng, pts);
      break;
    }
    case SolidKind::Cylinder: {
      const double h = 0.5 * shape.height;
      sample_tube(shape.radius, -h, h, d, rng, pts);
      sample_annulus(0.0, shape.radius, -h, d, rng, pts);
      sample_annulus(0.0, shape.radius, h, d, rng, pts);
      break;
    }
    case SolidKind::Bowl: {
      const double h = 0.5 * shape.height;
      const double floor_z = -h + shape.bottom_thickness;
      sample_tube(shape.radius, -h, h, d, rng, pts);
      sample_annulus(0.0, shape.radius, -h, d, rng, pts);
      sample_tube(shape.inner_radius, floor_z, h, d, rng, pts);
      sample_annulus(0.0, shape.inner_radius, floor_z, d, rng, pts);
      sample_annulus(shape.inner_radius, shape.radius, h, d, rng, pts);
      break;
    }
  }
  return cloud;
}

std::string to_string(RelationKind kind) {
  switch (kind) {
    case RelationKind::OnTop: return "on-top";
    case RelationKind::Inside: return "inside";
    case RelationKind::NextTo: return "next-to";
    case RelationKind::Inclined: return "inclined";
    case RelationKind::OnTopCorner: return "on-top-corner";
    case RelationKind::InclinedInside: return "inclined-inside";
  }
  return "unknown";
}

RelationKind relation_kind_from_string(const std::string& s) {
  for (auto k : all_relations()) {
    if (to_string(k) == s) return k;
  }
  throw InvalidInput("unknown relation kind '" + s + "'");
}

const std::vector<RelationKind>& all_relations() {
  static const std::vector<RelationKind> kinds{RelationKind::OnTop,    RelationKind::Inside,
                                               RelationKind::NextTo,   RelationKind::Inclined,
                                               RelationKind::OnTopCorner,
                                               RelationKind::InclinedInside};
  return kinds;
}

Pose relation_pose(const Solid& reference, const Solid& placed, const RelationSpec& relation) {
  Rng rng(relation.seed);
  const double jt = relation.jitter_translation;
  const double yaw = rng.uniform(-relation.jitter_yaw_deg, relation.jitter_yaw_deg) * kDeg;
  const double jx = rng.uniform(-jt, jt);
  const double jy = rng.uniform(-jt, jt);
  const double top = 0.5 * reference.height();
  const double bottom = -top;

  Eigen::Quaterniond rot(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
  Vec3 t = Vec3::Zero();
  const Vec3 up = Vec3::UnitZ();

  auto tilted = [&](double lo_deg, double hi_deg) {
    const double tilt = rng.uniform(lo_deg, hi_deg) * kDeg;
    const double axis_angle = rng.uniform(0.0, 2.0 * kPi);
    const Vec3 axis(std::cos(axis_angle), std::sin(axis_angle), 0.0);
    return Eigen::Quaterniond(Eigen::AngleAxisd(tilt, axis)) * rot;
  };

  auto inside_floor = [&]() {
    if (reference.kind != SolidKind::Bowl) {
      throw GenerationError("containment relations need a bowl as the reference");
    }
    return -reference.half_height + reference.bottom_thickness;
  };

  switch (relation.kind) {
    case RelationKind::OnTop: {
      t = Vec3(jx, jy, top + extent_along(placed, rot.toRotationMatrix(), up));
      break;
    }
    case RelationKind::OnTopCorner: {
      const int corner = static_cast<int>(rng.below(4));
      const double sx = (corner & 1) ? 1.0 : -1.0;
      const double sy = (corner & 2) ? 1.0 : -1.0;
      Vec3 c;
      if (reference.kind == SolidKind::Box) {
        c = Vec3(sx * reference.half_extents.x(), sy * reference.half_extents.y(), 0.0);
      } else {
        const double r = reference.radius / std::sqrt(2.0);
        c = Vec3(sx * r, sy * r, 0.0);
      }
      t = Vec3(c.x() + jx, c.y() + jy, top + extent_along(placed, rot.toRotationMatrix(), up));
      break;
    }
    case RelationKind::NextTo: {
      const int side = static_cast<int>(rng.below(4));
      const double ang = side * 0.5 * kPi;
      const Vec3 dir(std::cos(ang), std::sin(ang), 0.0);
      const double gap = rng.uniform(0.01, 0.04);
      const Eigen::Matrix3d r = rot.toRotationMatrix();
      const double reach = horizontal_extent(reference, dir) + extent_along(placed, r, dir) + gap;
      const Vec3 lateral(-dir.y(), dir.x(), 0.0);
      t = reach * dir + jx * lateral;
      t.z() = bottom + extent_along(placed, r, up);
      break;
    }
    case RelationKind::Inclined: {
      rot = tilted(20.0, 35.0);
      t = Vec3(jx, jy, top + extent_along(placed, rot.toRotationMatrix(), up));
      break;
    }
    case RelationKind::Inside:
    case RelationKind::InclinedInside: {
      const double floor_z = inside_floor();
      if (relation.kind == RelationKind::InclinedInside) rot = tilted(15.0, 30.0);
      const Eigen::Matrix3d r = rot.toRotationMatrix();
      const double slack = reference.inner_radius - kWallClearance - horizontal_radius(placed, r);
      if (slack < 0.0) {
        throw GenerationError("placed object does not fit inside the reference cavity");
      }
      const double lim = std::min(jt, slack / std::sqrt(2.0));
      t = Vec3(std::clamp(jx, -lim, lim), std::clamp(jy, -lim, lim),
               floor_z + extent_along(placed, r, up));
      break;
    }
  }
  return Pose{t, rot.normalized()};
}

Scene generate_scene(const ShapeSpec& reference, const ShapeSpec& placed,
                     const RelationSpec& relation, const std::string& id) {
  Scene scene;
  scene.id = id.empty() ? to_string(relation.kind) : id;
  scene.reference = sample_surface(reference);
  scene.target = sample_surface(placed);
  scene.relative_pose = relation_pose(*scene.reference.solid, *scene.target.solid, relation);
  scene.tags = {to_string(relation.kind)};
  if (collision_check(scene)) {
    throw GenerationError("generated '" + to_string(relation.kind) + "' scene collides");
  }
  return scene;
}

DatasetSpec DatasetSpec::uniform(std::size_t per_relation, std::uint64_t seed) {
  DatasetSpec spec;
  spec.seed = seed;
  for (auto k : all_relations()) spec.counts[k] = per_relation;
  return spec;
}

std::pair<ShapeSpec, ShapeSpec> draw_shapes(RelationKind kind, Rng& rng, double density) {
  ShapeSpec ref, placed;
  const bool containment = kind == RelationKind::Inside || kind == RelationKind::InclinedInside;
  if (containment) {
    const double r = rng.uniform(0.08, 0.12);
    ref = ShapeSpec::bowl(r, r - rng.uniform(0.008, 0.015), rng.uniform(0.06, 0.10), 0.01);
    if (rng.uniform() < 0.5) {
      placed = ShapeSpec::box(rng.uniform(0.03, 0.06), rng.uniform(0.03, 0.06),
                              rng.uniform(0.03, 0.08));
    } else {
      placed = ShapeSpec::cylinder(rng.uniform(0.015, 0.035), rng.uniform(0.04, 0.09));
    }
  } else {
    if (rng.uniform() < 0.5) {
      ref = ShapeSpec::box(rng.uniform(0.12, 0.25), rng.uniform(0.12, 0.25),
                           rng.uniform(0.05, 0.12));
    } else {
      ref = ShapeSpec::cylinder(rng.uniform(0.06, 0.11), rng.uniform(0.05, 0.12));
    }
    if (rng.uniform() < 0.5) {
      placed = ShapeSpec::box(rng.uniform(0.04, 0.10), rng.uniform(0.04, 0.10),
                              rng.uniform(0.04, 0.10));
    } else {
      placed = ShapeSpec::cylinder(rng.uniform(0.02, 0.045), rng.uniform(0.05, 0.12));
    }
  }
  ref.density = density;
  placed.density = density;
  ref.seed = rng.next();
  placed.seed = rng.next();
  return {ref, placed};
}

Scene random_scene(RelationKind kind, std::uint64_t seed, const std::string& id, double density,
                   double jitter_translation, double jitter_yaw_deg) {
  Rng rng(seed);
  for (int attempt = 0; attempt < 64; ++attempt) {
    auto [ref, placed] = draw_shapes(kind, rng, density);
    RelationSpec rel;
    rel.kind = kind;
    rel.jitter_translation = jitter_translation;
    rel.jitter_yaw_deg = jitter_yaw_deg;
    rel.seed = rng.next();
    try {
      return generate_scene(ref, placed, rel, id);
    } catch (const GenerationError&) {
      continue;
    }
  }
  throw GenerationError("could not realize relation '" + to_string(kind) + "' after 64 draws");
}

RelationDatabase generate_dataset(const DatasetSpec& spec) {
  RelationDatabase db(spec.descriptor);
  for (const auto& [kind, count] : spec.counts) {
    if (count == 0) throw InvalidInput("per-relation counts must be at least 1");
    const std::uint64_t base = derive_seed(spec.seed, to_string(kind));
    for (std::size_t i = 0; i < count; ++i) {
      char id[96];
      std::snprintf(id, sizeof(id), "%s-%s-%03zu", spec.id_prefix.c_str(), to_string(kind).c_str(), i);
      db.add_scene(random_scene(kind, derive_seed(base, i), id, spec.density,
                                spec.jitter_translation, spec.jitter_yaw_deg));
    }
  }
  label_by_tags(db);
  return db;
}

std::string relation_tag(const Scene& scene) { return scene.tags.empty() ? "" : scene.tags.front(); }

void label_by_tags(RelationDatabase& db) {
  const auto ids = db.ids();
  std::vector<std::string> tags;
  tags.reserve(ids.size());
  for (const auto& id : ids) tags.push_back(relation_tag(db.scene(id)));
  for (std::size_t a = 0; a < ids.size(); ++a) {
    for (std::size_t b = a + 1; b < ids.size(); ++b) {
      db.set_label(ids[a], ids[b], tags[a] == tags[b] ? 1 : 0);
    }
  }
}

}  // namespace srel::synth
