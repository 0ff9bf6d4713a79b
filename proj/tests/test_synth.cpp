#include "doctest.h"
#include "support.hpp"

#include "spatialrel/errors.hpp"
#include "spatialrel/synth.hpp"

#include <numbers>

using namespace srel;
using namespace srel::synth;

namespace {

RelationSpec exact(RelationKind kind, std::uint64_t seed = 0) {
  RelationSpec r;
  r.kind = kind;
  r.jitter_translation = 0;
  r.jitter_yaw_deg = 0;
  r.seed = seed;
  return r;
}

std::vector<double> lowest_z(const Scene& s) {
  double lo_ref = 1e9, lo_tgt = 1e9;
  for (const auto& p : s.reference.points) lo_ref = std::min(lo_ref, p.z());
  for (const auto& p : placed_target(s).points) lo_tgt = std::min(lo_tgt, p.z());
  return {lo_ref, lo_tgt};
}

}  // namespace

TEST_CASE("shape specs") {
  CHECK_NOTHROW(ShapeSpec::box(0.1, 0.2, 0.3).validate());
  CHECK_THROWS_AS(ShapeSpec::box(0.1, 0, 0.3).validate(), InvalidInput);
  CHECK_THROWS_AS(ShapeSpec::cylinder(-1, 0.1).validate(), InvalidInput);
  CHECK_THROWS_AS(ShapeSpec::bowl(0.1, 0.12, 0.1, 0.01).validate(), InvalidInput);
  CHECK_THROWS_AS(ShapeSpec::bowl(0.1, 0.08, 0.1, 0.2).validate(), InvalidInput);
  ShapeSpec s = ShapeSpec::box(0.1, 0.1, 0.1);
  s.density = 0;
  CHECK_THROWS_AS(s.validate(), InvalidInput);
}

TEST_CASE("surface samples lie on the solid") {
  for (const auto& spec : {ShapeSpec::box(0.2, 0.1, 0.05, 1), ShapeSpec::cylinder(0.04, 0.1, 2)}) {
    const PointCloud c = sample_surface(spec);
    REQUIRE(c.solid.has_value());
    for (const auto& p : c.points) CHECK(std::abs(c.solid->signed_distance(p)) < 1e-9);
  }
  const PointCloud bowl = sample_surface(ShapeSpec::bowl(0.1, 0.09, 0.08, 0.01, 3));
  for (const auto& p : bowl.points) CHECK(std::abs(bowl.solid->signed_distance(p)) < 1e-9);
}

TEST_CASE("sample count follows the density") {
  ShapeSpec box = ShapeSpec::box(0.2, 0.1, 0.05, 4);
  const double area = 2 * (0.2 * 0.1 + 0.2 * 0.05 + 0.1 * 0.05);
  const double n = static_cast<double>(sample_surface(box).size());
  CHECK(n / (area * box.density) == doctest::Approx(1.0).epsilon(0.1));
  ShapeSpec cyl = ShapeSpec::cylinder(0.05, 0.1, 5);
  const double carea = 2 * std::numbers::pi * 0.05 * 0.1 + 2 * std::numbers::pi * 0.05 * 0.05;
  CHECK(static_cast<double>(sample_surface(cyl).size()) / (carea * cyl.density) ==
        doctest::Approx(1.0).epsilon(0.1));
  CHECK(sample_surface(box).points == sample_surface(box).points);
  ShapeSpec other = box;
  other.seed = 5;
  CHECK(sample_surface(other).points != sample_surface(box).points);
}

TEST_CASE("stacked unit boxes") {
  const Scene s = generate_scene(ShapeSpec::box(1, 1, 1, 1), ShapeSpec::box(1, 1, 1, 2),
                                 exact(RelationKind::OnTop));
  CHECK((s.relative_pose.translation - Vec3(0, 0, 1)).norm() < 1e-12);
  CHECK(s.relative_pose.rotation.angularDistance(Eigen::Quaterniond::Identity()) < 1e-12);
  CHECK(s.tags == std::vector<std::string>{"on-top"});
}

TEST_CASE("inside keeps the object within the cavity") {
  const double r = 0.09;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RelationSpec rel;
    rel.kind = seed % 2 ? RelationKind::Inside : RelationKind::InclinedInside;
    rel.seed = seed;
    const Scene s = generate_scene(ShapeSpec::bowl(0.1, r, 0.08, 0.01, seed),
                                   ShapeSpec::box(0.05, 0.04, 0.06, seed + 100), rel);
    const double floor_z = -0.04 + 0.01;
    for (const auto& p : placed_target(s).points) {
      CHECK(std::hypot(p.x(), p.y()) <= r);
      CHECK(p.z() >= floor_z - 1e-9);
    }
    CHECK_FALSE(collision_check(s));
  }
}

TEST_CASE("impossible requests") {
  CHECK_THROWS_AS(generate_scene(ShapeSpec::bowl(0.05, 0.04, 0.08, 0.01), ShapeSpec::box(0.1, 0.1, 0.1),
                                 exact(RelationKind::Inside)),
                  GenerationError);
  CHECK_THROWS_AS(generate_scene(ShapeSpec::box(0.2, 0.2, 0.1), ShapeSpec::box(0.05, 0.05, 0.05),
                                 exact(RelationKind::Inside)),
                  GenerationError);
}

TEST_CASE("relation geometry") {
  const ShapeSpec ref = ShapeSpec::box(0.2, 0.2, 0.1, 1);
  const ShapeSpec obj = ShapeSpec::cylinder(0.03, 0.08, 2);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    RelationSpec rel;
    rel.seed = seed;

    rel.kind = RelationKind::NextTo;
    const Scene next = generate_scene(ref, obj, rel);
    const auto z = lowest_z(next);
    CHECK(z[1] == doctest::Approx(z[0]).epsilon(1e-9));
    CHECK(next.relative_pose.translation.head<2>().norm() > 0.1 + 0.03);

    rel.kind = RelationKind::OnTop;
    const Scene top = generate_scene(ref, obj, rel);
    CHECK(lowest_z(top)[1] == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(std::abs(top.relative_pose.translation.x()) <= rel.jitter_translation + 1e-12);

    rel.kind = RelationKind::Inclined;
    const Scene inc = generate_scene(ref, obj, rel);
    const double tilt =
        std::acos(std::clamp((inc.relative_pose.rotation * Vec3::UnitZ()).z(), -1.0, 1.0)) * 180 /
        std::numbers::pi;
    CHECK(tilt >= 20.0 - 1e-9);
    CHECK(tilt <= 35.0 + 1e-9);

    rel.kind = RelationKind::OnTopCorner;
    const Scene corner = generate_scene(ref, obj, rel);
    const Vec3 t = corner.relative_pose.translation;
    CHECK(std::abs(std::abs(t.x()) - 0.1) <= rel.jitter_translation + 1e-12);
    CHECK(std::abs(std::abs(t.y()) - 0.1) <= rel.jitter_translation + 1e-12);
  }
}

TEST_CASE("relation names") {
  CHECK(all_relations().size() == 6);
  for (auto k : all_relations()) CHECK(relation_kind_from_string(to_string(k)) == k);
  CHECK(to_string(RelationKind::InclinedInside) == "inclined-inside");
  CHECK_THROWS_AS(relation_kind_from_string("under"), InvalidInput);
}

TEST_CASE("datasets") {
  const RelationDatabase db = generate_dataset(DatasetSpec::uniform(20, 7));
  CHECK(db.size() == 120);
  CHECK(db.labels().size() == 120 * 119 / 2);
  const auto ids = db.ids();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& a = db.scene(ids[i]);
    CHECK_FALSE(collision_check(a));
    CHECK(relation_tag(a) == a.tags.front());
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      CHECK(db.label(ids[i], ids[j]) == (relation_tag(a) == relation_tag(db.scene(ids[j])) ? 1 : 0));
    }
  }
  CHECK(ids.front().rfind("s-", 0) == 0);

  const RelationDatabase again = generate_dataset(DatasetSpec::uniform(20, 7));
  for (const auto& id : ids) {
    CHECK(again.descriptor(id) == db.descriptor(id));
    CHECK(again.scene(id).target.points == db.scene(id).target.points);
  }
  const RelationDatabase other = generate_dataset(DatasetSpec::uniform(20, 8));
  CHECK_FALSE(other.descriptor(ids[0]) == db.descriptor(ids[0]));

  // On-top scenes sit nearer the on-top centroid than the next-to centroid.
  std::array<double, kDescriptorDim> on{}, next{};
  std::vector<std::string> on_ids;
  for (const auto& id : ids) {
    const auto tag = relation_tag(db.scene(id));
    auto& acc = tag == "on-top" ? on : next;
    if (tag != "on-top" && tag != "next-to") continue;
    if (tag == "on-top") on_ids.push_back(id);
    for (std::size_t b = 0; b < kDescriptorDim; ++b) acc[b] += db.descriptor(id)[b] / 20.0;
  }
  const MetricModel e(MetricKind::Euclidean);
  std::size_t nearer = 0;
  for (const auto& id : on_ids) {
    nearer += e.distance(db.descriptor(id).values(), on) < e.distance(db.descriptor(id).values(), next);
  }
  CHECK(static_cast<double>(nearer) >= 0.9 * static_cast<double>(on_ids.size()));

  DatasetSpec bad = DatasetSpec::uniform(1, 1);
  bad.counts[RelationKind::Inside] = 0;
  CHECK_THROWS_AS(generate_dataset(bad), InvalidInput);
}

TEST_CASE("tag labeling") {
  RelationDatabase db = generate_dataset(DatasetSpec::uniform(2, 9));
  RelationDatabase fresh(db.options());
  for (const auto& id : db.ids()) fresh.add_scene(db.scene(id));
  CHECK(fresh.labels().empty());
  label_by_tags(fresh);
  CHECK(fresh.labels() == db.labels());
}
