#include "doctest.h"
#include "support.hpp"

#include "spatialrel/errors.hpp"
#include "spatialrel/io.hpp"
#include "spatialrel/relationdb.hpp"
#include "spatialrel/synth.hpp"

#include <fstream>
#include <set>

using namespace srel;
using testing::random_points;
using testing::scene_of;
namespace fs = std::filesystem;

namespace {

const DescriptorOptions kNoVoxel{std::nullopt};

Scene random_scene(Rng& rng, const std::string& id) {
  Scene s = scene_of(random_points(rng, 20, -0.1, 0.1), random_points(rng, 15, -0.05, 0.05),
                     Pose{Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0, 0.4)),
                          Eigen::Quaterniond::Identity()},
                     id);
  return s;
}

RelationDatabase random_db(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  RelationDatabase db(kNoVoxel);
  char buf[16];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "r%03zu", i);
    db.add_scene(random_scene(rng, buf));
  }
  return db;
}

// All scenes in one of two groups by parity of their index.
void label_by_parity(RelationDatabase& db) {
  const auto ids = db.ids();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) db.set_label(ids[i], ids[j], (i + j) % 2 == 0);
  }
}

std::vector<std::string> oracle_knn(const RelationDatabase& db, const MetricModel& m,
                                    const RelationDescriptor& probe, std::size_t k) {
  std::vector<std::pair<double, std::string>> all;
  for (const auto& id : db.ids()) all.emplace_back(m.distance(probe, db.descriptor(id)), id);
  std::sort(all.begin(), all.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].second);
  return out;
}

}  // namespace

TEST_CASE("add and read back") {
  Rng rng(1);
  RelationDatabase db(kNoVoxel);
  Scene s = random_scene(rng, "a");
  s.tags = {"on-top"};
  const std::string id = db.add_scene(s);
  CHECK(id == "a");
  const Scene& back = db.scene("a");
  CHECK(back.id == s.id);
  CHECK(back.tags == s.tags);
  CHECK(back.reference.points == s.reference.points);
  CHECK(back.relative_pose.translation == s.relative_pose.translation);
  CHECK(db.descriptor("a") == compute_descriptor(s, WorldConvention::standard(), kNoVoxel));
  CHECK_THROWS_AS(db.add_scene(s), InvalidInput);
  CHECK_THROWS_AS(db.scene("zzz"), NotFound);
  CHECK_THROWS_AS(db.descriptor("zzz"), NotFound);
  Scene nameless = s;
  nameless.id = "";
  CHECK_THROWS_AS(db.add_scene(nameless), InvalidInput);
  Scene empty = s;
  empty.id = "e";
  empty.target.points.clear();
  CHECK_THROWS_AS(db.add_scene(empty), Error);
  CHECK_FALSE(db.contains("e"));
}

TEST_CASE("labels") {
  RelationDatabase db = random_db(2, 3);
  db.set_label("r000", "r001", 1);
  db.set_label("r000", "r001", 1);
  CHECK(db.labels().size() == 1);
  CHECK(db.audit().empty());
  CHECK(db.label("r001", "r000") == 1);
  CHECK(db.label("r000", "r000") == 1);
  CHECK_FALSE(db.label("r000", "r002").has_value());

  db.set_label("r001", "r000", 0);
  CHECK(db.labels().size() == 1);
  CHECK(db.label("r000", "r001") == 0);
  REQUIRE(db.audit().size() == 1);
  CHECK(db.audit()[0].previous == 1);
  CHECK(db.audit()[0].current == 0);

  const auto stored = db.labels().front();
  CHECK(stored.i < stored.j);
  CHECK_THROWS_AS(db.set_label("r000", "r000", 1), InvalidInput);
  CHECK_THROWS_AS(db.set_label("r000", "nope", 1), NotFound);
  CHECK_THROWS_AS(db.set_label("r000", "r002", 2), InvalidInput);
}

TEST_CASE("knn matches the full sort oracle") {
  const RelationDatabase db = random_db(3, 50);
  Rng rng(33);
  for (const auto& m : {MetricModel(MetricKind::Euclidean), MetricModel(MetricKind::ChiSquare),
                        MetricModel(MetricKind::KL)}) {
    for (int t = 0; t < 10; ++t) {
      const Scene probe_scene = random_scene(rng, "probe");
      const auto probe = compute_descriptor(probe_scene, WorldConvention::standard(), kNoVoxel);
      const auto got = knn_query(db, m, probe, 7);
      CHECK(got.ids == oracle_knn(db, m, probe, 7));
      CHECK_FALSE(got.truncated);
      for (std::size_t i = 1; i < got.distances.size(); ++i) {
        CHECK(got.distances[i - 1] <= got.distances[i]);
      }
    }
  }
}

TEST_CASE("knn edge cases") {
  const RelationDatabase db = random_db(4, 12);
  const MetricModel e(MetricKind::Euclidean);
  const auto& d5 = db.descriptor("r005");
  const auto first = knn_query(db, e, d5, 1);
  CHECK(first.ids == std::vector<std::string>{"r005"});
  CHECK(first.distances[0] == 0.0);

  const auto all = knn_query(db, e, d5, 12);
  CHECK_FALSE(all.truncated);
  std::set<std::string> seen(all.ids.begin(), all.ids.end());
  CHECK(seen.size() == 12);

  const auto over = knn_query(db, e, d5, 40);
  CHECK(over.truncated);
  CHECK(over.ids.size() == 12);

  CHECK_THROWS_AS(knn_query(db, e, d5, 0), InvalidInput);
  CHECK_THROWS_AS(knn_query(RelationDatabase{}, e, d5, 1), InvalidInput);

  const std::vector<std::string> subset{"r001", "r007", "r011"};
  const auto sub = knn_query(db, e, d5, 5, std::span<const std::string>(subset));
  CHECK(sub.ids.size() == 3);
  CHECK(sub.truncated);
  for (const auto& id : sub.ids) CHECK(std::find(subset.begin(), subset.end(), id) != subset.end());
}

TEST_CASE("knn ties break by id") {
  Rng rng(5);
  RelationDatabase db(kNoVoxel);
  const Scene base = random_scene(rng, "x");
  for (const char* id : {"c", "a", "d", "b"}) {
    Scene s = base;
    s.id = id;
    db.add_scene(s);
  }
  const auto r = knn_query(db, MetricModel(MetricKind::Euclidean), db.descriptor("a"), 4);
  CHECK(r.ids == std::vector<std::string>{"a", "b", "c", "d"});
}

TEST_CASE("identity mahalanobis ranks like euclidean") {
  const RelationDatabase db = random_db(6, 40);
  const MetricModel eye = MetricModel::identity_mahalanobis();
  const MetricModel e(MetricKind::Euclidean);
  for (const auto& id : db.ids()) {
    CHECK(knn_query(db, eye, db.descriptor(id), 10).ids == knn_query(db, e, db.descriptor(id), 10).ids);
  }
}

TEST_CASE("retrieval success") {
  Rng rng(7);
  RelationDatabase same(kNoVoxel);
  const Scene base = random_scene(rng, "x");
  for (int i = 0; i < 8; ++i) {
    Scene s = base;
    s.id = "s" + std::to_string(i);
    same.add_scene(s);
  }
  // Make everything similar.
  for (const auto& a : same.ids()) {
    for (const auto& b : same.ids()) {
      if (a < b) same.set_label(a, b, 1);
    }
  }
  const std::vector<std::string> test{"s0", "s1"};
  CHECK(retrieval_success(same, MetricModel(MetricKind::Euclidean), test) == 1.0);
  for (const auto& a : same.ids()) {
    for (const auto& b : same.ids()) {
      if (a < b) same.set_label(a, b, 0);
    }
  }
  CHECK(retrieval_success(same, MetricModel(MetricKind::Euclidean), test) == 0.0);
  CHECK_THROWS_AS(retrieval_success(same, MetricModel(MetricKind::Euclidean), {}), InvalidInput);
}

TEST_CASE("retrieval success matches a direct count") {
  RelationDatabase db = random_db(8, 30);
  label_by_parity(db);
  const MetricModel e(MetricKind::Euclidean);
  const auto split = random_split(db.ids(), 0.75, 3);
  std::size_t hits = 0;
  for (const auto& probe : split.test) {
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& id : split.train) {
      ranked.emplace_back(e.distance(db.descriptor(probe), db.descriptor(id)), id);
    }
    std::sort(ranked.begin(), ranked.end());
    std::size_t similar = 0;
    for (std::size_t r = 0; r < 5; ++r) similar += db.label(probe, ranked[r].second) == 1;
    hits += similar >= 3;
  }
  CHECK(retrieval_success(db, e, split.test) ==
        doctest::Approx(static_cast<double>(hits) / static_cast<double>(split.test.size())));
}

TEST_CASE("random split") {
  std::vector<std::string> ids;
  for (int i = 0; i < 40; ++i) ids.push_back("id" + std::to_string(i));
  const auto a = random_split(ids, 0.75, 9);
  CHECK(a.test.size() == 10);
  CHECK(a.train.size() == 30);
  std::set<std::string> all(a.train.begin(), a.train.end());
  all.insert(a.test.begin(), a.test.end());
  CHECK(all.size() == 40);
  const auto b = random_split(ids, 0.75, 9);
  CHECK(a.test == b.test);
  CHECK(random_split(ids, 0.75, 10).test != a.test);
}

TEST_CASE("save and load") {
  RelationDatabase db = random_db(10, 6);
  db.set_label("r000", "r001", 1);
  db.set_label("r002", "r001", 0);
  testing::TempDir dir;
  db.save(dir.path());
  CHECK(fs::exists(dir / "dataset.json"));
  CHECK(fs::exists(dir / "labels.jsonl"));
  CHECK(fs::exists(dir / "descriptors.json"));

  const RelationDatabase back = RelationDatabase::load(dir.path());
  CHECK(back.ids() == db.ids());
  CHECK(back.labels() == db.labels());
  CHECK(back.options().voxel == db.options().voxel);
  for (const auto& id : db.ids()) {
    CHECK(back.descriptor(id) == db.descriptor(id));
    CHECK(back.scene(id).reference.points == db.scene(id).reference.points);
    // Cache coherence: recomputation reproduces the stored vector bit for bit.
    CHECK(compute_descriptor(back.scene(id), WorldConvention::standard(), back.options()) ==
          back.descriptor(id));
  }

  std::ifstream in(dir / "labels.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const Json j = Json::parse(line);
    CHECK(j.contains("i"));
    CHECK(j.contains("y"));
    ++n;
  }
  CHECK(n == 2);
}

TEST_CASE("stale descriptor cache is recomputed") {
  RelationDatabase db = random_db(11, 3);
  testing::TempDir dir;
  db.save(dir.path());
  Json cache = read_json_file(dir / "descriptors.json");
  for (auto& [id, v] : cache["descriptors"].items()) {
    for (auto& x : v) x = 0.5;
  }
  // Matching key: the cached vectors are reused as stored.
  write_text_file(dir / "descriptors.json", cache.dump());
  CHECK(RelationDatabase::load(dir.path()).descriptor("r000")[0] == 0.5);
  // Old key: recomputed from the scenes.
  cache["key"] = "pair-histogram-v0";
  write_text_file(dir / "descriptors.json", cache.dump());
  CHECK(RelationDatabase::load(dir.path()).descriptor("r000") == db.descriptor("r000"));
  CHECK(db.cache_key().find(kDescriptorVersion) != std::string::npos);
}

TEST_CASE("load diagnostics") {
  testing::TempDir dir;
  CHECK_THROWS_AS(RelationDatabase::load(dir.path()), Error);
  write_text_file(dir / "dataset.json", "{\"format\": \"spatialrel-dataset\"");
  CHECK_THROWS_AS(RelationDatabase::load(dir.path()), ParseError);
  write_text_file(dir / "dataset.json", "{\"format\": \"spatialrel-dataset\"}");
  CHECK_THROWS_AS(RelationDatabase::load(dir.path()), ParseError);
}

TEST_CASE("freiburg layout ingestion") {
  testing::TempDir dir;
  fs::create_directories(dir / "objects");
  Rng rng(12);
  write_xyz(dir / "objects" / "mug.xyz", random_points(rng, 30, -0.04, 0.04));
  write_xyz(dir / "objects" / "box.xyz", random_points(rng, 30, -0.1, 0.1));
  write_text_file(dir / "scenes.txt",
                  "# id ref target tx ty tz qw qx qy qz tags\n"
                  "s1 box mug 0 0 0.2 1 0 0 0 on-top\n"
                  "s2 box mug 0.25 0 0 1 0 0 0 next-to\n"
                  "s3 box mug 0 0 0.21 1 0 0 0 on-top\n");
  write_text_file(dir / "labels.txt", "s1 s3 1\ns1 s2 0\n");
  const RelationDatabase db = ingest_freiburg(dir.path());
  CHECK(db.size() == 3);
  CHECK(db.scene("s2").tags == std::vector<std::string>{"next-to"});
  CHECK(db.scene("s2").relative_pose.translation.x() == doctest::Approx(0.25));
  CHECK(db.label("s1", "s3") == 1);
  CHECK(db.label("s1", "s2") == 0);
  CHECK_FALSE(db.label("s2", "s3").has_value());

  write_text_file(dir / "scenes.txt", "s1 box mug 0 0\n");
  CHECK_THROWS_AS(ingest_freiburg(dir.path()), ParseError);
  write_text_file(dir / "scenes.txt", "s1 box cup 0 0 0.2 1 0 0 0\n");
  CHECK_THROWS_AS(ingest_freiburg(dir.path()), NotFound);
}

TEST_CASE("synthetic databases round trip through disk") {
  const RelationDatabase db = synth::generate_dataset(synth::DatasetSpec::uniform(2, 13));
  testing::TempDir dir;
  db.save(dir.path());
  const RelationDatabase back = RelationDatabase::load(dir.path());
  CHECK(back.size() == 12);
  CHECK(back.labels() == db.labels());
  for (const auto& id : db.ids()) {
    CHECK(back.descriptor(id) == db.descriptor(id));
    CHECK(back.scene(id).tags == db.scene(id).tags);
  }
}
