#include "spatialrel/relationdb.hpp"

#include "spatialrel/errors.hpp"
#include "spatialrel/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace srel {

namespace fs = std::filesystem;

namespace {

std::pair<std::string, std::string> canonical(const std::string& i, const std::string& j) {
  return i < j ? std::pair{i, j} : std::pair{j, i};
}

// File stem safe for any id.
std::string file_stem(const std::string& id) {
  std::string s;
  for (char c : id) {
    s.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_');
  }
  return s;
}

}  // namespace

RelationDatabase::RelationDatabase(DescriptorOptions options) : options_(options) {}

const std::string& RelationDatabase::insert(Scene scene, RelationDescriptor descriptor) {
  if (entries_.count(scene.id)) throw InvalidInput("duplicate scene id '" + scene.id + "'");
  std::string id = scene.id;
  auto [it, ok] = entries_.emplace(id, Entry{std::move(scene), descriptor});
  return it->first;
}

const std::string& RelationDatabase::add_scene(Scene scene) {
  if (scene.id.empty()) throw InvalidInput("scene id must be non-empty");
  scene.validate();
  auto descriptor = compute_descriptor(scene, WorldConvention::standard(), options_);
  return insert(std::move(scene), descriptor);
}

void RelationDatabase::set_label(const std::string& i, const std::string& j, int y) {
  if (!contains(i)) throw NotFound("unknown scene id '" + i + "'");
  if (!contains(j)) throw NotFound("unknown scene id '" + j + "'");
  if (i == j) throw InvalidInput("diagonal labels are fixed to 1");
  if (y != 0 && y != 1) throw InvalidInput("labels must be 0 or 1");
  const auto key = canonical(i, j);
  auto it = labels_.find(key);
  if (it == labels_.end()) {
    labels_.emplace(key, y);
  } else if (it->second != y) {
    audit_.push_back({key.first, key.second, it->second, y});
    it->second = y;
  }
}

std::optional<int> RelationDatabase::label(const std::string& i, const std::string& j) const {
  if (i == j) return 1;
  auto it = labels_.find(canonical(i, j));
  if (it == labels_.end()) return std::nullopt;
  return it->second;
}

const Scene& RelationDatabase::scene(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw NotFound("unknown scene id '" + id + "'");
  return it->second.scene;
}

const RelationDescriptor& RelationDatabase::descriptor(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw NotFound("unknown scene id '" + id + "'");
  return it->second.descriptor;
}

std::vector<std::string> RelationDatabase::ids() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [id, e] : entries_) out.push_back(id);
  return out;
}

std::vector<SimilarityLabel> RelationDatabase::labels() const {
  std::vector<SimilarityLabel> out;
  out.reserve(labels_.size());
  for (const auto& [key, y] : labels_) out.push_back({key.first, key.second, y});
  return out;
}

std::string RelationDatabase::cache_key() const {
  std::ostringstream ss;
  ss << kDescriptorVersion << ";bins=" << kThetaBins << "," << kPhiBins << "," << kDistBins
     << ";voxel=";
  if (options_.voxel) {
    ss << Json(*options_.voxel).dump();
  } else {
    ss << "none";
  }
  return ss.str();
}

void RelationDatabase::save(const fs::path& root) const {
  fs::create_directories(root / "scenes");
  Json manifest{{"format", "spatialrel-dataset"},
                {"descriptor_version", kDescriptorVersion},
                {"voxel", options_.voxel ? Json(*options_.voxel) : Json(nullptr)}};
  Json scenes = Json::array();
  Json cache{{"key", cache_key()}, {"descriptors", Json::object()}};
  for (const auto& [id, e] : entries_) {
    const std::string stem = file_stem(id);
    save_scene(e.scene, root / "scenes", stem);
    scenes.push_back("scenes/" + stem + ".json");
    cache["descriptors"][id] = e.descriptor.array();
  }
  manifest["scenes"] = std::move(scenes);
  write_text_file(root / "dataset.json", manifest.dump(2) + "\n");
  write_text_file(root / "descriptors.json", cache.dump() + "\n");

  std::string lines;
  for (const auto& [key, y] : labels_) {
    lines += Json{{"i", key.first}, {"j", key.second}, {"y", y}}.dump() + "\n";
  }
  write_text_file(root / "labels.jsonl", lines);

  std::string audit;
  for (const auto& a : audit_) {
    audit += Json{{"i", a.i}, {"j", a.j}, {"previous", a.previous}, {"current", a.current}}.dump() +
             "\n";
  }
  write_text_file(root / "labels_audit.jsonl", audit);
}

RelationDatabase RelationDatabase::load(const fs::path& root) {
  const Json manifest = read_json_file(root / "dataset.json");
  DescriptorOptions options;
  try {
    if (manifest.contains("voxel")) {
      const Json& v = manifest.at("voxel");
      options.voxel = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    }
  } catch (const Json::exception& e) {
    throw ParseError((root / "dataset.json").string() + ": field 'voxel': " + e.what());
  }
  RelationDatabase db(options);

  Json cached = Json::object();
  const fs::path cache_path = root / "descriptors.json";
  if (fs::exists(cache_path)) {
    const Json cache = read_json_file(cache_path);
    if (cache.value("key", std::string{}) == db.cache_key() && cache.contains("descriptors")) {
      cached = cache.at("descriptors");
    }
  }

  if (!manifest.contains("scenes") || !manifest.at("scenes").is_array()) {
    throw ParseError((root / "dataset.json").string() + ": missing array field 'scenes'");
  }
  for (const auto& rel : manifest.at("scenes")) {
    Scene scene = load_scene(root / rel.get<std::string>());
    if (cached.contains(scene.id)) {
      const auto& arr = cached.at(scene.id);
      if (arr.is_array() && arr.size() == kDescriptorDim) {
        std::array<double, kDescriptorDim> bins{};
        for (std::size_t i = 0; i < kDescriptorDim; ++i) bins[i] = arr[i].get<double>();
        scene.validate();
        db.insert(std::move(scene), RelationDescriptor(bins));
        continue;
      }
    }
    db.add_scene(std::move(scene));
  }

  const fs::path labels_path = root / "labels.jsonl";
  if (fs::exists(labels_path)) {
    std::ifstream in(labels_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const Json j = Json::parse(line);
        db.set_label(j.at("i").get<std::string>(), j.at("j").get<std::string>(),
                     j.at("y").get<int>());
      } catch (const Json::exception& e) {
        throw ParseError(labels_path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }
  // Replays leave the audit of this load empty; the saved audit is history.
  db.audit_.clear();
  const fs::path audit_path = root / "labels_audit.jsonl";
  if (fs::exists(audit_path)) {
    std::ifstream in(audit_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        const Json j = Json::parse(line);
        db.audit_.push_back({j.at("i").get<std::string>(), j.at("j").get<std::string>(),
                             j.at("previous").get<int>(), j.at("current").get<int>()});
      } catch (const Json::exception& e) {
        throw ParseError(audit_path.string() + ": " + e.what());
      }
    }
  }
  return db;
}

KnnResult knn_query(const RelationDatabase& db, const MetricModel& model,
                    const RelationDescriptor& probe, std::size_t k,
                    std::optional<std::span<const std::string>> candidates) {
  if (k == 0) throw InvalidInput("k must be at least 1");
  std::vector<std::string> pool;
  if (candidates) {
    pool.assign(candidates->begin(), candidates->end());
  } else {
    pool = db.ids();
  }
  if (pool.empty()) throw InvalidInput("knn query over an empty database");

  std::vector<std::pair<double, const std::string*>> scored;
  scored.reserve(pool.size());
  for (const auto& id : pool) scored.emplace_back(model.distance(probe, db.descriptor(id)), &id);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return *a.second < *b.second;
  });

  KnnResult out;
  out.truncated = k > scored.size();
  const std::size_t n = std::min(k, scored.size());
  for (std::size_t i = 0; i < n; ++i) {
    out.ids.push_back(*scored[i].second);
    out.distances.push_back(scored[i].first);
  }
  return out;
}

double retrieval_success(const RelationDatabase& db, const MetricModel& model,
                         std::span<const std::string> test_ids, std::size_t k,
                         std::size_t threshold) {
  if (test_ids.empty()) throw InvalidInput("retrieval evaluation needs test probes");
  std::vector<std::string> sorted_test(test_ids.begin(), test_ids.end());
  std::sort(sorted_test.begin(), sorted_test.end());
  std::vector<std::string> train;
  for (const auto& id : db.ids()) {
    if (!std::binary_search(sorted_test.begin(), sorted_test.end(), id)) train.push_back(id);
  }
  if (train.empty()) throw InvalidInput("retrieval evaluation needs a training partition");

  std::size_t successes = 0;
  for (const auto& probe : test_ids) {
    const auto nn = knn_query(db, model, db.descriptor(probe), k, std::span<const std::string>(train));
    std::size_t similar = 0;
    for (const auto& id : nn.ids) {
      if (db.label(probe, id) == 1) ++similar;
    }
    if (similar >= threshold) ++successes;
  }
  return static_cast<double>(successes) / static_cast<double>(test_ids.size());
}

Split random_split(const std::vector<std::string>& ids, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw InvalidInput("train fraction must lie in (0, 1)");
  }
  std::vector<std::string> shuffled = ids;
  Rng rng(seed);
  for (std::size_t i = shuffled.size(); i > 1; --i) {
    std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
  }
  const auto n_test = static_cast<std::size_t>(
      std::llround((1.0 - train_frac) * static_cast<double>(shuffled.size())));
  Split s;
  s.test.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_test), shuffled.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

RelationDatabase ingest_freiburg(const fs::path& root, DescriptorOptions options) {
  RelationDatabase db(options);
  const fs::path objects = root / "objects";
  auto object_cloud = [&](const std::string& name) {
    for (const char* ext : {".pcd", ".xyz"}) {
      const fs::path p = objects / (name + ext);
      if (fs::exists(p)) return read_cloud_file(p);
    }
    throw NotFound("no cloud file for object '" + name + "' under " + objects.string());
  };

  const fs::path scenes_path = root / "scenes.txt";
  std::ifstream in(scenes_path);
  if (!in) throw NotFound("cannot open " + scenes_path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string id;
    if (!(ss >> id) || id.front() == '#') continue;
    std::string ref, tgt;
    double t[3], q[4];
    if (!(ss >> ref >> tgt >> t[0] >> t[1] >> t[2] >> q[0] >> q[1] >> q[2] >> q[3])) {
      throw ParseError(scenes_path.string() + ":" + std::to_string(lineno) +
                       ": expected 'id ref target tx ty tz qw qx qy qz [tags]'");
    }
    Scene scene;
    scene.id = id;
    scene.reference.points = object_cloud(ref);
    scene.target.points = object_cloud(tgt);
    scene.relative_pose.translation = Vec3(t[0], t[1], t[2]);
    scene.relative_pose.rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized();
    std::string tag;
    while (ss >> tag) scene.tags.push_back(tag);
    db.add_scene(std::move(scene));
  }

  // Pairs absent from labels.txt stay missing.
  const fs::path labels_path = root / "labels.txt";
  if (fs::exists(labels_path)) {
    std::ifstream lin(labels_path);
    lineno = 0;
    while (std::getline(lin, line)) {
      ++lineno;
      std::istringstream ss(line);
      std::string i, j;
      int y = 0;
      if (!(ss >> i) || i.front() == '#') continue;
      if (!(ss >> j >> y)) {
        throw ParseError(labels_path.string() + ":" + std::to_string(lineno) +
                         ": expected 'i j y'");
      }
      db.set_label(i, j, y);
    }
  }
  return db;
}

}  // namespace srel
