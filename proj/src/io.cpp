#include "spatialrel/io.hpp"

#include "spatialrel/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace srel {

namespace fs = std::filesystem;

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

bool parse_double(std::string_view tok, double& out) {
  // from_chars rejects a leading '+', which some exporters emit.
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size() && std::isfinite(out);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> toks;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) toks.push_back(line.substr(i, j - i));
    i = j;
  }
  return toks;
}

Vec3 vec3_from_json(const Json& j, const char* field) {
  if (!j.is_array() || j.size() != 3) {
    throw ParseError(std::string("field '") + field + "' must be an array of 3 numbers");
  }
  Vec3 v;
  for (int k = 0; k < 3; ++k) {
    if (!j[k].is_number()) throw ParseError(std::string("field '") + field + "' must be numeric");
    v[k] = j[k].get<double>();
  }
  return v;
}

const Json& require(const Json& j, const char* field) {
  if (!j.is_object() || !j.contains(field)) {
    throw ParseError(std::string("missing field '") + field + "'");
  }
  return j.at(field);
}

}  // namespace

std::vector<Vec3> read_xyz(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open cloud file " + path.string());
  std::vector<Vec3> points;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = split_ws(line);
    if (toks.empty() || toks.front().front() == '#') continue;
    Vec3 p;
    if (toks.size() != 3 || !parse_double(toks[0], p.x()) || !parse_double(toks[1], p.y()) ||
        !parse_double(toks[2], p.z())) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": expected three finite numbers");
    }
    points.push_back(p);
  }
  return points;
}

void write_xyz(const fs::path& path, const std::vector<Vec3>& points) {
  std::string out;
  out.reserve(points.size() * 48);
  for (const auto& p : points) {
    append_double(out, p.x());
    out.push_back(' ');
    append_double(out, p.y());
    out.push_back(' ');
    append_double(out, p.z());
    out.push_back('\n');
  }
  write_text_file(path, out);
}

std::vector<Vec3> read_pcd_ascii(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open cloud file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> fields;
  int ix = -1, iy = -1, iz = -1;
  bool data = false;
  std::vector<Vec3> points;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = split_ws(line);
    if (toks.empty() || toks.front().front() == '#') continue;
    if (!data) {
      if (toks.front() == "FIELDS") {
        for (std::size_t k = 1; k < toks.size(); ++k) {
          if (toks[k] == "x") ix = static_cast<int>(k - 1);
          if (toks[k] == "y") iy = static_cast<int>(k - 1);
          if (toks[k] == "z") iz = static_cast<int>(k - 1);
        }
      } else if (toks.front() == "DATA") {
        if (toks.size() < 2 || toks[1] != "ascii") {
          throw ParseError(path.string() + ": only ASCII PCD is supported");
        }
        if (ix < 0 || iy < 0 || iz < 0) throw ParseError(path.string() + ": no x y z fields");
        data = true;
      }
      continue;
    }
    const auto need = static_cast<std::size_t>(std::max({ix, iy, iz}));
    Vec3 p;
    if (toks.size() <= need || !parse_double(toks[ix], p.x()) || !parse_double(toks[iy], p.y()) ||
        !parse_double(toks[iz], p.z())) {
      // NaN rows mark invalid returns in organized clouds.
      continue;
    }
    points.push_back(p);
  }
  if (!data) throw ParseError(path.string() + ": missing DATA line");
  return points;
}

std::vector<Vec3> read_cloud_file(const fs::path& path) {
  if (path.extension() == ".pcd") return read_pcd_ascii(path);
  return read_xyz(path);
}

Json pose_to_json(const Pose& pose) {
  const auto& q = pose.rotation;
  return Json{{"translation", {pose.translation.x(), pose.translation.y(), pose.translation.z()}},
              {"rotation", {q.w(), q.x(), q.y(), q.z()}}};
}

Pose pose_from_json(const Json& j) {
  Pose pose;
  pose.translation = vec3_from_json(require(j, "translation"), "translation");
  const Json& r = require(j, "rotation");
  if (!r.is_array() || r.size() != 4) throw ParseError("field 'rotation' must be [w,x,y,z]");
  for (const auto& c : r) {
    if (!c.is_number()) throw ParseError("field 'rotation' must be numeric");
  }
  pose.rotation = Eigen::Quaterniond(r[0].get<double>(), r[1].get<double>(), r[2].get<double>(),
                                     r[3].get<double>());
  try {
    pose.validate();
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("relative_pose: ") + e.what());
  }
  return pose;
}

Json solid_to_json(const Solid& s) {
  Json j{{"kind", to_string(s.kind)}, {"pose", pose_to_json(s.pose)}};
  switch (s.kind) {
    case SolidKind::Box:
      j["half_extents"] = {s.half_extents.x(), s.half_extents.y(), s.half_extents.z()};
      break;
    case SolidKind::Cylinder:
      j["radius"] = s.radius;
      j["half_height"] = s.half_height;
      break;
    case SolidKind::Bowl:
      j["radius"] = s.radius;
      j["inner_radius"] = s.inner_radius;
      j["half_height"] = s.half_height;
      j["bottom_thickness"] = s.bottom_thickness;
      break;
  }
  return j;
}

Solid solid_from_json(const Json& j) {
  Solid s;
  try {
    s.kind = solid_kind_from_string(require(j, "kind").get<std::string>());
    if (j.contains("pose")) s.pose = pose_from_json(j.at("pose"));
    switch (s.kind) {
      case SolidKind::Box:
        s.half_extents = vec3_from_json(require(j, "half_extents"), "half_extents");
        break;
      case SolidKind::Cylinder:
        s.radius = require(j, "radius").get<double>();
        s.half_height = require(j, "half_height").get<double>();
        break;
      case SolidKind::Bowl:
        s.radius = require(j, "radius").get<double>();
        s.inner_radius = require(j, "inner_radius").get<double>();
        s.half_height = require(j, "half_height").get<double>();
        s.bottom_thickness = require(j, "bottom_thickness").get<double>();
        break;
    }
    s.validate();
  } catch (const Json::exception& e) {
    throw ParseError(std::string("solid: ") + e.what());
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("solid: ") + e.what());
  }
  return s;
}

Json manifest_to_json(const SceneManifest& m) {
  Json j{{"id", m.id},
         {"reference_cloud", m.reference_cloud},
         {"target_cloud", m.target_cloud},
         {"relative_pose", pose_to_json(m.relative_pose)},
         {"tags", m.tags}};
  if (m.reference_solid) j["reference_solid"] = solid_to_json(*m.reference_solid);
  if (m.target_solid) j["target_solid"] = solid_to_json(*m.target_solid);
  return j;
}

SceneManifest manifest_from_json(const Json& j) {
  SceneManifest m;
  try {
    m.id = require(j, "id").get<std::string>();
    m.reference_cloud = require(j, "reference_cloud").get<std::string>();
    m.target_cloud = require(j, "target_cloud").get<std::string>();
    m.relative_pose = pose_from_json(require(j, "relative_pose"));
    if (j.contains("tags")) m.tags = j.at("tags").get<std::vector<std::string>>();
    if (j.contains("reference_solid")) m.reference_solid = solid_from_json(j.at("reference_solid"));
    if (j.contains("target_solid")) m.target_solid = solid_from_json(j.at("target_solid"));
  } catch (const Json::exception& e) {
    throw ParseError(std::string("scene manifest: ") + e.what());
  }
  if (m.id.empty()) throw ParseError("scene manifest: empty id");
  return m;
}

Scene load_scene(const fs::path& manifest_path) {
  const SceneManifest m = manifest_from_json(read_json_file(manifest_path));
  const fs::path base = manifest_path.parent_path();
  Scene s;
  s.id = m.id;
  s.reference.points = read_cloud_file(base / m.reference_cloud);
  s.reference.solid = m.reference_solid;
  s.target.points = read_cloud_file(base / m.target_cloud);
  s.target.solid = m.target_solid;
  s.relative_pose = m.relative_pose;
  s.tags = m.tags;
  s.validate();
  return s;
}

fs::path save_scene(const Scene& scene, const fs::path& dir, const std::string& stem) {
  fs::create_directories(dir);
  SceneManifest m;
  m.id = scene.id;
  m.reference_cloud = stem + "_ref.xyz";
  m.target_cloud = stem + "_tgt.xyz";
  m.relative_pose = scene.relative_pose;
  m.reference_solid = scene.reference.solid;
  m.target_solid = scene.target.solid;
  m.tags = scene.tags;
  write_xyz(dir / m.reference_cloud, scene.reference.points);
  write_xyz(dir / m.target_cloud, scene.target.points);
  const fs::path manifest = dir / (stem + ".json");
  write_text_file(manifest, manifest_to_json(m).dump(2) + "\n");
  return manifest;
}

Json points_to_json(const std::vector<Vec3>& points) {
  Json out = Json::array();
  for (const auto& p : points) out.push_back({p.x(), p.y(), p.z()});
  return out;
}

std::vector<Vec3> points_from_json(const Json& j) {
  if (!j.is_array()) throw ParseError("field 'points' must be an array");
  std::vector<Vec3> out;
  out.reserve(j.size());
  for (const auto& p : j) out.push_back(vec3_from_json(p, "points"));
  return out;
}

Json cloud_to_json(const PointCloud& cloud) {
  Json j{{"points", points_to_json(cloud.points)}};
  if (cloud.solid) j["solid"] = solid_to_json(*cloud.solid);
  return j;
}

PointCloud cloud_from_json(const Json& j) {
  PointCloud c;
  c.points = points_from_json(require(j, "points"));
  if (j.contains("solid")) c.solid = solid_from_json(j.at("solid"));
  return c;
}

Json scene_to_json(const Scene& scene) {
  return Json{{"id", scene.id},
              {"reference", cloud_to_json(scene.reference)},
              {"target", cloud_to_json(scene.target)},
              {"relative_pose", pose_to_json(scene.relative_pose)},
              {"tags", scene.tags}};
}

Scene scene_from_json(const Json& j) {
  Scene s;
  try {
    s.id = require(j, "id").get<std::string>();
    s.reference = cloud_from_json(require(j, "reference"));
    s.target = cloud_from_json(require(j, "target"));
    s.relative_pose = pose_from_json(require(j, "relative_pose"));
    if (j.contains("tags")) s.tags = j.at("tags").get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    throw ParseError(std::string("scene: ") + e.what());
  }
  try {
    s.validate();
  } catch (const Error& e) {
    throw ParseError(std::string("scene: ") + e.what());
  }
  return s;
}

Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << content;
  if (!out) throw InvalidInput("write failed for " + path.string());
}

}  // namespace srel
