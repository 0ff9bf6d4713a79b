#pragma once

#include "spatialrel/geometry.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace srel {

using Json = nlohmann::json;

// ASCII cloud files: one "x y z" per line, '#' comments ignored.
std::vector<Vec3> read_xyz(const std::filesystem::path& path);
void write_xyz(const std::filesystem::path& path, const std::vector<Vec3>& points);

/// ASCII PCD (DATA ascii) reader; only the x y z fields are used.
std::vector<Vec3> read_pcd_ascii(const std::filesystem::path& path);

/// Dispatches on extension (.pcd or anything else as xyz).
std::vector<Vec3> read_cloud_file(const std::filesystem::path& path);

Json pose_to_json(const Pose& pose);
Pose pose_from_json(const Json& j);

Json solid_to_json(const Solid& solid);
Solid solid_from_json(const Json& j);

/// Manifest fields; clouds are referenced by path relative to the manifest.
struct SceneManifest {
  std::string id;
  std::string reference_cloud;
  std::string target_cloud;
  Pose relative_pose;
  std::optional<Solid> reference_solid;
  std::optional<Solid> target_solid;
  std::vector<std::string> tags;
};

Json manifest_to_json(const SceneManifest& m);
SceneManifest manifest_from_json(const Json& j);

/// Loads a scene manifest and its cloud files.
Scene load_scene(const std::filesystem::path& manifest_path);

/// Writes `<dir>/<stem>.json` plus `<stem>_ref.xyz` and `<stem>_tgt.xyz`.
/// Returns the manifest path.
std::filesystem::path save_scene(const Scene& scene, const std::filesystem::path& dir,
                                 const std::string& stem);

/// Inline forms with points as [[x, y, z], ...], used by session files and
/// the HTTP API.
Json points_to_json(const std::vector<Vec3>& points);
std::vector<Vec3> points_from_json(const Json& j);
Json cloud_to_json(const PointCloud& cloud);
PointCloud cloud_from_json(const Json& j);
Json scene_to_json(const Scene& scene);
Scene scene_from_json(const Json& j);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace srel
