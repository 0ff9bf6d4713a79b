#pragma once

#include "spatialrel/descriptor.hpp"
#include "spatialrel/geometry.hpp"
#include "spatialrel/metrics.hpp"
#include "spatialrel/random.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace srel {

/// Binary similarity between two scenes, stored with i < j.
struct SimilarityLabel {
  std::string i;
  std::string j;
  int y = 0;

  bool operator==(const SimilarityLabel&) const = default;
};

struct LabelAuditEntry {
  std::string i;
  std::string j;
  int previous = 0;
  int current = 0;
};

/// Scenes, their cached descriptors, and sparse pairwise similarity labels.
/// Not internally synchronized: any number of concurrent readers, or one
/// writer.
class RelationDatabase {
 public:
  explicit RelationDatabase(DescriptorOptions options = {});

  /// Validates the scene, computes and caches its descriptor. Throws
  /// InvalidInput on a duplicate id.
  const std::string& add_scene(Scene scene);

  /// Upsert; (i, j) and (j, i) address the same label. Re-labeling with a
  /// different value overwrites it and appends an audit entry.
  void set_label(const std::string& i, const std::string& j, int y);

  /// Label for the pair, 1 on the diagonal, nullopt when unknown.
  std::optional<int> label(const std::string& i, const std::string& j) const;

  bool contains(const std::string& id) const { return entries_.count(id) != 0; }
  const Scene& scene(const std::string& id) const;
  const RelationDescriptor& descriptor(const std::string& id) const;

  /// All ids in ascending order.
  std::vector<std::string> ids() const;
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  std::vector<SimilarityLabel> labels() const;
  const std::vector<LabelAuditEntry>& audit() const { return audit_; }
  const DescriptorOptions& options() const { return options_; }

  /// Version string the descriptor cache is keyed on.
  std::string cache_key() const;

  /// Directory layout: dataset.json, scenes/, labels.jsonl, descriptors.json.
  void save(const std::filesystem::path& root) const;
  /// Loads a dataset root; cached descriptors are reused only when their key
  /// matches, otherwise recomputed.
  static RelationDatabase load(const std::filesystem::path& root);

 private:
  struct Entry {
    Scene scene;
    RelationDescriptor descriptor;
  };
  const std::string& insert(Scene scene, RelationDescriptor descriptor);

  DescriptorOptions options_;
  std::map<std::string, Entry> entries_;
  std::map<std::pair<std::string, std::string>, int> labels_;
  std::vector<LabelAuditEntry> audit_;
};

struct KnnResult {
  std::vector<std::string> ids;
  std::vector<double> distances;
  /// Set when fewer than k candidates existed.
  bool truncated = false;
};

/// Linear scan; ascending distance, ties by ascending id. When `candidates`
/// is given only those ids are searched.
KnnResult knn_query(const RelationDatabase& db, const MetricModel& model,
                    const RelationDescriptor& probe, std::size_t k,
                    std::optional<std::span<const std::string>> candidates = std::nullopt);

/// Fraction of probes whose k nearest scenes outside `test_ids` contain at
/// least `threshold` scenes labeled similar to the probe.
double retrieval_success(const RelationDatabase& db, const MetricModel& model,
                         std::span<const std::string> test_ids, std::size_t k = 5,
                         std::size_t threshold = 3);

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

/// Seeded random partition; test size is round((1 - train_frac) * N).
Split random_split(const std::vector<std::string>& ids, double train_frac, std::uint64_t seed);

/// Reads a layout of per-object cloud files and a scene list into a
/// database; see README for the accepted format.
RelationDatabase ingest_freiburg(const std::filesystem::path& root, DescriptorOptions options = {});

}  // namespace srel
