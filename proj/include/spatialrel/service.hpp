#pragma once

#include "spatialrel/lmnn.hpp"
#include "spatialrel/metrics.hpp"
#include "spatialrel/posesearch.hpp"
#include "spatialrel/relationdb.hpp"
#include "spatialrel/teaching.hpp"

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

namespace srel::service {

struct Request {
  std::string method;
  std::string path;  // may carry a query string, which is ignored
  std::string body;
  std::map<std::string, std::string> headers;
};

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

using Clock = std::function<std::chrono::steady_clock::time_point()>;

struct Config {
  MetricModel prior{MetricKind::Euclidean};
  TeachingConfig teaching;
  /// Used for local metrics; the seed is taken as given.
  TrainingConfig training;
  /// Defaults for reproduce requests; request bodies override fields.
  SearchConfig search;
  /// Render budget per object for clouds shipped to clients.
  std::size_t max_points = 2000;
  /// Sessions untouched for this long are dropped.
  std::chrono::seconds session_ttl{std::chrono::hours(24)};
  Clock clock;  // steady_clock::now when empty
};

/// Every n-th point so that at most `limit` remain, keeping the first.
std::vector<Vec3> downsample_for_display(const std::vector<Vec3>& points, std::size_t limit);

/// HTTP facade over a read-only dataset and in-memory teaching sessions.
///
///   GET  /scenes                      ids, tags and point counts
///   GET  /scenes/{id}                 scene with display clouds
///   POST /sessions                    {"demo_ids": [...]} or {"demos": [scene, ...]}, optional "id"
///   GET  /sessions/{id}               session document
///   GET  /sessions/{id}/queries       Q neighbors per demo with display clouds
///   POST /sessions/{id}/labels        [{"scene": id, "y": 0|1}, ...] or {"labels": [...]}
///   POST /sessions/{id}/finalize      {"epsilon_nn", "decision", "metric_id"}
///   POST /sessions/{id}/reproduce     {"reference_id", "placed_id", "config"}
///
/// POST requests carrying an Idempotency-Key header are answered once and
/// replayed on retry. Errors are {"error": {"code", "message"}}.
class Service {
 public:
  Service(RelationDatabase db, Config config = {});

  Response handle(const Request& request);

  const RelationDatabase& database() const { return db_; }
  const Config& config() const { return config_; }
  std::size_t session_count() const;

 private:
  struct Entry {
    explicit Entry(TeachingSession s) : session(std::move(s)) {}
    std::mutex mutex;
    TeachingSession session;
    std::chrono::steady_clock::time_point touched;
  };
  struct Stored {
    std::string fingerprint;
    Response response;
  };

  Response dispatch(const Request& request);
  Response list_scenes() const;
  Response get_scene(const std::string& id) const;
  Response create_session(const Json& body);
  Response get_session(const std::string& id);
  Response get_queries(const std::string& id);
  Response post_labels(const std::string& id, const Json& body);
  Response finalize(const std::string& id);
  Response reproduce(const std::string& id, const Json& body);

  std::shared_ptr<Entry> find(const std::string& id);
  void expire();
  std::chrono::steady_clock::time_point now() const;
  Json display_scene(const Scene& scene) const;

  RelationDatabase db_;
  Config config_;
  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::size_t next_session_ = 1;
  std::mutex idempotency_mutex_;
  std::map<std::string, Stored> replies_;
  std::map<std::string, std::shared_ptr<std::mutex>> key_locks_;
};

using ReadyCallback = std::function<void(int port, std::function<void()> stop)>;

/// Binds the service to host:port with cpp-httplib and blocks. When
/// `static_dir` is non-empty its files are served under /. Port 0 picks a
/// free port; `on_ready` receives the bound port and a stop handle.
void serve(Service& service, const std::string& host, int port, const std::string& static_dir,
           std::ostream* log = nullptr, const ReadyCallback& on_ready = {});

}  // namespace srel::service
