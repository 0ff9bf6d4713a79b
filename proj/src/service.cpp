#include "spatialrel/service.hpp"

#include "spatialrel/errors.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <ostream>

namespace srel::service {

namespace {

struct HttpError {
  int status;
  std::string code;
  std::string message;
  Json detail = nullptr;
};

Response json_response(int status, const Json& body) {
  return {status, body.dump() + "\n", "application/json"};
}

Response error_response(int status, const std::string& code, const std::string& message,
                        const Json& detail = nullptr) {
  Json e{{"code", code}, {"message", message}};
  if (!detail.is_null()) e["detail"] = detail;
  return json_response(status, {{"error", e}});
}

int status_for(const std::string& code) {
  if (code == "not_found") return 404;
  if (code == "session_finalized" || code == "incomplete_session" || code == "protocol_error") {
    return 409;
  }
  if (code == "training_error") return 500;
  return 422;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  const std::string p = path.substr(0, path.find('?'));
  std::size_t at = 0;
  while (at <= p.size()) {
    const std::size_t next = std::min(p.find('/', at), p.size());
    if (next > at) parts.push_back(p.substr(at, next - at));
    at = next + 1;
  }
  return parts;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::optional<std::string> header(const Request& r, const std::string& name) {
  const std::string want = lower(name);
  for (const auto& [k, v] : r.headers) {
    if (lower(k) == want) return v;
  }
  return std::nullopt;
}

Json parse_body(const Request& r) {
  if (r.body.empty()) return Json::object();
  try {
    return Json::parse(r.body);
  } catch (const Json::exception& e) {
    throw HttpError{422, "invalid_json", std::string("request body is not JSON: ") + e.what()};
  }
}

std::string require_string(const Json& body, const std::string& key) {
  if (!body.is_object() || !body.contains(key) || !body.at(key).is_string()) {
    throw HttpError{422, "invalid_body", "field '" + key + "' must be a string"};
  }
  return body.at(key).get<std::string>();
}

Json session_summary(const TeachingSession& s) {
  Json demos = Json::array();
  for (const auto& d : s.demos()) demos.push_back(d.id);
  Json queries = Json::array();
  for (const auto& q : s.queries()) queries.push_back({{"demo", q.demo}, {"neighbors", q.neighbors}});
  Json labels = Json::array();
  for (const auto& n : s.neighbor_set()) {
    auto it = s.teacher_labels().find(n);
    if (it != s.teacher_labels().end()) labels.push_back({{"scene", n}, {"y", it->second}});
  }
  const auto eps = s.recorded_epsilon();
  return {{"id", s.id()},
          {"state", to_string(s.state())},
          {"degenerate", s.degenerate()},
          {"queries_collected", s.queries_collected()},
          {"demos", demos},
          {"queries", queries},
          {"neighbor_set", s.neighbor_set()},
          {"labels", labels},
          {"unlabeled", s.unlabeled()},
          {"epsilon_nn", eps ? Json(*eps) : Json(nullptr)},
          {"decision", s.decision() ? Json(to_string(*s.decision())) : Json(nullptr)},
          {"metric_id", s.outcome() ? Json(s.outcome()->id()) : Json(nullptr)}};
}

}  // namespace

std::vector<Vec3> downsample_for_display(const std::vector<Vec3>& points, std::size_t limit) {
  if (limit == 0 || points.size() <= limit) return points;
  std::vector<Vec3> out;
  out.reserve(limit);
  for (std::size_t i = 0; i < limit; ++i) out.push_back(points[i * points.size() / limit]);
  return out;
}

Service::Service(RelationDatabase db, Config config) : db_(std::move(db)), config_(std::move(config)) {
  config_.teaching.validate();
  config_.training.validate();
  config_.search.validate();
}

std::size_t Service::session_count() const {
  std::lock_guard lock(sessions_mutex_);
  return sessions_.size();
}

std::chrono::steady_clock::time_point Service::now() const {
  return config_.clock ? config_.clock() : std::chrono::steady_clock::now();
}

void Service::expire() {
  const auto t = now();
  std::lock_guard lock(sessions_mutex_);
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (t - it->second->touched > config_.session_ttl) {
      it = sessions_.erase(it);
    } else {
      ++it;
    }
  }
}

std::shared_ptr<Service::Entry> Service::find(const std::string& id) {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw HttpError{404, "not_found", "unknown session '" + id + "'"};
  it->second->touched = now();
  return it->second;
}

Json Service::display_scene(const Scene& scene) const {
  auto cloud = [&](const PointCloud& c) {
    return Json{{"points", points_to_json(downsample_for_display(c.points, config_.max_points))},
                {"total_points", c.points.size()}};
  };
  return {{"id", scene.id},
          {"relative_pose", pose_to_json(scene.relative_pose)},
          {"reference", cloud(scene.reference)},
          {"target", cloud(scene.target)}};
}

Response Service::handle(const Request& request) {
  expire();
  const auto key = header(request, "Idempotency-Key");
  if (request.method != "POST" || !key) {
    return dispatch(request);
  }
  const std::string slot = request.path + "\n" + *key;
  std::shared_ptr<std::mutex> slot_lock;
  {
    std::lock_guard lock(idempotency_mutex_);
    auto& l = key_locks_[slot];
    if (!l) l = std::make_shared<std::mutex>();
    slot_lock = l;
  }
  std::lock_guard guard(*slot_lock);
  {
    std::lock_guard lock(idempotency_mutex_);
    auto it = replies_.find(slot);
    if (it != replies_.end()) {
      if (it->second.fingerprint != request.body) {
        return error_response(422, "idempotency_mismatch",
                              "idempotency key reused with a different body");
      }
      return it->second.response;
    }
  }
  Response r = dispatch(request);
  if (r.status < 500) {
    std::lock_guard lock(idempotency_mutex_);
    replies_[slot] = {request.body, r};
  }
  return r;
}

Response Service::dispatch(const Request& request) {
  try {
    const auto parts = split_path(request.path);
    const std::string& m = request.method;
    auto only = [&](const char* method) {
      if (m != method) {
        throw HttpError{405, "method_not_allowed", m + " is not supported on " + request.path};
      }
    };
    if (!parts.empty() && parts[0] == "scenes") {
      if (parts.size() == 1) {
        only("GET");
        return list_scenes();
      }
      if (parts.size() == 2) {
        only("GET");
        return get_scene(parts[1]);
      }
    } else if (!parts.empty() && parts[0] == "sessions") {
      if (parts.size() == 1) {
        only("POST");
        return create_session(parse_body(request));
      }
      if (parts.size() == 2) {
        only("GET");
        return get_session(parts[1]);
      }
      if (parts.size() == 3) {
        const std::string& action = parts[2];
        if (action == "queries") {
          only("GET");
          return get_queries(parts[1]);
        }
        if (action == "labels") {
          only("POST");
          return post_labels(parts[1], parse_body(request));
        }
        if (action == "finalize") {
          only("POST");
          return finalize(parts[1]);
        }
        if (action == "reproduce") {
          only("POST");
          return reproduce(parts[1], parse_body(request));
        }
      }
    }
    return error_response(404, "not_found", "no route for " + request.path);
  } catch (const HttpError& e) {
    return error_response(e.status, e.code, e.message, e.detail);
  } catch (const NoSolution& e) {
    Json detail = nullptr;
    if (e.best_infeasible()) detail = {{"best_infeasible", candidate_to_json(*e.best_infeasible())}};
    return error_response(422, e.code(), e.what(), detail);
  } catch (const Error& e) {
    return error_response(status_for(e.code()), e.code(), e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

Response Service::list_scenes() const {
  Json scenes = Json::array();
  for (const auto& id : db_.ids()) {
    const Scene& s = db_.scene(id);
    scenes.push_back({{"id", id},
                      {"tags", s.tags},
                      {"reference_points", s.reference.size()},
                      {"target_points", s.target.size()}});
  }
  return json_response(200, {{"scenes", scenes}});
}

Response Service::get_scene(const std::string& id) const {
  if (!db_.contains(id)) throw HttpError{404, "not_found", "unknown scene '" + id + "'"};
  const Scene& s = db_.scene(id);
  Json j = display_scene(s);
  j["tags"] = s.tags;
  return json_response(200, j);
}

Response Service::create_session(const Json& body) {
  if (!body.is_object()) throw HttpError{422, "invalid_body", "expected a JSON object"};
  std::vector<Scene> demos;
  if (body.contains("demo_ids")) {
    const Json& ids = body.at("demo_ids");
    if (!ids.is_array()) throw HttpError{422, "invalid_body", "'demo_ids' must be an array"};
    for (const auto& id : ids) {
      if (!id.is_string()) throw HttpError{422, "invalid_body", "demo ids must be strings"};
      demos.push_back(db_.scene(id.get<std::string>()));
    }
  }
  if (body.contains("demos")) {
    const Json& list = body.at("demos");
    if (!list.is_array()) throw HttpError{422, "invalid_body", "'demos' must be an array"};
    for (const auto& d : list) demos.push_back(scene_from_json(d));
  }
  if (demos.empty()) throw HttpError{422, "invalid_body", "a session needs at least one demo"};

  std::lock_guard lock(sessions_mutex_);
  std::string id;
  if (body.contains("id")) {
    id = require_string(body, "id");
    if (id.empty()) throw HttpError{422, "invalid_body", "session id must be non-empty"};
    if (sessions_.count(id)) throw HttpError{409, "session_exists", "session '" + id + "' exists"};
  } else {
    do {
      id = "session-" + std::to_string(next_session_++);
    } while (sessions_.count(id));
  }
  auto entry = std::make_shared<Entry>(
      TeachingSession(id, std::move(demos), config_.teaching, db_.options()));
  entry->touched = now();
  Json summary = session_summary(entry->session);
  sessions_.emplace(id, std::move(entry));
  return json_response(201, summary);
}

Response Service::get_session(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  return json_response(200, session_summary(e->session));
}

Response Service::get_queries(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  TeachingSession& s = e->session;
  if (!s.queries_collected() && !s.degenerate()) {
    try {
      s.collect_queries(db_, config_.prior);
    } catch (const ProtocolError&) {
      if (!s.degenerate()) throw;
    }
  }
  Json queries = Json::array();
  for (const auto& q : s.queries()) queries.push_back({{"demo", q.demo}, {"neighbors", q.neighbors}});
  Json demos = Json::array();
  for (const auto& d : s.demos()) demos.push_back(display_scene(d));
  Json scenes = Json::object();
  for (const auto& n : s.neighbor_set()) scenes[n] = display_scene(db_.scene(n));
  const auto pending = s.unlabeled();
  return json_response(200, {{"session", s.id()},
                             {"state", to_string(s.state())},
                             {"degenerate", s.degenerate()},
                             {"queries", queries},
                             {"demos", demos},
                             {"scenes", scenes},
                             {"unlabeled", pending},
                             {"cursor", s.neighbor_set().size() - pending.size()},
                             {"total", s.neighbor_set().size()}});
}

Response Service::post_labels(const std::string& id, const Json& body) {
  const Json& list = body.is_object() && body.contains("labels") ? body.at("labels") : body;
  if (!list.is_array()) {
    throw HttpError{422, "invalid_body", "expected an array of {scene, y} objects"};
  }
  std::vector<std::pair<std::string, int>> labels;
  for (const auto& l : list) {
    if (!l.is_object() || !l.contains("scene") || !l.at("scene").is_string() || !l.contains("y") ||
        !l.at("y").is_number_integer()) {
      throw HttpError{422, "invalid_body", "each label needs a string 'scene' and an integer 'y'"};
    }
    labels.emplace_back(l.at("scene").get<std::string>(), l.at("y").get<int>());
  }
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  e->session.submit_labels(labels);
  const auto pending = e->session.unlabeled();
  return json_response(200, {{"session", id},
                             {"state", to_string(e->session.state())},
                             {"accepted", labels.size()},
                             {"unlabeled", pending},
                             {"cursor", e->session.neighbor_set().size() - pending.size()}});
}

Response Service::finalize(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->mutex);
  TeachingSession& s = e->session;
  const MetricModel& model = s.finalize(db_, config_.prior, config_.training);
  const auto eps = s.recorded_epsilon();
  return json_response(200, {{"session", id},
                             {"epsilon_nn", eps ? Json(*eps) : Json(nullptr)},
                             {"decision", to_string(*s.decision())},
                             {"metric_id", model.id()},
                             {"degenerate", s.degenerate()},
                             {"contradictions", s.contradictions().size()}});
}

Response Service::reproduce(const std::string& id, const Json& body) {
  const std::string ref_id = require_string(body, "reference_id");
  const std::string placed_id = require_string(body, "placed_id");
  SearchConfig cfg = config_.search;
  if (body.contains("config")) cfg = search_config_from_json(body.at("config"), cfg);

  auto e = find(id);
  MetricModel model;
  std::vector<RelationDescriptor> demos;
  {
    std::lock_guard lock(e->mutex);
    if (e->session.state() != SessionState::Finalized) {
      throw HttpError{409, "protocol_error", "session '" + id + "' is not finalized"};
    }
    model = *e->session.outcome();
    demos = e->session.demo_descriptors();
    cfg.descriptor = e->session.descriptor_options();
  }
  const Scene& ref_scene = db_.scene(ref_id);
  const Scene& placed_scene = db_.scene(placed_id);
  const SearchResult result =
      optimize_pose(ref_scene.reference, placed_scene.target, demos, model, cfg);
  Json j = search_result_to_json(result);
  j["session"] = id;
  j["metric_id"] = model.id();
  j["reference_id"] = ref_id;
  j["placed_id"] = placed_id;
  j["config"] = search_config_to_json(cfg);
  return json_response(200, j);
}

void serve(Service& service, const std::string& host, int port, const std::string& static_dir,
           std::ostream* log, const ReadyCallback& on_ready) {
  httplib::Server server;
  if (!static_dir.empty() && !server.set_mount_point("/", static_dir)) {
    throw InvalidInput("static directory '" + static_dir + "' does not exist");
  }
  auto bridge = [&service, log](const httplib::Request& req, httplib::Response& res) {
    Request r;
    r.method = req.method;
    r.path = req.path;
    r.body = req.body;
    for (const auto& [k, v] : req.headers) r.headers[k] = v;
    const Response out = service.handle(r);
    res.status = out.status;
    res.set_content(out.body, out.content_type);
    if (log) *log << req.method << " " << req.path << " " << out.status << std::endl;
  };
  const char* api = R"(/(scenes|sessions)(/.*)?)";
  server.Get(api, bridge);
  server.Post(api, bridge);
  server.Put(api, bridge);
  server.Patch(api, bridge);
  server.Delete(api, bridge);
  if (port == 0) {
    port = server.bind_to_any_port(host);
    if (port < 0) throw InvalidInput("cannot bind " + host);
  } else if (!server.bind_to_port(host, port)) {
    throw InvalidInput("cannot bind " + host + ":" + std::to_string(port));
  }
  if (log) *log << "listening on " << host << ":" << port << std::endl;
  if (on_ready) on_ready(port, [&server] { server.stop(); });
  server.listen_after_bind();
}

}  // namespace srel::service
