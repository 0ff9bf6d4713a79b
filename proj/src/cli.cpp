#include "spatialrel/cli.hpp"

#include "spatialrel/errors.hpp"
#include "spatialrel/experiments.hpp"
#include "spatialrel/io.hpp"
#include "spatialrel/lmnn.hpp"
#include "spatialrel/posesearch.hpp"
#include "spatialrel/random.hpp"
#include "spatialrel/relationdb.hpp"
#include "spatialrel/service.hpp"
#include "spatialrel/synth.hpp"
#include "spatialrel/teaching.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace srel::cli {

namespace fs = std::filesystem;

std::uint64_t dataset_seed(std::uint64_t seed) { return derive_seed(seed, "cli.dataset"); }
std::uint64_t training_seed(std::uint64_t seed) { return derive_seed(seed, "cli.training"); }
std::uint64_t teaching_seed(std::uint64_t seed) { return derive_seed(seed, "cli.teaching"); }
std::uint64_t search_seed(std::uint64_t seed) { return derive_seed(seed, "cli.search"); }

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::set<std::string> kSubcommands{"synth",         "descriptor",   "train",
                                         "knn",           "eval-retrieval", "eval-map",
                                         "teach-offline", "reproduce",    "serve"};
const std::set<std::string> kGlobalKeys{"seed",    "data-root", "metric",  "log",
                                        "json",    "threads",   "dry-run", "timing"};

std::string format(const char* fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  char buf[512];
  std::vsnprintf(buf, sizeof(buf), fmt, ap);
  va_end(ap);
  return buf;
}

struct Globals {
  std::uint64_t seed = 0;
  std::string data_root;
  std::string metric = "euclidean";
  std::string log;
  std::string config;
  bool json = false;
  std::size_t threads = 1;
  bool dry_run = false;
  bool timing = false;
};

struct Context {
  Context(Globals globals, std::ostream& o, std::ostream& e) : g(std::move(globals)), out(o), err(e) {}

  Globals g;
  std::ostream& out;
  std::ostream& err;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::ofstream log_file;

  fs::path data_root(bool required) const {
    if (!g.data_root.empty()) return g.data_root;
    if (const char* env = std::getenv("REL_DATA_ROOT"); env && *env) return env;
    if (required) throw UsageError("no data root: pass --data-root or set REL_DATA_ROOT");
    return {};
  }

  RelationDatabase open_db() const { return RelationDatabase::load(data_root(true)); }

  /// Destination for training progress lines.
  std::ostream* training_log() {
    if (!g.log.empty()) {
      if (!log_file.is_open()) {
        log_file.open(g.log);
        if (!log_file) throw InvalidInput("cannot open log file '" + g.log + "'");
      }
      return &log_file;
    }
    return g.json ? nullptr : &out;
  }

  void emit(Json j, const std::string& text) {
    if (g.timing) {
      j["wall_time_s"] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    if (g.json) {
      out << j.dump(2) << "\n";
    } else {
      out << text;
      if (g.timing) out << format("wall time %.2f s\n", j["wall_time_s"].get<double>());
    }
  }
};

struct DescriptorFlags {
  double voxel = 0.01;
  bool no_voxel = false;

  void add(CLI::App* app) {
    app->add_option("--voxel", voxel, "Voxel edge for descriptor downsampling (m)");
    app->add_flag("--no-voxel", no_voxel, "Use every point for descriptors");
  }
  DescriptorOptions options() const {
    DescriptorOptions o;
    if (no_voxel) {
      o.voxel.reset();
    } else {
      o.voxel = voxel;
    }
    return o;
  }
};

void add_training_options(CLI::App* app, TrainingConfig& t) {
  app->add_option("--k-targets", t.k_targets, "Target neighbors per example");
  app->add_option("--margin", t.margin, "Hinge margin");
  app->add_option("--tradeoff", t.tradeoff, "Weight of the imposter term");
  app->add_option("--max-iters", t.max_iters, "Gradient iterations");
  app->add_option("--step", t.initial_step, "Initial step size");
  app->add_option("--refresh", t.imposter_refresh, "Imposter refresh period");
}

void add_teaching_options(CLI::App* app, TeachingConfig& t) {
  app->add_option("-Q,--queries", t.queries_per_demo, "Nearest neighbors queried per demo");
  app->add_option("--epsilon-star", t.epsilon_star, "Confidence gate");
  app->add_flag("--no-dissimilar-rule", [&t](std::int64_t) { t.dissimilar_rule = false; },
                "Disable the shared-dissimilar completion rule");
  app->add_flag("--no-similar-rule", [&t](std::int64_t) { t.similar_rule = false; },
                "Disable the shared-similar completion rule");
}

MetricModel resolve_metric(const std::string& spec, const RelationDatabase* db,
                           const TrainingConfig& training, std::ostream* log) {
  if (spec == "lmnn") {
    if (!db) throw UsageError("--metric lmnn needs a dataset to train on");
    return train_lmnn(*db, training, nullptr, log);
  }
  if (spec.find('/') != std::string::npos || spec.ends_with(".json")) return load_metric(spec);
  return MetricModel(metric_kind_from_string(spec));
}

std::vector<Scene> load_demos(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InvalidInput("demo directory '" + dir.string() + "' not found");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Scene> demos;
  for (const auto& f : files) demos.push_back(load_scene(f));
  if (demos.empty()) throw InvalidInput("no scene manifests in '" + dir.string() + "'");
  return demos;
}

PointCloud load_cloud(const fs::path& path) {
  if (path.extension() == ".json") return cloud_from_json(read_json_file(path));
  PointCloud c;
  c.points = read_cloud_file(path);
  return c;
}

Json descriptor_json(const RelationDescriptor& d) {
  auto group = [](std::span<const double> s) { return std::vector<double>(s.begin(), s.end()); };
  auto sum = [](std::span<const double> s) {
    double t = 0.0;
    for (double v : s) t += v;
    return t;
  };
  return {{"theta", group(d.theta())},
          {"phi", group(d.phi())},
          {"dist", group(d.dist())},
          {"sums", {{"theta", sum(d.theta())}, {"phi", sum(d.phi())}, {"dist", sum(d.dist())}}}};
}

std::string numbers(std::span<const double> v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += format("%.17g", v[i]);
  }
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<synth::RelationKind> parse_relations(const std::string& list) {
  std::vector<synth::RelationKind> out;
  for (const auto& n : split_list(list)) out.push_back(synth::relation_kind_from_string(n));
  return out;
}

// ---- subcommands ---------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t per_relation = 20;
  std::string relations;
  double density = 3000.0;
  double jitter_translation = 0.01;
  double jitter_yaw = 15.0;
  std::string prefix = "s";
  DescriptorFlags descriptor;
};

void cmd_synth(Context& ctx, const SynthArgs& a) {
  const fs::path root = a.out.empty() ? ctx.data_root(true) : fs::path(a.out);
  synth::DatasetSpec spec;
  const auto kinds = a.relations.empty() ? synth::all_relations() : parse_relations(a.relations);
  for (auto k : kinds) spec.counts[k] = a.per_relation;
  spec.seed = dataset_seed(ctx.g.seed);
  spec.density = a.density;
  spec.jitter_translation = a.jitter_translation;
  spec.jitter_yaw_deg = a.jitter_yaw;
  spec.descriptor = a.descriptor.options();
  spec.id_prefix = a.prefix;
  const RelationDatabase db = synth::generate_dataset(spec);
  if (!ctx.g.dry_run) db.save(root);

  Json counts = Json::object();
  for (auto k : kinds) counts[synth::to_string(k)] = a.per_relation;
  const Json j{{"root", root.string()},
               {"written", !ctx.g.dry_run},
               {"scenes", db.size()},
               {"labels", db.labels().size()},
               {"cache_key", db.cache_key()},
               {"relations", counts}};
  ctx.emit(j, format("%s %zu scenes and %zu labels to %s\n",
                     ctx.g.dry_run ? "would write" : "wrote", db.size(), db.labels().size(),
                     root.string().c_str()));
}

struct DescriptorArgs {
  std::string scene;
  std::string id;
  DescriptorFlags descriptor;
};

void cmd_descriptor(Context& ctx, const DescriptorArgs& a) {
  if (a.scene.empty() == a.id.empty()) throw UsageError("pass exactly one of --scene or --id");
  Scene scene = a.scene.empty() ? ctx.open_db().scene(a.id) : load_scene(a.scene);
  const RelationDescriptor d =
      compute_descriptor(scene, WorldConvention::standard(), a.descriptor.options());
  Json j = descriptor_json(d);
  j["id"] = scene.id;
  ctx.emit(j, "theta " + numbers(d.theta()) + "\nphi " + numbers(d.phi()) + "\ndist " +
                  numbers(d.dist()) + "\n");
}

struct TrainArgs {
  std::string out;
  TrainingConfig training;
};

void cmd_train(Context& ctx, TrainArgs a) {
  if (a.out.empty() && !ctx.g.dry_run) throw UsageError("train needs --out (or --dry-run)");
  const RelationDatabase db = ctx.open_db();
  a.training.seed = training_seed(ctx.g.seed);
  TrainingState state;
  const MetricModel model = train_lmnn(db, a.training, &state, ctx.training_log());
  const bool write = !ctx.g.dry_run && !a.out.empty();
  if (write) save_metric(model, a.out);
  std::size_t accepted = 0;
  for (const auto& r : state.log) accepted += r.accepted ? 1 : 0;
  const Json j{{"metric_id", model.id()},
               {"scenes", db.size()},
               {"iterations", state.log.size()},
               {"accepted", accepted},
               {"initial_loss", state.loss_trace.front()},
               {"final_loss", state.loss_trace.back()},
               {"warnings", state.warnings},
               {"out", write ? Json(a.out) : Json(nullptr)}};
  ctx.emit(j, format("metric %s: loss %.6g -> %.6g over %zu iterations (%zu accepted)\n",
                     model.id().c_str(), state.loss_trace.front(), state.loss_trace.back(),
                     state.log.size(), accepted));
}

struct KnnArgs {
  std::string probe;
  std::string scene;
  std::size_t k = 5;
  TrainingConfig training;
};

void cmd_knn(Context& ctx, KnnArgs a) {
  if (a.probe.empty() == a.scene.empty()) throw UsageError("pass exactly one of --probe or --scene");
  const RelationDatabase db = ctx.open_db();
  a.training.seed = training_seed(ctx.g.seed);
  const MetricModel model = resolve_metric(ctx.g.metric, &db, a.training, nullptr);
  RelationDescriptor probe;
  std::string probe_id;
  if (!a.probe.empty()) {
    probe = db.descriptor(a.probe);
    probe_id = a.probe;
  } else {
    const Scene s = load_scene(a.scene);
    probe = compute_descriptor(s, WorldConvention::standard(), db.options());
    probe_id = s.id;
  }
  std::vector<std::string> candidates;
  for (const auto& id : db.ids()) {
    if (id != probe_id) candidates.push_back(id);
  }
  const KnnResult r = knn_query(db, model, probe, a.k, std::span<const std::string>(candidates));
  Json neighbors = Json::array();
  std::string text;
  for (std::size_t i = 0; i < r.ids.size(); ++i) {
    neighbors.push_back(
        {{"id", r.ids[i]}, {"distance", r.distances[i]}, {"tags", db.scene(r.ids[i]).tags}});
    text += format("%zu %s %.6g\n", i + 1, r.ids[i].c_str(), r.distances[i]);
  }
  const Json j{{"probe", probe_id},
               {"metric", ctx.g.metric},
               {"metric_id", model.id()},
               {"k", a.k},
               {"neighbors", neighbors},
               {"truncated", r.truncated}};
  ctx.emit(j, text);
}

struct RetrievalArgs {
  RetrievalProtocol protocol;
  std::size_t per_relation = 20;
  double density = 3000.0;
};

void cmd_eval_retrieval(Context& ctx, RetrievalArgs a) {
  const fs::path root = ctx.data_root(false);
  RelationDatabase db;
  std::string source;
  if (root.empty()) {
    synth::DatasetSpec spec = synth::DatasetSpec::uniform(a.per_relation, dataset_seed(ctx.g.seed));
    spec.density = a.density;
    db = synth::generate_dataset(spec);
    source = "synthetic";
  } else {
    db = RelationDatabase::load(root);
    source = root.string();
  }
  a.protocol.seed = ctx.g.seed;
  const RetrievalReport report = evaluate_retrieval(db, a.protocol);
  Json scores = Json::array();
  std::string text = format("%zu splits, train fraction %.2f, success = at least %zu of %zu\n",
                            a.protocol.splits, a.protocol.train_frac, a.protocol.threshold,
                            a.protocol.k);
  for (const auto& s : report.scores) {
    scores.push_back(
        {{"metric", s.metric}, {"mean", s.mean}, {"std", s.stddev}, {"per_split", s.per_split}});
    text += format("%-14s %.4f +- %.4f\n", s.metric.c_str(), s.mean, s.stddev);
  }
  const Json j{{"dataset", {{"source", source}, {"scenes", db.size()}}},
               {"splits", a.protocol.splits},
               {"train_frac", a.protocol.train_frac},
               {"k", a.protocol.k},
               {"threshold", a.protocol.threshold},
               {"scores", scores}};
  ctx.emit(j, text);
}

struct MapArgs {
  MapProtocol protocol;
  std::string relations;
  std::size_t floor_trials = 10000;
};

void cmd_eval_map(Context& ctx, MapArgs a) {
  if (!a.relations.empty()) a.protocol.relations = parse_relations(a.relations);
  a.protocol.seed = ctx.g.seed;
  const MapReport report = evaluate_map(a.protocol);
  const double floor = random_map_floor(a.protocol.candidates, a.protocol.relevant, a.floor_trials,
                                        derive_seed(ctx.g.seed, "cli.map.floor"));
  Json runs = Json::array();
  for (const auto& run : report.runs) {
    Json rounds = Json::array();
    for (const auto& r : run.rounds) {
      rounds.push_back({{"round", r.round},
                        {"database_size", r.database_size},
                        {"ap_learned", r.ap_learned},
                        {"ap_prior", r.ap_prior},
                        {"ap_euclidean", r.ap_euclidean},
                        {"epsilon_nn", r.epsilon_nn},
                        {"decisions", r.decisions},
                        {"map_learned", r.map_learned},
                        {"map_prior", r.map_prior},
                        {"map_euclidean", r.map_euclidean}});
    }
    runs.push_back({{"seed", run.seed}, {"rounds", rounds}});
  }
  const Json j{{"relations", report.relations},
               {"candidates", a.protocol.candidates},
               {"relevant", a.protocol.relevant},
               {"rounds", a.protocol.rounds},
               {"repeats", a.protocol.repeats},
               {"demos_per_round", a.protocol.demos_per_round},
               {"map_learned", report.map_learned},
               {"map_prior", report.map_prior},
               {"map_euclidean", report.map_euclidean},
               {"random_floor", floor},
               {"runs", runs}};
  ctx.emit(j, format("MAP learned %.4f  prior %.4f  euclidean %.4f  random %.4f\n",
                     report.map_learned, report.map_prior, report.map_euclidean, floor));
}

struct TeachArgs {
  std::string session;
  std::string demos;
  std::string id = "offline";
  std::string tag;
  std::string out;
  std::string metric_out;
  TeachingConfig teaching;
  TrainingConfig training;
};

void cmd_teach_offline(Context& ctx, TeachArgs a) {
  if (a.session.empty() == a.demos.empty()) throw UsageError("pass exactly one of --session or --demos");
  const RelationDatabase db = ctx.open_db();
  TrainingConfig prior_cfg = a.training;
  prior_cfg.seed = training_seed(ctx.g.seed);
  const MetricModel prior = resolve_metric(ctx.g.metric, &db, prior_cfg, nullptr);
  TeachingSession session = a.session.empty()
                                ? TeachingSession(a.id, load_demos(a.demos), a.teaching, db.options())
                                : load_session(a.session);
  std::string tag = a.tag.empty() ? synth::relation_tag(session.demos().front()) : a.tag;
  if (tag.empty()) throw UsageError("the first demo carries no relation tag; pass --tag");
  TrainingConfig local = a.training;
  local.seed = teaching_seed(ctx.g.seed);
  const MetricModel& model = run_offline_session(session, db, prior, tag_oracle(db, tag), local);
  if (!ctx.g.dry_run) {
    if (!a.out.empty()) save_session(session, a.out);
    if (!a.metric_out.empty()) save_metric(model, a.metric_out);
  }
  Json labels = Json::array();
  for (const auto& n : session.neighbor_set()) {
    labels.push_back({{"scene", n}, {"y", session.teacher_labels().at(n)}});
  }
  const auto eps = session.recorded_epsilon();
  const Json j{{"session", session.id()},
               {"tag", tag},
               {"prior_id", prior.id()},
               {"neighbors", session.neighbor_set()},
               {"labels", labels},
               {"epsilon_nn", eps ? Json(*eps) : Json(nullptr)},
               {"decision", to_string(*session.decision())},
               {"metric_id", model.id()},
               {"degenerate", session.degenerate()},
               {"contradictions", session.contradictions().size()}};
  ctx.emit(j, format("epsilon_nn %s, decision %s, metric %s\n",
                     eps ? format("%.4f", *eps).c_str() : "n/a",
                     to_string(*session.decision()).c_str(), model.id().c_str()));
}

struct ReproduceArgs {
  std::string demos;
  std::string session;
  std::string ref;
  std::string place;
  std::string ref_id;
  std::string place_id;
  std::string out_cloud;
  std::optional<double> extent;
  std::string rotation = "yaw";
  SearchConfig search;
  TrainingConfig training;
  DescriptorFlags descriptor;
};

void cmd_reproduce(Context& ctx, ReproduceArgs a) {
  if (a.demos.empty() == a.session.empty()) throw UsageError("pass exactly one of --demos or --session");
  const bool by_file = !a.ref.empty() || !a.place.empty();
  const bool by_id = !a.ref_id.empty() || !a.place_id.empty();
  if (by_file == by_id) throw UsageError("pass --ref and --place, or --ref-id and --place-id");

  std::optional<RelationDatabase> db;
  if (by_id || ctx.g.metric == "lmnn") db = ctx.open_db();
  PointCloud reference, placed;
  if (by_file) {
    if (a.ref.empty() || a.place.empty()) throw UsageError("--ref and --place go together");
    reference = load_cloud(a.ref);
    placed = load_cloud(a.place);
  } else {
    if (a.ref_id.empty() || a.place_id.empty()) throw UsageError("--ref-id and --place-id go together");
    reference = db->scene(a.ref_id).reference;
    placed = db->scene(a.place_id).target;
  }

  SearchConfig cfg = a.search;
  cfg.extent = a.extent;
  cfg.rotation = rotation_sampling_from_string(a.rotation);
  cfg.threads = ctx.g.threads;
  cfg.seed = search_seed(ctx.g.seed);
  cfg.descriptor = a.descriptor.options();

  MetricModel model;
  std::vector<RelationDescriptor> demo_desc;
  std::size_t demo_count = 0;
  if (!a.session.empty()) {
    const TeachingSession s = load_session(a.session);
    if (s.state() != SessionState::Finalized) throw InvalidInput("session is not finalized");
    model = *s.outcome();
    demo_desc = s.demo_descriptors();
    cfg.descriptor = s.descriptor_options();
    demo_count = s.demos().size();
  } else {
    TrainingConfig t = a.training;
    t.seed = training_seed(ctx.g.seed);
    model = resolve_metric(ctx.g.metric, db ? &*db : nullptr, t, nullptr);
    for (const auto& d : load_demos(a.demos)) {
      demo_desc.push_back(compute_descriptor(d, WorldConvention::standard(), cfg.descriptor));
    }
    demo_count = demo_desc.size();
  }
  const SearchResult result = optimize_pose(reference, placed, demo_desc, model, cfg);
  if (!ctx.g.dry_run && !a.out_cloud.empty()) {
    write_xyz(a.out_cloud, transform_cloud(placed, result.best.pose).points);
  }
  Json j = search_result_to_json(result);
  j["metric_id"] = model.id();
  j["demos"] = demo_count;
  j["reference_points"] = reference.size();
  j["placed_points"] = placed.size();
  j["config"] = search_config_to_json(cfg);
  const Vec3& t = result.best.pose.translation;
  const auto& q = result.best.pose.rotation;
  ctx.emit(j, format("pose t = (%.4f, %.4f, %.4f) q = (%.4f, %.4f, %.4f, %.4f) loss %.6g; "
                     "%zu samples, %zu collision checks\n",
                     t.x(), t.y(), t.z(), q.w(), q.x(), q.y(), q.z(), result.best.loss,
                     result.evaluated_samples, result.collision_checks));
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
  std::size_t max_points = 2000;
  TeachingConfig teaching;
  TrainingConfig training;
};

void cmd_serve(Context& ctx, ServeArgs a) {
  RelationDatabase db = ctx.open_db();
  TrainingConfig prior_cfg = a.training;
  prior_cfg.seed = training_seed(ctx.g.seed);
  service::Config cfg;
  cfg.prior = resolve_metric(ctx.g.metric, &db, prior_cfg, nullptr);
  cfg.teaching = a.teaching;
  cfg.training = a.training;
  cfg.training.seed = teaching_seed(ctx.g.seed);
  cfg.search.threads = ctx.g.threads;
  cfg.search.seed = search_seed(ctx.g.seed);
  cfg.max_points = a.max_points;
  service::Service svc(std::move(db), cfg);
  ctx.err << "prior metric " << cfg.prior.id() << ", " << svc.database().size() << " scenes\n";
  service::serve(svc, a.host, a.port, a.static_dir, &ctx.err);
}

}  // namespace

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].starts_with("--config=")) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  const Json j = read_json_file(path);
  if (!j.is_object()) throw InvalidInput("config file must hold a JSON object");
  std::vector<std::string> global, local;
  for (const auto& [raw, v] : j.items()) {
    std::string key = raw;
    std::replace(key.begin(), key.end(), '_', '-');
    if (key == "config") throw InvalidInput("config files cannot nest --config");
    auto& dst = kGlobalKeys.count(key) ? global : local;
    const std::string flag = (key.size() == 1 ? "-" : "--") + key;
    if (v.is_boolean()) {
      if (v.get<bool>()) dst.push_back(flag);
    } else if (v.is_null()) {
      continue;
    } else if (v.is_array()) {
      std::string joined;
      for (const auto& e : v) {
        if (!joined.empty()) joined += ',';
        joined += e.is_string() ? e.get<std::string>() : e.dump();
      }
      dst.push_back(flag);
      dst.push_back(joined);
    } else if (v.is_string()) {
      dst.push_back(flag);
      dst.push_back(v.get<std::string>());
    } else if (v.is_number()) {
      dst.push_back(flag);
      dst.push_back(v.dump());
    } else {
      throw InvalidInput("config key '" + raw + "' has an unsupported value");
    }
  }
  std::vector<std::string> out = global;
  auto sub = std::find_if(args.begin(), args.end(),
                          [](const std::string& a) { return kSubcommands.count(a) != 0; });
  out.insert(out.end(), args.begin(), sub);
  if (sub != args.end()) {
    out.push_back(*sub);
    out.insert(out.end(), local.begin(), local.end());
    out.insert(out.end(), sub + 1, args.end());
  } else {
    out.insert(out.end(), local.begin(), local.end());
  }
  return out;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatial relation learning from demonstrations", "relctl"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  Globals g;
  app.add_option("--seed", g.seed, "Run seed; every random stream derives from it");
  app.add_option("--config", g.config, "JSON file whose entries mirror the flags");
  app.add_option("--data-root", g.data_root, "Dataset root (falls back to REL_DATA_ROOT)");
  app.add_option("--metric", g.metric,
                 "Metric: a baseline name, lmnn (train on the dataset) or a model file");
  app.add_option("--log", g.log, "Write training progress to this file");
  app.add_flag("--json", g.json, "Machine-readable JSON on standard output");
  app.add_option("--threads", g.threads, "Worker cap")->check(CLI::PositiveNumber);
  app.add_flag("--dry-run", g.dry_run, "Compute everything but write nothing");
  app.add_flag("--timing", g.timing, "Report wall time");

  auto sub = [&](const char* name, const char* help) {
    CLI::App* s = app.add_subcommand(name, help);
    s->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    s->fallthrough();
    return s;
  };

  SynthArgs synth_args;
  CLI::App* synth_cmd = sub("synth", "Generate a labeled synthetic dataset");
  synth_cmd->add_option("--out", synth_args.out, "Output root (defaults to the data root)");
  synth_cmd->add_option("--per-relation", synth_args.per_relation, "Scenes per relation");
  synth_cmd->add_option("--relations", synth_args.relations, "Relation tags (comma separated)");

  synth_cmd->add_option("--density", synth_args.density, "Surface points per square meter");
  synth_cmd->add_option("--jitter-translation", synth_args.jitter_translation, "Lateral jitter (m)");
  synth_cmd->add_option("--jitter-yaw", synth_args.jitter_yaw, "Yaw jitter (degrees)");
  synth_cmd->add_option("--prefix", synth_args.prefix, "Scene id prefix");
  synth_args.descriptor.add(synth_cmd);

  DescriptorArgs desc_args;
  CLI::App* desc_cmd = sub("descriptor", "Print the 39-bin relation descriptor of a scene");
  desc_cmd->add_option("--scene", desc_args.scene, "Scene manifest");
  desc_cmd->add_option("--id", desc_args.id, "Scene id in the data root");
  desc_args.descriptor.add(desc_cmd);

  TrainArgs train_args;
  CLI::App* train_cmd = sub("train", "Train an LMNN metric on the dataset labels");
  train_cmd->add_option("--out", train_args.out, "Model file to write");
  add_training_options(train_cmd, train_args.training);

  KnnArgs knn_args;
  CLI::App* knn_cmd = sub("knn", "Nearest scenes to a probe");
  knn_cmd->add_option("--probe", knn_args.probe, "Scene id in the data root");
  knn_cmd->add_option("--scene", knn_args.scene, "Scene manifest");
  knn_cmd->add_option("-k,--k", knn_args.k, "Neighbors")->check(CLI::PositiveNumber);
  add_training_options(knn_cmd, knn_args.training);

  RetrievalArgs ret_args;
  ret_args.protocol.metrics = {"euclidean", "chi-square", "bhattacharyya", "correlation",
                               "kl",        "js",         "lmnn"};
  CLI::App* ret_cmd = sub("eval-retrieval", "Retrieval success over random splits");
  ret_cmd->add_option("--splits", ret_args.protocol.splits, "Random splits");
  ret_cmd->add_option("--train-frac", ret_args.protocol.train_frac, "Training fraction");
  ret_cmd->add_option("-k,--k", ret_args.protocol.k, "Neighbors per probe");
  ret_cmd->add_option("--threshold", ret_args.protocol.threshold, "Similar neighbors for success");
  std::string metric_list;
  ret_cmd->add_option("--metrics", metric_list, "Metrics (comma separated)");

  ret_cmd->add_option("--per-relation", ret_args.per_relation,
                      "Synthetic scenes per relation when no data root is set");
  ret_cmd->add_option("--density", ret_args.density, "Synthetic surface density");
  add_training_options(ret_cmd, ret_args.protocol.training);

  MapArgs map_args;
  CLI::App* map_cmd = sub("eval-map", "Pose ranking MAP over teaching rounds");
  map_cmd->add_option("--rounds", map_args.protocol.rounds, "Rounds per repeat");
  map_cmd->add_option("--repeats", map_args.protocol.repeats, "Independent repeats");
  map_cmd->add_option("--demos-per-round", map_args.protocol.demos_per_round, "New demos per round");
  map_cmd->add_option("--candidates", map_args.protocol.candidates, "Candidate poses per relation");
  map_cmd->add_option("--relevant", map_args.protocol.relevant, "Correct candidates per relation");
  map_cmd->add_option("--prior-per-relation", map_args.protocol.prior_per_relation,
                      "Prior database scenes per relation");
  map_cmd->add_option("--density", map_args.protocol.density, "Surface density");
  map_cmd->add_option("--relations", map_args.relations, "Evaluated relations (comma separated)");

  map_cmd->add_option("--floor-trials", map_args.floor_trials, "Shuffles for the random floor");
  add_teaching_options(map_cmd, map_args.protocol.teaching);
  add_training_options(map_cmd, map_args.protocol.training);

  TeachArgs teach_args;
  CLI::App* teach_cmd = sub("teach-offline", "Run a teaching session with an oracle teacher");
  teach_cmd->add_option("--session", teach_args.session, "Session file to replay");
  teach_cmd->add_option("--demos", teach_args.demos, "Directory of demo scene manifests");
  teach_cmd->add_option("--id", teach_args.id, "Session id for --demos");
  teach_cmd->add_option("--tag", teach_args.tag, "Oracle relation tag (default: first demo's)");
  teach_cmd->add_option("--out", teach_args.out, "Write the finalized session here");
  teach_cmd->add_option("--metric-out", teach_args.metric_out, "Write the chosen metric here");
  add_teaching_options(teach_cmd, teach_args.teaching);
  add_training_options(teach_cmd, teach_args.training);

  ReproduceArgs rep_args;
  CLI::App* rep_cmd = sub("reproduce", "Search a pose that reproduces the demonstrated relation");
  rep_cmd->add_option("--demos", rep_args.demos, "Directory of demo scene manifests");
  rep_cmd->add_option("--session", rep_args.session, "Finalized session (demos and metric)");
  rep_cmd->add_option("--ref", rep_args.ref, "Reference cloud (.xyz, .pcd or .json)");
  rep_cmd->add_option("--place", rep_args.place, "Placed cloud (.xyz, .pcd or .json)");
  rep_cmd->add_option("--ref-id", rep_args.ref_id, "Reference object of a dataset scene");
  rep_cmd->add_option("--place-id", rep_args.place_id, "Target object of a dataset scene");
  rep_cmd->add_option("--out-cloud", rep_args.out_cloud, "Write the placed cloud in the found pose");
  rep_cmd->add_option("--extent", rep_args.extent, "Translation half-width (m)");
  rep_cmd->add_option("--resolution", rep_args.search.resolution, "Translation step (m)");
  rep_cmd->add_option("--rotation", rep_args.rotation, "Rotation sampling: yaw or so3");
  rep_cmd->add_option("--yaw-step", rep_args.search.yaw_step_deg, "Yaw step (degrees)");
  rep_cmd->add_option("--rotation-count", rep_args.search.rotation_count, "Rotations in so3 mode");
  rep_cmd->add_option("--collision-epsilon", rep_args.search.collision_epsilon,
                      "Allowed interpenetration (m)");
  rep_cmd->add_flag("--strict", rep_args.search.strict_collision, "Check every sample for collisions");
  rep_args.descriptor.add(rep_cmd);
  add_training_options(rep_cmd, rep_args.training);

  ServeArgs serve_args;
  CLI::App* serve_cmd = sub("serve", "HTTP service for the teaching interface");
  serve_cmd->add_option("--host", serve_args.host, "Bind address");
  serve_cmd->add_option("--port", serve_args.port, "Port");
  serve_cmd->add_option("--static", serve_args.static_dir, "Directory of UI files served at /");
  serve_cmd->add_option("--max-points", serve_args.max_points, "Display points per object");
  add_teaching_options(serve_cmd, serve_args.teaching);
  add_training_options(serve_cmd, serve_args.training);

  std::vector<std::string> args;
  try {
    args = expand_config(raw_args);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    CLI::App* failing = &app;
    for (CLI::App* s : app.get_subcommands()) failing = s;
    err << failing->help();
    return 2;
  }

  Context ctx{g, out, err};
  try {
    if (!metric_list.empty()) ret_args.protocol.metrics = split_list(metric_list);
    if (synth_cmd->parsed()) {
      cmd_synth(ctx, synth_args);
    } else if (desc_cmd->parsed()) {
      cmd_descriptor(ctx, desc_args);
    } else if (train_cmd->parsed()) {
      cmd_train(ctx, train_args);
    } else if (knn_cmd->parsed()) {
      cmd_knn(ctx, knn_args);
    } else if (ret_cmd->parsed()) {
      cmd_eval_retrieval(ctx, ret_args);
    } else if (map_cmd->parsed()) {
      cmd_eval_map(ctx, map_args);
    } else if (teach_cmd->parsed()) {
      cmd_teach_offline(ctx, teach_args);
    } else if (rep_cmd->parsed()) {
      cmd_reproduce(ctx, rep_args);
    } else if (serve_cmd->parsed()) {
      cmd_serve(ctx, serve_args);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const NoSolution& e) {
    err << "error [" << e.code() << "]: " << e.what() << "\n";
    if (g.json && e.best_infeasible()) {
      out << Json{{"error", e.code()}, {"best_infeasible", candidate_to_json(*e.best_infeasible())}}
                 .dump(2)
          << "\n";
    }
    return 1;
  } catch (const Error& e) {
    err << "error [" << e.code() << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace srel::cli
