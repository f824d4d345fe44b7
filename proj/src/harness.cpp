#include "esaw/harness.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "esaw/binio.hpp"
#include "esaw/snapshot.hpp"

namespace esaw::harness {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Logging

namespace {

int log_level() {
  static const int level = [] {
    const char* env = std::getenv("ESAW_LOG");
    if (env == nullptr) return 1;
    const std::string v = env;
    if (v == "quiet") return 0;
    if (v == "debug") return 2;
    return 1;
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) {
    std::fprintf(stderr, "[esaw] %s\n", msg.c_str());
  }
}

void log_warn(const std::string& msg) {
  if (log_level() >= 1) {
    std::fprintf(stderr, "[esaw] warning: %s\n", msg.c_str());
  }
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// Config parsing

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) {
    throw ConfigError("config: '" + where + "' must be an object");
  }
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("config: unknown key '" + where + (where.empty() ? "" : ".") + key + "'");
    }
  }
}

double get_number(const json& obj, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) throw ConfigError(std::string("config: '") + key + "' must be a number");
  return obj[key].get<double>();
}

std::uint64_t get_uint(const json& obj, const char* key, std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number_unsigned() && !obj[key].is_number_integer()) {
    throw ConfigError(std::string("config: '") + key + "' must be an unsigned integer");
  }
  const auto v = obj[key].get<std::int64_t>();
  if (v < 0) throw ConfigError(std::string("config: '") + key + "' must be >= 0");
  return static_cast<std::uint64_t>(v);
}

std::string get_string(const json& obj, const char* key, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_string()) throw ConfigError(std::string("config: '") + key + "' must be a string");
  return obj[key].get<std::string>();
}

}  // namespace

RunMode run_mode_from_name(const std::string& name) {
  if (name == "pretrain") return RunMode::Pretrain;
  if (name == "es") return RunMode::Es;
  if (name == "grpo") return RunMode::Grpo;
  if (name == "random-walk") return RunMode::RandomWalk;
  if (name == "eval") return RunMode::Eval;
  throw ConfigError("config: unknown mode '" + name + "'");
}

const char* run_mode_name(RunMode mode) {
  switch (mode) {
    case RunMode::Pretrain: return "pretrain";
    case RunMode::Es: return "es";
    case RunMode::Grpo: return "grpo";
    case RunMode::RandomWalk: return "random-walk";
    case RunMode::Eval: return "eval";
  }
  return "?";
}

RunConfig parse_run_config(const std::string& json_text) {
  json root = json::parse(json_text, nullptr, /*allow_exceptions=*/false);
  if (root.is_discarded()) {
    throw ConfigError("config: invalid JSON");
  }
  check_keys(root, "",
             {"schema_version", "mode", "output_dir", "metrics_every", "checkpoint_every",
              "suite", "theta0", "es", "penalty", "grpo", "pretrain", "random_walk", "eval",
              "sweep", "backend"});
  RunConfig cfg;
  if (get_uint(root, "schema_version", kConfigSchemaVersion) != kConfigSchemaVersion) {
    throw ConfigError("config: unsupported schema_version");
  }
  if (!root.contains("mode")) {
    throw ConfigError("config: 'mode' is required");
  }
  cfg.mode = run_mode_from_name(root["mode"].get<std::string>());
  cfg.output_dir = get_string(root, "output_dir", "");
  cfg.metrics_every = static_cast<std::uint32_t>(get_uint(root, "metrics_every", 1));
  cfg.checkpoint_every =
      static_cast<std::uint32_t>(get_uint(root, "checkpoint_every", kDefaultCheckpointEvery));

  if (root.contains("suite")) {
    const json& suite = root["suite"];
    check_keys(suite, "suite", {"path", "generate"});
    if (suite.contains("path") == suite.contains("generate")) {
      throw ConfigError("config: suite needs exactly one of 'path' or 'generate'");
    }
    if (suite.contains("path")) {
      cfg.suite_path = fs::path(suite["path"].get<std::string>());
    } else {
      const json& gen = suite["generate"];
      check_keys(gen, "suite.generate",
                 {"seed", "input_dim", "hidden_dim", "num_classes", "num_priors",
                  "anchor_spread", "input_noise_scale", "train_size", "eval_size"});
      SuiteParams params;
      params.seed = get_uint(gen, "seed", params.seed);
      params.input_dim = static_cast<std::uint32_t>(get_uint(gen, "input_dim", params.input_dim));
      params.hidden_dim =
          static_cast<std::uint32_t>(get_uint(gen, "hidden_dim", params.hidden_dim));
      params.num_classes =
          static_cast<std::uint32_t>(get_uint(gen, "num_classes", params.num_classes));
      params.num_priors =
          static_cast<std::uint32_t>(get_uint(gen, "num_priors", params.num_priors));
      params.anchor_spread = get_number(gen, "anchor_spread", params.anchor_spread);
      params.input_noise_scale =
          get_number(gen, "input_noise_scale", params.input_noise_scale);
      params.train_size =
          static_cast<std::uint32_t>(get_uint(gen, "train_size", params.train_size));
      params.eval_size = static_cast<std::uint32_t>(get_uint(gen, "eval_size", params.eval_size));
      cfg.suite_generate = params;
    }
  }

  if (root.contains("theta0")) {
    cfg.theta0_path = fs::path(root["theta0"].get<std::string>());
  }

  if (root.contains("es")) {
    const json& es = root["es"];
    check_keys(es, "es",
               {"alpha", "sigma", "population", "iterations", "run_seed",
                "normalization_epsilon"});
    cfg.es.sigma = get_number(es, "sigma", cfg.es.sigma);
    cfg.es.alpha = get_number(es, "alpha", cfg.es.sigma / 2.0);
    cfg.es.population = static_cast<std::uint32_t>(get_uint(es, "population", cfg.es.population));
    cfg.es.iterations =
        static_cast<std::uint32_t>(get_uint(es, "iterations", cfg.es.iterations));
    cfg.es.run_seed = get_uint(es, "run_seed", cfg.es.run_seed);
    cfg.es.normalization_epsilon =
        get_number(es, "normalization_epsilon", cfg.es.normalization_epsilon);
  }

  if (root.contains("penalty")) {
    const json& pen = root["penalty"];
    check_keys(pen, "penalty",
               {"kind", "lambda", "huber_delta", "weights", "fisher_samples", "path_file",
                "damping"});
    cfg.penalty.spec.kind = penalty_kind_from_name(get_string(pen, "kind", "none"));
    const bool lambda_given = pen.contains("lambda");
    if (cfg.penalty.spec.kind == PenaltyKind::None) {
      if (lambda_given) {
        cfg.warnings.push_back("penalty.lambda ignored: penalty.kind is 'none'");
      }
      cfg.penalty.spec.lambda = 0.0;
    } else {
      cfg.penalty.spec.lambda = lambda_given
                                    ? get_number(pen, "lambda", 0.0)
                                    : PenaltySpec::default_lambda(cfg.penalty.spec.kind);
    }
    cfg.penalty.spec.huber_delta = get_number(pen, "huber_delta", cfg.penalty.spec.huber_delta);
    cfg.penalty.weights_mode = get_string(pen, "weights", "uniform");
    if (cfg.penalty.weights_mode != "uniform" && cfg.penalty.weights_mode != "fisher" &&
        cfg.penalty.weights_mode != "path") {
      throw ConfigError("config: penalty.weights must be uniform|fisher|path");
    }
    cfg.penalty.fisher_samples =
        static_cast<std::uint32_t>(get_uint(pen, "fisher_samples", cfg.penalty.fisher_samples));
    cfg.penalty.path_file = get_string(pen, "path_file", "");
    cfg.penalty.damping = get_number(pen, "damping", cfg.penalty.damping);
  }
  cfg.es.penalty = cfg.penalty.spec;  // weights resolved at run time

  if (root.contains("grpo")) {
    const json& g = root["grpo"];
    check_keys(g, "grpo",
               {"learning_rate", "group_size", "clip_epsilon", "kl_coefficient", "batch_size",
                "epochs", "run_seed"});
    cfg.grpo.learning_rate = get_number(g, "learning_rate", cfg.grpo.learning_rate);
    cfg.grpo.group_size = static_cast<std::uint32_t>(get_uint(g, "group_size", cfg.grpo.group_size));
    cfg.grpo.clip_epsilon = get_number(g, "clip_epsilon", cfg.grpo.clip_epsilon);
    cfg.grpo.kl_coefficient = get_number(g, "kl_coefficient", cfg.grpo.kl_coefficient);
    cfg.grpo.batch_size = static_cast<std::uint32_t>(get_uint(g, "batch_size", cfg.grpo.batch_size));
    cfg.grpo.epochs = static_cast<std::uint32_t>(get_uint(g, "epochs", cfg.grpo.epochs));
    cfg.grpo.run_seed = get_uint(g, "run_seed", cfg.grpo.run_seed);
    if (cfg.mode != RunMode::Grpo) {
      cfg.warnings.push_back("grpo section ignored for mode " +
                             std::string(run_mode_name(cfg.mode)));
    }
  }

  if (root.contains("pretrain")) {
    const json& p = root["pretrain"];
    check_keys(p, "pretrain", {"seed", "threshold", "max_steps", "learning_rate"});
    cfg.pretrain.seed = get_uint(p, "seed", cfg.pretrain.seed);
    cfg.pretrain.threshold = get_number(p, "threshold", cfg.pretrain.threshold);
    cfg.pretrain.max_steps =
        static_cast<std::uint32_t>(get_uint(p, "max_steps", cfg.pretrain.max_steps));
    cfg.pretrain.learning_rate = get_number(p, "learning_rate", cfg.pretrain.learning_rate);
  }

  if (root.contains("random_walk")) {
    const json& rw = root["random_walk"];
    check_keys(rw, "random_walk",
               {"dim", "iterations", "alpha", "populations", "repeats", "run_seed",
                "checkpoints"});
    cfg.random_walk.dim = get_uint(rw, "dim", cfg.random_walk.dim);
    cfg.random_walk.iterations =
        static_cast<std::uint32_t>(get_uint(rw, "iterations", cfg.random_walk.iterations));
    cfg.random_walk.alpha = get_number(rw, "alpha", cfg.random_walk.alpha);
    cfg.random_walk.repeats =
        static_cast<std::uint32_t>(get_uint(rw, "repeats", cfg.random_walk.repeats));
    cfg.random_walk.run_seed = get_uint(rw, "run_seed", cfg.random_walk.run_seed);
    if (rw.contains("populations")) {
      cfg.random_walk.populations.clear();
      for (const auto& v : rw["populations"]) {
        cfg.random_walk.populations.push_back(v.get<std::uint32_t>());
      }
    }
    if (rw.contains("checkpoints")) {
      for (const auto& v : rw["checkpoints"]) {
        cfg.random_walk.checkpoints.push_back(v.get<std::uint32_t>());
      }
    }
  }
  cfg.random_walk.penalty = cfg.penalty.spec;

  if (root.contains("eval")) {
    const json& ev = root["eval"];
    check_keys(ev, "eval", {"snapshot", "base_snapshot"});
    cfg.eval.snapshot = fs::path(get_string(ev, "snapshot", ""));
    if (ev.contains("base_snapshot")) {
      cfg.eval.base_snapshot = fs::path(ev["base_snapshot"].get<std::string>());
    }
  }

  if (root.contains("sweep")) {
    const json& sw = root["sweep"];
    check_keys(sw, "sweep", {"lambdas"});
    if (sw.contains("lambdas")) {
      for (const auto& v : sw["lambdas"]) {
        cfg.sweep_lambdas.push_back(v.get<double>());
      }
    }
  }

  if (root.contains("backend")) {
    const json& be = root["backend"];
    check_keys(be, "backend", {"kind", "threads", "listen", "expected_workers", "connect"});
    const std::string kind = get_string(be, "kind", "local");
    if (kind == "local") {
      cfg.backend.kind = BackendKind::Local;
      cfg.backend.threads = static_cast<unsigned>(get_uint(be, "threads", 1));
    } else if (kind == "master") {
      cfg.backend.kind = BackendKind::Master;
      cfg.backend.listen = get_string(be, "listen", cfg.backend.listen);
      cfg.backend.expected_workers =
          static_cast<unsigned>(get_uint(be, "expected_workers", 0));
      if (cfg.backend.expected_workers == 0) {
        throw ConfigError("config: backend.expected_workers must be >= 1 for a master");
      }
    } else if (kind == "worker") {
      cfg.backend.kind = BackendKind::Worker;
      cfg.backend.connect = get_string(be, "connect", "");
      if (cfg.backend.connect.empty()) {
        throw ConfigError("config: backend.connect required for a worker");
      }
    } else {
      throw ConfigError("config: backend.kind must be local|master|worker");
    }
  }

  // Environment overrides are limited to the output directory and log level.
  if (const char* env = std::getenv("ESAW_OUTPUT_DIR")) {
    cfg.output_dir = env;
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("config file not found: " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::uint64_t config_hash(const RunConfig& config, std::uint64_t suite_digest,
                          std::uint64_t theta0_digest) {
  std::string canon = "esaw-config-v1";
  canon += "|mode=" + std::string(run_mode_name(config.mode));
  const EsConfig& es = config.es;
  canon += "|alpha=" + fmt_double(es.alpha) + "|sigma=" + fmt_double(es.sigma) +
           "|population=" + std::to_string(es.population) +
           "|iterations=" + std::to_string(es.iterations) +
           "|run_seed=" + std::to_string(es.run_seed) +
           "|eps=" + fmt_double(es.normalization_epsilon);
  const PenaltyConfig& pen = config.penalty;
  canon += "|penalty=" + std::string(penalty_kind_name(pen.spec.kind)) +
           "|lambda=" + fmt_double(pen.spec.lambda) +
           "|delta=" + fmt_double(pen.spec.huber_delta) + "|weights=" + pen.weights_mode +
           "|fisher_samples=" + std::to_string(pen.fisher_samples) +
           "|damping=" + fmt_double(pen.damping);
  if (config.mode == RunMode::Grpo) {
    const GrpoConfig& g = config.grpo;
    canon += "|grpo_lr=" + fmt_double(g.learning_rate) + "|K=" + std::to_string(g.group_size) +
             "|clip=" + fmt_double(g.clip_epsilon) + "|beta=" + fmt_double(g.kl_coefficient) +
             "|batch=" + std::to_string(g.batch_size) + "|epochs=" + std::to_string(g.epochs) +
             "|grpo_seed=" + std::to_string(g.run_seed);
  }
  canon += "|suite=" + hex64(suite_digest) + "|theta0=" + hex64(theta0_digest) +
           "|generator=" + std::to_string(kGeneratorVersion);
  return fnv1a64(canon);
}

// ---------------------------------------------------------------------------
// Path accumulator file

namespace {

constexpr char kPathMagic[4] = {'E', 'S', 'P', 'I'};
constexpr std::uint16_t kPathVersion = 1;

}  // namespace

void path_accumulator_write(const PathAccumulator& acc, const fs::path& path) {
  require_same_size(acc.path_sum, acc.drift, "path_accumulator_write");
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kPathMagic, kPathMagic + 4);
  put_u16(out, kPathVersion);
  put_u16(out, 0);
  put_u64(out, acc.path_sum.size());
  put_u64(out, acc.steps);
  for (double v : acc.path_sum) put_f64(out, v);
  for (double v : acc.drift) put_f64(out, v);
  const std::uint64_t checksum =
      fnv1a64(std::span<const std::uint8_t>(out.data() + 4, out.size() - 4));
  put_u64(out, checksum);
  atomic_write_file(path, out);
}

PathAccumulator path_accumulator_read(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() < 32 || std::memcmp(bytes.data(), kPathMagic, 4) != 0) {
    throw FormatError("path accumulator: bad magic or truncated: " + path.string());
  }
  const std::uint64_t stored =
      fnv1a64(std::span<const std::uint8_t>(bytes.data() + 4, bytes.size() - 12));
  BinReader tail(std::span<const std::uint8_t>(bytes.data() + bytes.size() - 8, 8));
  if (tail.u64() != stored) {
    throw FormatError("path accumulator: checksum mismatch");
  }
  BinReader r(std::span<const std::uint8_t>(bytes.data() + 4, bytes.size() - 12));
  if (r.u16() != kPathVersion) {
    throw FormatError("path accumulator: unsupported version");
  }
  (void)r.u16();
  const std::uint64_t d = r.u64();
  PathAccumulator acc;
  acc.steps = r.u64();
  acc.path_sum = ParameterVector(d);
  acc.drift = ParameterVector(d);
  for (std::uint64_t i = 0; i < d; ++i) acc.path_sum[i] = r.f64();
  for (std::uint64_t i = 0; i < d; ++i) acc.drift[i] = r.f64();
  if (!r.done()) {
    throw FormatError("path accumulator: trailing bytes");
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Shared command plumbing

namespace {

struct RunContext {
  fs::path out;
  TaskSuite suite;
  std::uint64_t suite_digest = 0;
  ParameterVector theta0;
  std::uint64_t theta0_digest = 0;
  std::uint64_t hash = 0;
};

void emit_warnings(const RunConfig& config) {
  for (const std::string& w : config.warnings) {
    log_warn(w);
  }
}

fs::path require_output_dir(const RunConfig& config) {
  if (config.output_dir.empty()) {
    throw ConfigError("config: output_dir is required (or set ESAW_OUTPUT_DIR)");
  }
  fs::create_directories(config.output_dir);
  return config.output_dir;
}

// Loads or generates the suite and leaves a byte-identical copy in the run
// directory, so the run is reproducible from its artifacts alone.
void setup_suite(const RunConfig& config, RunContext& ctx) {
  const fs::path copy = ctx.out / "suite.ests";
  if (config.suite_path) {
    if (!fs::exists(*config.suite_path)) {
      throw ConfigError("suite not found: " + config.suite_path->string());
    }
    const std::vector<std::uint8_t> bytes = read_file_bytes(*config.suite_path);
    ctx.suite = suite_decode(bytes);
    if (!fs::exists(copy) || !fs::equivalent(copy, *config.suite_path)) {
      atomic_write_file(copy, bytes);
    }
    ctx.suite_digest = fnv1a64(bytes);
  } else if (config.suite_generate) {
    ctx.suite = generate_suite(*config.suite_generate);
    const std::vector<std::uint8_t> bytes = suite_encode(ctx.suite);
    atomic_write_file(copy, bytes);
    ctx.suite_digest = fnv1a64(bytes);
  } else {
    throw ConfigError("config: a 'suite' section is required for this mode");
  }
}

void setup_theta0(const RunConfig& config, RunContext& ctx) {
  if (!config.theta0_path) {
    throw ConfigError("config: 'theta0' snapshot path is required for this mode");
  }
  if (!fs::exists(*config.theta0_path)) {
    throw ConfigError("theta0 snapshot not found: " + config.theta0_path->string());
  }
  const std::vector<std::uint8_t> bytes = read_file_bytes(*config.theta0_path);
  ctx.theta0 = snapshot_decode(bytes);
  ctx.theta0_digest = fnv1a64(bytes);
  if (ctx.theta0.size() != ctx.suite.shape.param_count()) {
    throw DimensionError("theta0 snapshot has dimension " + std::to_string(ctx.theta0.size()) +
                         " but the suite's model needs " +
                         std::to_string(ctx.suite.shape.param_count()));
  }
}

void copy_config_into_run_dir(const RunConfig&, const fs::path& out, const std::string& raw) {
  atomic_write_file(out / "config.json", raw);
}

// Resolves the penalty's importance weights; must be byte-deterministic so
// master and workers arrive at identical weights independently.
PenaltySpec resolve_penalty(const RunConfig& config, const RunContext& ctx) {
  PenaltySpec spec = config.penalty.spec;
  if (spec.kind == PenaltyKind::None || config.penalty.weights_mode == "uniform") {
    return spec;
  }
  if (config.penalty.weights_mode == "fisher") {
    std::vector<LabeledExample> inputs;
    for (const TaskSpec& task : ctx.suite.priors) {
      inputs.insert(inputs.end(), task.train_set.begin(), task.train_set.end());
    }
    const ToyModel model{ctx.suite.shape, ctx.theta0};
    spec.weights = estimate_fisher_diag(model, inputs, config.penalty.fisher_samples,
                                        derive_seed(config.es.run_seed, 0xF15EULL));
    log_info("fisher importance weights estimated over " + std::to_string(inputs.size()) +
             " prior inputs");
  } else {  // path
    if (config.penalty.path_file.empty()) {
      throw ConfigError("config: penalty.weights=path requires penalty.path_file");
    }
    const PathAccumulator acc = path_accumulator_read(config.penalty.path_file);
    spec.weights = path_importance_from_sums(acc.path_sum, acc.drift, config.penalty.damping);
    log_info("path importance weights loaded from " + config.penalty.path_file);
  }
  return spec;
}

std::pair<std::string, std::uint16_t> split_host_port(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos) {
    throw ConfigError("address must be host:port, got '" + address + "'");
  }
  const std::string host = address.substr(0, colon);
  const int port = std::atoi(address.c_str() + colon + 1);
  if (port < 0 || port > 65535) {
    throw ConfigError("bad port in '" + address + "'");
  }
  return {host, static_cast<std::uint16_t>(port)};
}

json summary_to_json(const ForgettingSummary& summary, const DriftReport& report,
                     const RunConfig& config, const RunContext& ctx, double wall_seconds) {
  json j;
  j["schema_version"] = 1;
  j["mode"] = run_mode_name(config.mode);
  j["target_delta"] = summary.target_delta;
  j["prior_deltas"] = summary.prior_deltas;
  j["mean_prior_delta"] = summary.mean_prior_delta;
  const DriftRow& last = report.rows.back();
  j["final"] = {{"iteration", last.iteration},
                {"target_accuracy", last.target_accuracy},
                {"prior_accuracies", last.prior_accuracies},
                {"deviation_norm", last.deviation_norm},
                {"kl_target", last.kl_target},
                {"kl_priors", last.kl_priors}};
  j["config_hash"] = hex64(ctx.hash);
  j["generator_version"] = kGeneratorVersion;
  j["wall_time_seconds"] = wall_seconds;
  return j;
}

// Checkpoint directories: checkpoints/ckpt_<t> with theta.esaw, metrics.csv
// and state.json; state.json is written last, so a directory missing it is
// ignored as incomplete.
void write_checkpoint(const fs::path& out, std::uint32_t iteration, std::uint64_t hash,
                      const ParameterVector& theta, const DriftReport& report) {
  char name[32];
  std::snprintf(name, sizeof(name), "ckpt_%06u", iteration);
  const fs::path dir = out / "checkpoints" / name;
  fs::create_directories(dir);
  snapshot_write(theta, dir / "theta.esaw");
  write_metrics_csv(report, dir / "metrics.csv");
  json state;
  state["schema_version"] = 1;
  state["iteration"] = iteration;
  state["config_hash"] = hex64(hash);
  atomic_write_file(dir / "state.json", state.dump(2) + "\n");
  log_info("checkpoint written at iteration " + std::to_string(iteration));
}

struct ResumeState {
  std::uint32_t iteration = 0;
  ParameterVector theta;
  DriftReport report;
};

std::optional<ResumeState> find_latest_checkpoint(const fs::path& out, std::uint64_t hash,
                                                  std::uint32_t max_iteration) {
  const fs::path dir = out / "checkpoints";
  if (!fs::exists(dir)) {
    return std::nullopt;
  }
  std::optional<fs::path> best;
  std::uint32_t best_iteration = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "state.json")) {
      continue;
    }
    std::ifstream in(entry.path() / "state.json");
    json state = json::parse(in, nullptr, false);
    if (state.is_discarded()) {
      continue;
    }
    const std::uint32_t iteration = state["iteration"].get<std::uint32_t>();
    if (iteration > max_iteration || iteration <= best_iteration) {
      continue;
    }
    if (state["config_hash"].get<std::string>() != hex64(hash)) {
      throw ConfigError("checkpoint " + entry.path().string() +
                        " was produced under a different configuration (config hash " +
                        state["config_hash"].get<std::string>() + " != " + hex64(hash) +
                        "); refusing to resume");
    }
    best = entry.path();
    best_iteration = iteration;
  }
  if (!best) {
    return std::nullopt;
  }
  ResumeState state;
  state.iteration = best_iteration;
  state.theta = snapshot_read(*best / "theta.esaw");
  state.report = read_metrics_csv(*best / "metrics.csv");
  log_info("resuming from checkpoint at iteration " + std::to_string(best_iteration));
  return state;
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands

int cmd_pretrain(const RunConfig& config) {
  emit_warnings(config);
  RunContext ctx;
  ctx.out = require_output_dir(config);
  setup_suite(config, ctx);

  PretrainResult result;
  try {
    result = pretrain(ctx.suite, config.pretrain.seed, config.pretrain.threshold,
                      config.pretrain.max_steps, config.pretrain.learning_rate);
  } catch (const PretrainError& e) {
    json err;
    err["error"] = "pretraining-failed";
    err["mean_prior_eval_accuracy"] = e.mean_prior_accuracy;
    err["threshold"] = config.pretrain.threshold;
    std::fprintf(stderr, "%s\n", err.dump().c_str());
    return 3;
  }

  snapshot_write(result.theta0, ctx.out / "theta0.esaw");

  PathAccumulator acc;
  const std::size_t d = result.theta0.size();
  acc.path_sum = ParameterVector(d);
  acc.drift = ParameterVector(d);
  for (const GradientUpdate& step : result.trajectory) {
    for (std::size_t i = 0; i < d; ++i) {
      acc.path_sum[i] += -step.gradient[i] * step.update[i];
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    acc.drift[i] = result.theta0[i] - result.theta_init[i];
  }
  acc.steps = result.steps;
  path_accumulator_write(acc, ctx.out / "trajectory.bin");

  json j;
  j["schema_version"] = 1;
  j["mean_prior_eval_accuracy"] = result.mean_prior_eval_accuracy;
  j["threshold"] = config.pretrain.threshold;
  j["steps"] = result.steps;
  j["suite_digest"] = hex64(ctx.suite_digest);
  j["generator_version"] = kGeneratorVersion;
  j["target_eval_accuracy"] = accuracy(ctx.suite.shape, result.theta0, ctx.suite.target.eval_set);
  std::vector<double> prior_accs;
  for (const TaskSpec& task : ctx.suite.priors) {
    prior_accs.push_back(accuracy(ctx.suite.shape, result.theta0, task.eval_set));
  }
  j["prior_eval_accuracies"] = prior_accs;
  atomic_write_file(ctx.out / "base_accuracy.json", j.dump(2) + "\n");
  log_info("pretrain finished in " + std::to_string(result.steps) + " steps; artifacts in " +
           ctx.out.string());
  return 0;
}

namespace {

// Evaluation backend owning whatever the config asked for.
struct BackendHolder {
  std::unique_ptr<dist::LocalPoolEvaluator> local;
  std::unique_ptr<dist::TcpListener> listener;
  std::unique_ptr<dist::MasterSession> master;

  PopulationEvaluator& evaluator() {
    if (master) return *master;
    return *local;
  }
};

BackendHolder make_backend(const RunConfig& config, const RunContext& ctx) {
  BackendHolder holder;
  if (config.backend.kind == BackendKind::Local) {
    holder.local = std::make_unique<dist::LocalPoolEvaluator>(config.backend.threads);
    return holder;
  }
  if (config.backend.kind != BackendKind::Master) {
    throw ConfigError("train: backend must be local or master (run 'esaw worker' separately)");
  }
  const auto [host, port] = split_host_port(config.backend.listen);
  holder.listener = std::make_unique<dist::TcpListener>(port);
  holder.master =
      std::make_unique<dist::MasterSession>(ctx.hash, ctx.theta0.size());
  log_info("master listening on " + host + ":" + std::to_string(holder.listener->port()) +
           ", waiting for " + std::to_string(config.backend.expected_workers) + " workers");
  for (unsigned i = 0; i < config.backend.expected_workers; ++i) {
    holder.master->attach_worker(holder.listener->accept());
    log_info("worker " + std::to_string(i + 1) + "/" +
             std::to_string(config.backend.expected_workers) + " attached");
  }
  return holder;
}

}  // namespace

int cmd_train(const RunConfig& config, bool resume) {
  emit_warnings(config);
  if (config.mode != RunMode::Es && config.mode != RunMode::Grpo) {
    throw ConfigError("train: config mode must be 'es' or 'grpo'");
  }
  const auto wall_begin = std::chrono::steady_clock::now();
  RunContext ctx;
  ctx.out = require_output_dir(config);
  setup_suite(config, ctx);
  setup_theta0(config, ctx);
  ctx.hash = config_hash(config, ctx.suite_digest, ctx.theta0_digest);

  std::optional<ResumeState> resumed;
  if (resume) {
    const std::uint32_t limit =
        config.mode == RunMode::Es ? config.es.iterations : config.grpo.epochs;
    resumed = find_latest_checkpoint(ctx.out, ctx.hash, limit);
  }

  lab::TrainOutcome outcome;
  if (config.mode == RunMode::Es) {
    lab::EsRunSpec spec;
    spec.cfg = config.es;
    spec.cfg.penalty = resolve_penalty(config, ctx);
    spec.metrics_every = config.metrics_every;
    spec.checkpoint_every = config.checkpoint_every;
    spec.checkpoint_fn = [&](std::uint32_t t, const ParameterVector& theta,
                             const DriftReport& report) {
      write_checkpoint(ctx.out, t, ctx.hash, theta, report);
    };
    if (resumed) {
      spec.start_iteration = resumed->iteration;
      spec.theta_start = std::move(resumed->theta);
      spec.existing_report = std::move(resumed->report);
    }
    BackendHolder backend = make_backend(config, ctx);
    outcome = lab::run_es_training(ctx.suite, ctx.theta0, spec, backend.evaluator());
    if (backend.master) {
      backend.master->shutdown();
    }
  } else {
    lab::GrpoRunSpec spec;
    spec.cfg = config.grpo;
    spec.metrics_every = config.metrics_every;
    spec.checkpoint_every = config.checkpoint_every;
    spec.checkpoint_fn = [&](std::uint32_t t, const ParameterVector& theta,
                             const DriftReport& report) {
      write_checkpoint(ctx.out, t, ctx.hash, theta, report);
    };
    if (resumed) {
      spec.start_epoch = resumed->iteration;
      spec.theta_start = std::move(resumed->theta);
      spec.existing_report = std::move(resumed->report);
    }
    if (config.backend.kind != BackendKind::Local) {
      throw ConfigError("train: grpo mode supports only the local backend");
    }
    outcome = lab::run_grpo_training(ctx.suite, ctx.theta0, spec);
  }

  write_metrics_csv(outcome.report, ctx.out / "metrics.csv");
  snapshot_write(outcome.theta_final, ctx.out / "theta_final.esaw");
  const double wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_begin).count();
  const json summary = summary_to_json(outcome.summary, outcome.report, config, ctx, wall_seconds);
  atomic_write_file(ctx.out / "summary.json", summary.dump(2) + "\n");
  log_info("train finished; summary in " + (ctx.out / "summary.json").string());
  return 0;
}

int cmd_eval(const RunConfig& config) {
  emit_warnings(config);
  RunContext ctx;
  ctx.out = require_output_dir(config);
  setup_suite(config, ctx);
  if (config.eval.snapshot.empty()) {
    throw ConfigError("config: eval.snapshot is required");
  }
  const ParameterVector theta = snapshot_read(config.eval.snapshot);
  if (theta.size() != ctx.suite.shape.param_count()) {
    throw DimensionError("eval: snapshot dimension " + std::to_string(theta.size()) +
                         " does not match the suite's model (" +
                         std::to_string(ctx.suite.shape.param_count()) + ")");
  }
  json j;
  j["schema_version"] = 1;
  j["target_accuracy"] = accuracy(ctx.suite.shape, theta, ctx.suite.target.eval_set);
  std::vector<double> prior_accs;
  for (const TaskSpec& task : ctx.suite.priors) {
    prior_accs.push_back(accuracy(ctx.suite.shape, theta, task.eval_set));
  }
  j["prior_accuracies"] = prior_accs;
  if (config.eval.base_snapshot) {
    const ParameterVector base = snapshot_read(*config.eval.base_snapshot);
    if (base.size() != theta.size()) {
      throw DimensionError("eval: base snapshot dimension mismatch");
    }
    const ToyModel base_model{ctx.suite.shape, base};
    const ToyModel cur_model{ctx.suite.shape, theta};
    j["deviation_norm"] = l2_distance(theta, base);
    j["kl_target"] = mean_kl(base_model, cur_model, ctx.suite.target);
    std::vector<double> kls;
    for (const TaskSpec& task : ctx.suite.priors) {
      kls.push_back(mean_kl(base_model, cur_model, task));
    }
    j["kl_priors"] = kls;
  }
  const std::string text = j.dump(2) + "\n";
  atomic_write_file(ctx.out / "eval.json", text);
  std::fputs(text.c_str(), stdout);
  return 0;
}

int cmd_random_walk(const RunConfig& config) {
  emit_warnings(config);
  const fs::path out = require_output_dir(config);
  const auto wall_begin = std::chrono::steady_clock::now();
  const lab::RandomWalkResult result = lab::run_random_walk(config.random_walk);
  const double wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_begin).count();

  std::ostringstream csv;
  csv << "# schema=esaw.random_walk.v1\n";
  csv << "population,iteration,measured_dev_sq,predicted_dev_sq,decay_predicted_dev_sq,ratio\n";
  for (const lab::RandomWalkSeries& series : result.series) {
    for (std::size_t i = 0; i < series.checkpoints.size(); ++i) {
      csv << series.population << "," << series.checkpoints[i] << ","
          << fmt_double(series.measured_mean_dev_sq[i]) << ","
          << fmt_double(series.predicted_dev_sq[i]) << ",";
      if (!series.decay_predicted_dev_sq.empty()) {
        csv << fmt_double(series.decay_predicted_dev_sq[i]);
      }
      csv << "," << fmt_double(series.ratio[i]) << "\n";
    }
  }
  atomic_write_file(out / "random_walk.csv", csv.str());

  json j;
  j["schema_version"] = 1;
  j["alpha"] = config.random_walk.alpha;
  j["dim"] = config.random_walk.dim;
  j["iterations"] = config.random_walk.iterations;
  j["repeats"] = config.random_walk.repeats;
  j["penalty"] = penalty_kind_name(config.random_walk.penalty.kind);
  j["wall_time_seconds"] = wall_seconds;
  json series_json = json::array();
  for (const lab::RandomWalkSeries& series : result.series) {
    json s;
    s["population"] = series.population;
    s["checkpoints"] = series.checkpoints;
    s["measured_dev_sq"] = series.measured_mean_dev_sq;
    s["predicted_dev_sq"] = series.predicted_dev_sq;
    if (!series.decay_predicted_dev_sq.empty()) {
      s["decay_predicted_dev_sq"] = series.decay_predicted_dev_sq;
    }
    s["ratio"] = series.ratio;
    series_json.push_back(std::move(s));
  }
  j["series"] = std::move(series_json);
  // pairwise population ratios at the final checkpoint (the 1/N law)
  if (result.series.size() >= 2) {
    json pairs = json::array();
    for (std::size_t a = 0; a < result.series.size(); ++a) {
      for (std::size_t b = a + 1; b < result.series.size(); ++b) {
        json p;
        p["population_a"] = result.series[a].population;
        p["population_b"] = result.series[b].population;
        p["measured_ratio"] = result.series[a].measured_mean_dev_sq.back() /
                              result.series[b].measured_mean_dev_sq.back();
        p["predicted_ratio"] = static_cast<double>(result.series[b].population) /
                               result.series[a].population;
        pairs.push_back(std::move(p));
      }
    }
    j["population_ratios"] = std::move(pairs);
  }
  atomic_write_file(out / "random_walk.json", j.dump(2) + "\n");
  log_info("random-walk finished in " + std::to_string(wall_seconds) + "s");
  return 0;
}

int cmd_sweep(const RunConfig& config) {
  emit_warnings(config);
  if (config.mode != RunMode::Es) {
    throw ConfigError("sweep: config mode must be 'es'");
  }
  if (config.sweep_lambdas.empty()) {
    throw ConfigError("sweep: sweep.lambdas must list at least one value");
  }
  if (config.penalty.spec.kind == PenaltyKind::None) {
    throw ConfigError("sweep: penalty.kind must be l1, l2 or huber");
  }
  const fs::path out = require_output_dir(config);

  json merged;
  merged["schema_version"] = 1;
  merged["penalty"] = penalty_kind_name(config.penalty.spec.kind);
  json points = json::array();
  for (double lambda : config.sweep_lambdas) {
    RunConfig sub = config;
    sub.penalty.spec.lambda = lambda;
    sub.es.penalty.lambda = lambda;
    char name[48];
    std::snprintf(name, sizeof(name), "lambda_%g", lambda);
    sub.output_dir = out / name;
    log_info(std::string("sweep: running ") + name);
    const int rc = cmd_train(sub, /*resume=*/false);
    if (rc != 0) {
      return rc;
    }
    std::ifstream in(sub.output_dir / "summary.json");
    json summary = json::parse(in);
    json point;
    point["lambda"] = lambda;
    point["target_delta"] = summary["target_delta"];
    point["mean_prior_delta"] = summary["mean_prior_delta"];
    point["prior_deltas"] = summary["prior_deltas"];
    point["final"] = summary["final"];
    point["run_dir"] = std::string(name);
    points.push_back(std::move(point));
  }
  merged["points"] = std::move(points);
  atomic_write_file(out / "sweep.json", merged.dump(2) + "\n");
  log_info("sweep finished; merged summary in " + (out / "sweep.json").string());
  return 0;
}

int cmd_worker(const RunConfig& config) {
  emit_warnings(config);
  if (config.backend.kind != BackendKind::Worker) {
    throw ConfigError("worker: config backend.kind must be 'worker'");
  }
  RunContext ctx;
  ctx.out = require_output_dir(config);
  setup_suite(config, ctx);
  setup_theta0(config, ctx);
  ctx.hash = config_hash(config, ctx.suite_digest, ctx.theta0_digest);

  dist::WorkerContext worker;
  worker.cfg = config.es;
  worker.cfg.penalty = resolve_penalty(config, ctx);
  worker.theta = ctx.theta0;
  worker.anchor = ctx.theta0;
  const AccuracyReward reward(ctx.suite.shape, ctx.suite.target, Split::Train);
  worker.reward_fn = &reward;
  worker.config_hash = ctx.hash;

  const auto [host, port] = split_host_port(config.backend.connect);
  log_info("worker connecting to " + host + ":" + std::to_string(port));
  auto stream = dist::tcp_connect(host, port);
  const ParameterVector theta_final = dist::worker_loop(*stream, std::move(worker));
  snapshot_write(theta_final, ctx.out / "worker_final.esaw");
  log_info("worker finished cleanly");
  return 0;
}

int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ProtocolError& e) {
    std::fprintf(stderr, "protocol error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}

}  // namespace esaw::harness
