#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "esaw/es.hpp"
#include "esaw/grpo.hpp"
#include "esaw/lab.hpp"
#include "esaw/toy.hpp"

namespace esaw::harness {

inline constexpr std::uint32_t kConfigSchemaVersion = 1;
inline constexpr std::uint32_t kDefaultCheckpointEvery = 50;

enum class RunMode { Pretrain, Es, Grpo, RandomWalk, Eval };

RunMode run_mode_from_name(const std::string& name);
const char* run_mode_name(RunMode mode);

enum class BackendKind { Local, Master, Worker };

struct BackendConfig {
  BackendKind kind = BackendKind::Local;
  unsigned threads = 1;                 // local
  std::string listen = "127.0.0.1:0";   // master
  unsigned expected_workers = 0;        // master
  std::string connect;                  // worker
};

struct PenaltyConfig {
  PenaltySpec spec;
  // "uniform" | "fisher" | "path"
  std::string weights_mode = "uniform";
  std::uint32_t fisher_samples = 8;
  std::string path_file;
  double damping = 1e-8;
};

// One fully parsed run configuration. The JSON schema is documented in the
// README; unknown keys anywhere are rejected.
struct RunConfig {
  RunMode mode = RunMode::Es;
  std::filesystem::path output_dir;
  std::uint32_t metrics_every = 1;
  std::uint32_t checkpoint_every = kDefaultCheckpointEvery;

  // suite: exactly one of path / generate
  std::optional<std::filesystem::path> suite_path;
  std::optional<SuiteParams> suite_generate;

  std::optional<std::filesystem::path> theta0_path;

  EsConfig es;
  PenaltyConfig penalty;
  GrpoConfig grpo;

  struct PretrainConfig {
    std::uint64_t seed = 1;
    double threshold = kDefaultPretrainThreshold;
    std::uint32_t max_steps = kDefaultPretrainMaxSteps;
    double learning_rate = kDefaultPretrainLearningRate;
  } pretrain;

  lab::RandomWalkSettings random_walk;

  struct EvalConfig {
    std::filesystem::path snapshot;
    std::optional<std::filesystem::path> base_snapshot;
  } eval;

  std::vector<double> sweep_lambdas;

  BackendConfig backend;

  // Keys that were accepted but ignored for this mode (reported as warnings).
  std::vector<std::string> warnings;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

// 64-bit digest binding a run to its exact inputs: optimizer scalars,
// penalty, suite file digest, theta0 digest and the noise generator version.
// Master and workers must agree on it before any member is assigned.
std::uint64_t config_hash(const RunConfig& config, std::uint64_t suite_digest,
                          std::uint64_t theta0_digest);

// Path-importance accumulator file ("ESPI"): per-parameter running sums of
// -gradient*update plus the total pretraining drift; the sufficient
// statistics for the path-integral weighting.
struct PathAccumulator {
  ParameterVector path_sum;
  ParameterVector drift;
  std::uint64_t steps = 0;
};

void path_accumulator_write(const PathAccumulator& acc, const std::filesystem::path& path);
PathAccumulator path_accumulator_read(const std::filesystem::path& path);

// Subcommands. Each returns the process exit code (0 success; 2 config
// error, 3 runtime error, 4 protocol error are produced by exceptions in
// main).
int cmd_pretrain(const RunConfig& config);
int cmd_train(const RunConfig& config, bool resume);
int cmd_eval(const RunConfig& config);
int cmd_random_walk(const RunConfig& config);
int cmd_sweep(const RunConfig& config);
int cmd_worker(const RunConfig& config);

int exit_code_for_current_exception();

}  // namespace esaw::harness
