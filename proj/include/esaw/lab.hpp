#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "esaw/dist.hpp"
#include "esaw/es.hpp"
#include "esaw/grpo.hpp"
#include "esaw/metrics.hpp"
#include "esaw/toy.hpp"

namespace esaw::lab {

// Reward drawn i.i.d. per (run_seed, iteration, member), statistically
// independent of the perturbations. Isolates the random-walk component of
// the ES update (no task needed).
class SyntheticNoiseReward final : public RewardFn {
 public:
  double evaluate(const ParameterVector&) const override { return 0.0; }
  double evaluate_member(const ParameterVector&, const NoiseKey& key) const override {
    return standard_normal_at(derive_seed(key.run_seed, detail::kRewardStream, key.iteration),
                              key.member_index);
  }
  bool needs_params() const override { return false; }
};

// ---------------------------------------------------------------------------
// Random-walk experiment: measures E||theta_T - theta_0||^2 under pure-noise
// rewards against the alpha^2 T d / N prediction, optionally with an
// anchored decay.

struct RandomWalkSettings {
  std::size_t dim = 1000;
  std::uint32_t iterations = 200;
  double alpha = 0.0005;
  std::vector<std::uint32_t> populations{8, 32};
  std::uint32_t repeats = 20;
  std::uint64_t run_seed = 1;
  PenaltySpec penalty;
  // Iterations at which deviation^2 is recorded; empty means {iterations}.
  std::vector<std::uint32_t> checkpoints;
};

struct RandomWalkSeries {
  std::uint32_t population = 0;
  std::vector<std::uint32_t> checkpoints;
  std::vector<double> measured_mean_dev_sq;
  std::vector<double> predicted_dev_sq;  // random-walk law, no decay
  std::vector<double> decay_predicted_dev_sq;  // l2 recurrence; only if l2 penalty
  std::vector<double> ratio;  // measured / (decay_)predicted
};

struct RandomWalkResult {
  RandomWalkSettings settings;
  std::vector<RandomWalkSeries> series;
};

RandomWalkResult run_random_walk(const RandomWalkSettings& settings);

// ---------------------------------------------------------------------------
// Forgetting-lab drivers: suite + pretrain + optimizer run + drift report.

struct LabSetup {
  TaskSuite suite;
  PretrainResult pretrained;
};

// Deterministic in `seed`; throws PretrainError for seeds whose pretraining
// misses the accuracy threshold (callers reject those seeds).
LabSetup prepare_setup(std::uint64_t seed, const SuiteParams& suite_params = {},
                       double pretrain_threshold = kDefaultPretrainThreshold,
                       std::uint32_t pretrain_max_steps = kDefaultPretrainMaxSteps,
                       double pretrain_learning_rate = kDefaultPretrainLearningRate);

struct TrainOutcome {
  DriftReport report;
  ForgettingSummary summary;
  ParameterVector theta_final;
};

// Invoked at the checkpoint cadence with the current parameters and every
// report row recorded so far.
using CheckpointFn =
    std::function<void(std::uint32_t, const ParameterVector&, const DriftReport&)>;

struct EsRunSpec {
  EsConfig cfg;
  std::uint32_t metrics_every = 1;
  // Resume: continue from start_iteration with theta_start and the report
  // rows recorded so far. start_iteration 0 means a fresh run.
  std::uint32_t start_iteration = 0;
  ParameterVector theta_start;
  DriftReport existing_report;
  std::vector<IterationObserver> observers;
  std::uint32_t checkpoint_every = 0;  // 0 = no checkpoints
  CheckpointFn checkpoint_fn;
};

// Runs ES against the suite's target-task training split; theta0 is the
// anchor and metrics baseline.
TrainOutcome run_es_training(const TaskSuite& suite, const ParameterVector& theta0,
                             const EsRunSpec& spec, PopulationEvaluator& evaluator);

struct GrpoRunSpec {
  GrpoConfig cfg;
  std::uint32_t metrics_every = 1;
  std::uint32_t start_epoch = 0;
  ParameterVector theta_start;
  DriftReport existing_report;
  std::vector<GrpoObserver> observers;
  std::uint32_t checkpoint_every = 0;
  CheckpointFn checkpoint_fn;
};

TrainOutcome run_grpo_training(const TaskSuite& suite, const ParameterVector& theta0,
                               const GrpoRunSpec& spec);

}  // namespace esaw::lab
