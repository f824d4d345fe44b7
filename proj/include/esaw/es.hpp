#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "esaw/awd.hpp"
#include "esaw/noise.hpp"
#include "esaw/param_vector.hpp"
#include "esaw/reward.hpp"

namespace esaw {

// All scalars of one ES run. Defaults: sigma = 0.001, alpha = sigma/2,
// population 30, 500 iterations.
struct EsConfig {
  double alpha = 0.0005;
  double sigma = 0.001;
  std::uint32_t population = 30;
  std::uint32_t iterations = 500;
  std::uint64_t run_seed = 1;
  PenaltySpec penalty;
  // Degenerate-population guard: if the reward std over a population is at
  // or below this, the whole update is zero.
  double normalization_epsilon = 1e-12;

  void validate() const;
};

// One perturbed evaluation: everything a node needs to reconstruct this
// member's contribution to the update.
struct PopulationRecord {
  std::uint32_t iteration = 0;
  std::uint32_t member_index = 0;  // 1-based, in [1, N]
  NoiseKey key;
  double raw_reward = 0.0;
  double normalized_reward = 0.0;
};

// z-scaling with the population standard deviation (divisor N). Outputs have
// mean 0 and population std 1; if std <= epsilon all outputs are exactly 0.
// Each score is evaluated as sign(u) * sqrt(u^2 / mean(u^2)), which makes the
// result invariant under reward maps r -> a*r + b whenever the mapped inputs
// and their moments stay exactly representable.
std::vector<double> z_normalize(std::span<const double> rewards, double epsilon);

// (1/N) sum_n rhat_n * eps_n, with every eps_n regenerated from its key.
ParameterVector es_update_direction(std::span<const PopulationRecord> records, std::size_t d);

// Evaluation backend: returns the N raw rewards of iteration t in member
// order. Implementations live in dist.hpp (in-process pool, seed-sync
// master).
class PopulationEvaluator {
 public:
  virtual ~PopulationEvaluator() = default;
  virtual std::vector<double> evaluate(const ParameterVector& theta, std::uint32_t iteration,
                                       const EsConfig& cfg, const RewardFn& reward_fn) = 0;
};

// The deterministic half of an iteration, shared verbatim by the local
// trainer, the master and every worker: z-normalize the raw rewards, apply
// the ES step theta += alpha * direction, then the anchored decay. Returns
// the population records. Bit-identical on every node given identical
// inputs.
std::vector<PopulationRecord> apply_population_update(ParameterVector& theta,
                                                      const ParameterVector& anchor,
                                                      std::uint32_t iteration,
                                                      const EsConfig& cfg,
                                                      std::span<const double> raw_rewards);

// One full iteration: evaluate R(theta + sigma*eps_n) for n = 1..N (theta
// itself is never mutated by evaluation), then apply_population_update.
std::vector<PopulationRecord> run_iteration(ParameterVector& theta,
                                            const ParameterVector& anchor,
                                            std::uint32_t iteration, const EsConfig& cfg,
                                            const RewardFn& reward_fn,
                                            PopulationEvaluator& evaluator);

// Called after each iteration with (t, theta before, theta after, records).
using IterationObserver =
    std::function<void(std::uint32_t, const ParameterVector&, const ParameterVector&,
                       std::span<const PopulationRecord>)>;

// Iterations [t_begin, t_end] of the ES loop against a fixed anchor;
// used directly when resuming from a checkpoint.
ParameterVector train_range(ParameterVector theta, const ParameterVector& anchor,
                            std::uint32_t t_begin, std::uint32_t t_end, const EsConfig& cfg,
                            const RewardFn& reward_fn, PopulationEvaluator& evaluator,
                            std::span<const IterationObserver> observers = {});

// Full run: the anchor is a frozen copy of theta0 captured before iteration
// 1; returns theta_T.
ParameterVector train(const ParameterVector& theta0, const EsConfig& cfg,
                      const RewardFn& reward_fn, PopulationEvaluator& evaluator,
                      std::span<const IterationObserver> observers = {});

}  // namespace esaw
