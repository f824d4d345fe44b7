#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "esaw/param_vector.hpp"
#include "esaw/toy.hpp"

namespace esaw {

// Group-relative policy optimization at toy scale: one sampled class label is
// one episode, advantages are z-scored within the group, the update is a
// clipped surrogate with an exact categorical KL penalty against the base
// policy.
struct GrpoConfig {
  // The reference setting tunes the learning rate for billion-parameter
  // models; toy models need a much larger one.
  double learning_rate = 1e-2;
  std::uint32_t group_size = 30;
  double clip_epsilon = 0.2;
  double kl_coefficient = 0.001;  // applied to the loss, not the reward
  std::uint32_t batch_size = 32;
  std::uint32_t epochs = 500;
  std::uint64_t run_seed = 1;

  void validate() const;
};

struct GroupSample {
  std::uint32_t input_index = 0;
  std::vector<std::uint32_t> labels;
  std::vector<double> rewards;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
};

// z-scored rewards within one group (population std); all zero when the
// rewards are degenerate.
std::vector<double> group_advantages(std::span<const double> rewards, double guard_epsilon);

struct GrpoEval {
  double objective = 0.0;
  ParameterVector gradient;
};

// Clipped surrogate objective with KL penalty, plus its exact gradient via
// backpropagation through the toy model:
//   J = mean_x [ (1/K) sum_k min(rho_k A_k, clip(rho_k, 1-eps, 1+eps) A_k)
//                - beta * KL(p_theta(.|x) || p_anchor(.|x)) ]
// with rho_k = exp(log p_theta(y_k|x) - old_log_prob_k).
GrpoEval grpo_objective_and_grad(const ModelShape& shape, const ParameterVector& params,
                                 const ParameterVector& anchor_params,
                                 std::span<const GroupSample> samples,
                                 std::span<const LabeledExample> inputs, const GrpoConfig& cfg);

using GrpoObserver =
    std::function<void(std::uint32_t, const ParameterVector&, const ParameterVector&)>;

// Epochs [e_begin, e_end] against a fixed anchor; used when resuming from a
// checkpoint (epoch randomness is keyed, not sequential).
ParameterVector grpo_train_range(ParameterVector theta, const ParameterVector& anchor,
                                 std::uint32_t e_begin, std::uint32_t e_end,
                                 const GrpoConfig& cfg, const TaskSuite& suite,
                                 std::span<const GrpoObserver> observers = {});

// On-policy training on the suite's target task: each epoch samples a batch
// of inputs, rolls out group_size labels per input from the current policy,
// scores them against the gold labels, and takes one ascent step. One
// gradient step per rollout group, so rho starts at 1.
ParameterVector grpo_train(const ParameterVector& theta0, const GrpoConfig& cfg,
                           const TaskSuite& suite,
                           std::span<const GrpoObserver> observers = {});

}  // namespace esaw
