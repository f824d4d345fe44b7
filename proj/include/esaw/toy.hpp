#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "esaw/noise.hpp"
#include "esaw/param_vector.hpp"
#include "esaw/reward.hpp"

namespace esaw {

// Two-layer tanh MLP with softmax output. Parameters are stored flat as
// [W1 (h x m, row-major), b1 (h), W2 (c x h, row-major), b2 (c)].
struct ModelShape {
  std::uint32_t input_dim = 16;
  std::uint32_t hidden_dim = 32;
  std::uint32_t num_classes = 4;

  std::size_t param_count() const {
    return static_cast<std::size_t>(hidden_dim) * input_dim + hidden_dim +
           static_cast<std::size_t>(num_classes) * hidden_dim + num_classes;
  }

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

struct ToyModel {
  ModelShape shape;
  ParameterVector params;
};

// Reusable buffers for forward/backward passes.
struct Scratch {
  std::vector<double> hidden;
  std::vector<double> probs;
};

// probs = softmax(W2 tanh(W1 x + b1) + b2); valid distribution for all finite
// parameters.
void toy_forward(const ModelShape& shape, const ParameterVector& params,
                 std::span<const double> x, Scratch& scratch);

// argmax of the output distribution; ties broken toward the lowest class
// index (deterministic stand-in for greedy decoding).
std::uint32_t toy_predict(const ModelShape& shape, const ParameterVector& params,
                          std::span<const double> x, Scratch& scratch);

// grad += d(dot(dlogits, logits))/dtheta at input x; `scratch` must hold the
// forward pass for x. Shared backbone of the log-prob, cross-entropy, KL and
// surrogate gradients.
void toy_backprop_logits(const ModelShape& shape, const ParameterVector& params,
                         std::span<const double> x, std::span<const double> dlogits,
                         const Scratch& scratch, ParameterVector& grad);

// d log p(label | x) / dtheta via exact backpropagation.
ParameterVector log_prob_grad(const ModelShape& shape, const ParameterVector& params,
                              std::span<const double> x, std::uint32_t label);

struct LabeledExample {
  std::vector<double> x;
  std::uint32_t label = 0;
};

enum class Split { Train, Eval };

// One frozen synthetic classification problem: inputs clustered around an
// anchor point, labels from a frozen random teacher network.
struct TaskSpec {
  std::uint32_t task_id = 0;
  std::vector<double> anchor;
  double input_noise_scale = 1.0;
  std::uint64_t teacher_seed = 0;
  std::vector<LabeledExample> train_set;
  std::vector<LabeledExample> eval_set;

  std::span<const LabeledExample> split(Split s) const {
    return s == Split::Train ? std::span<const LabeledExample>(train_set)
                             : std::span<const LabeledExample>(eval_set);
  }
};

// Target task plus K prior tasks sharing one model shape. All tasks place
// their label structure along one shared signal coordinate (drawn from the
// suite seed), which is what lets a 32-unit student master several tasks
// from 200 examples each.
struct TaskSuite {
  ModelShape shape;
  std::uint32_t signal_dim = 0;
  TaskSpec target;
  std::vector<TaskSpec> priors;

  std::size_t num_tasks() const { return priors.size() + 1; }
  // Index 0 = target, 1..K = priors.
  const TaskSpec& task(std::size_t i) const { return i == 0 ? target : priors[i - 1]; }
};

struct SuiteParams {
  std::uint64_t seed = 1;
  std::uint32_t input_dim = 16;
  std::uint32_t hidden_dim = 32;
  std::uint32_t num_classes = 4;
  std::uint32_t num_priors = 4;
  double anchor_spread = 2.0;
  double input_noise_scale = 1.0;
  std::uint32_t train_size = 200;
  std::uint32_t eval_size = 500;
};

// Deterministic in `params.seed`. A task whose teacher labels the train set
// degenerately (a missing class, or a majority class above 0.6) is
// regenerated with an incremented sub-seed, up to 10 attempts.
TaskSuite generate_suite(const SuiteParams& params);

// Teacher network weights for a task, regenerable from (seed, anchor). The
// teacher's output biases are set so its class logits tie at the anchor
// point, which keeps the labeling balanced over the input cluster.
ParameterVector teacher_params(const ModelShape& shape, std::uint64_t teacher_seed,
                               std::span<const double> anchor, double cluster_scale,
                               std::uint32_t signal_dim);

// Fraction of examples classified correctly; in [0, 1].
double accuracy(const ModelShape& shape, const ParameterVector& params,
                std::span<const LabeledExample> examples);

// Reward = accuracy on the chosen split of one task (frozen batch, so the
// reward is pure in the parameters).
class AccuracyReward final : public RewardFn {
 public:
  AccuracyReward(const ModelShape& shape, const TaskSpec& task, Split split)
      : shape_(shape), task_(&task), split_(split) {}

  double evaluate(const ParameterVector& params) const override;

 private:
  ModelShape shape_;
  const TaskSpec* task_;
  Split split_;
};

// One recorded pretraining step, input to the path-integral importance
// estimate.
struct GradientUpdate {
  ParameterVector gradient;
  ParameterVector update;
};

struct PretrainResult {
  ParameterVector theta0;
  ParameterVector theta_init;
  std::vector<GradientUpdate> trajectory;
  std::uint32_t steps = 0;
  double mean_prior_eval_accuracy = 0.0;
};

inline constexpr double kDefaultPretrainThreshold = 0.85;
inline constexpr std::uint32_t kDefaultPretrainMaxSteps = 5000;
inline constexpr double kDefaultPretrainLearningRate = 1.0;

// Full-batch gradient descent on mean cross-entropy over the union of all
// prior-task train sets, until mean prior eval accuracy reaches the
// threshold. Throws PretrainError if max_steps is exhausted first.
PretrainResult pretrain(const TaskSuite& suite, std::uint64_t seed,
                        double target_mean_prior_accuracy = kDefaultPretrainThreshold,
                        std::uint32_t max_steps = kDefaultPretrainMaxSteps,
                        double learning_rate = kDefaultPretrainLearningRate);

// Suite file ("ESTS"): same framing conventions as snapshots — magic,
// u16 version, u16 flags, payload, trailing FNV-1a of the payload.
std::vector<std::uint8_t> suite_encode(const TaskSuite& suite);
TaskSuite suite_decode(std::span<const std::uint8_t> bytes);
void suite_write(const TaskSuite& suite, const std::filesystem::path& path);
TaskSuite suite_read(const std::filesystem::path& path);

}  // namespace esaw
