#include "esaw/grpo.hpp"

#include <cmath>

#include "esaw/es.hpp"

namespace esaw {

void GrpoConfig::validate() const {
  // learning_rate 0 is allowed (a no-op run); negative rates are not.
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("grpo: learning_rate must be >= 0");
  }
  if (group_size < 2) {
    throw ConfigError("grpo: group_size must be >= 2");
  }
  if (!(clip_epsilon > 0.0) || !(clip_epsilon < 1.0)) {
    throw ConfigError("grpo: clip_epsilon must lie in (0, 1)");
  }
  if (!(kl_coefficient >= 0.0)) {
    throw ConfigError("grpo: kl_coefficient must be >= 0");
  }
  if (batch_size < 1 || epochs < 1) {
    throw ConfigError("grpo: batch_size and epochs must be >= 1");
  }
}

std::vector<double> group_advantages(std::span<const double> rewards, double guard_epsilon) {
  if (rewards.size() < 2) {
    throw InvalidInputError("group_advantages: group must have >= 2 members");
  }
  return z_normalize(rewards, guard_epsilon);
}

GrpoEval grpo_objective_and_grad(const ModelShape& shape, const ParameterVector& params,
                                 const ParameterVector& anchor_params,
                                 std::span<const GroupSample> samples,
                                 std::span<const LabeledExample> inputs, const GrpoConfig& cfg) {
  require_same_size(params, anchor_params, "grpo_objective_and_grad");
  if (samples.empty()) {
    throw InvalidInputError("grpo_objective_and_grad: no samples");
  }
  const std::uint32_t c = shape.num_classes;
  GrpoEval result;
  result.gradient = ParameterVector(params.size());
  Scratch cur, base;
  std::vector<double> dlogits(c);
  const double inv_batch = 1.0 / static_cast<double>(samples.size());
  const bool with_kl = cfg.kl_coefficient != 0.0;

  for (const GroupSample& sample : samples) {
    if (sample.input_index >= inputs.size()) {
      throw InvalidInputError("grpo_objective_and_grad: input index out of range");
    }
    const std::size_t k_count = sample.labels.size();
    if (sample.old_log_probs.size() != k_count || sample.advantages.size() != k_count ||
        k_count == 0) {
      throw InvalidInputError("grpo_objective_and_grad: ragged group sample");
    }
    const std::span<const double> x = inputs[sample.input_index].x;
    toy_forward(shape, params, x, cur);
    std::fill(dlogits.begin(), dlogits.end(), 0.0);

    const double inv_k = 1.0 / static_cast<double>(k_count);
    double surrogate = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      const std::uint32_t y = sample.labels[k];
      if (y >= c) {
        throw InvalidInputError("grpo_objective_and_grad: label out of range");
      }
      const double logp = std::log(cur.probs[y]);
      if (!std::isfinite(logp)) {
        throw EvalError("grpo_objective_and_grad: non-finite log-prob for input " +
                        std::to_string(sample.input_index));
      }
      const double adv = sample.advantages[k];
      const double rho = std::exp(logp - sample.old_log_probs[k]);
      const double clipped =
          std::min(std::max(rho, 1.0 - cfg.clip_epsilon), 1.0 + cfg.clip_epsilon);
      surrogate += std::min(rho * adv, clipped * adv);
      // The min picks the clipped constant exactly when the ratio moved past
      // the trust region in the profitable direction; that term's gradient
      // is zero.
      const bool clipped_out = (adv > 0.0 && rho > 1.0 + cfg.clip_epsilon) ||
                               (adv < 0.0 && rho < 1.0 - cfg.clip_epsilon);
      if (!clipped_out && adv != 0.0) {
        const double w = adv * rho * inv_k;
        for (std::uint32_t j = 0; j < c; ++j) {
          dlogits[j] += w * ((j == y ? 1.0 : 0.0) - cur.probs[j]);
        }
      }
    }
    result.objective += surrogate * inv_k * inv_batch;

    if (with_kl) {
      toy_forward(shape, anchor_params, x, base);
      double kl = 0.0;
      std::vector<double> log_ratio(c);
      for (std::uint32_t j = 0; j < c; ++j) {
        log_ratio[j] = std::log(cur.probs[j] / base.probs[j]);
        kl += cur.probs[j] * log_ratio[j];
      }
      if (!std::isfinite(kl)) {
        throw EvalError("grpo_objective_and_grad: non-finite KL for input " +
                        std::to_string(sample.input_index));
      }
      result.objective -= cfg.kl_coefficient * kl * inv_batch;
      // dKL/dlogit_j = p_j (log_ratio_j - KL)
      for (std::uint32_t j = 0; j < c; ++j) {
        dlogits[j] -= cfg.kl_coefficient * cur.probs[j] * (log_ratio[j] - kl);
      }
    }

    for (double& v : dlogits) {
      v *= inv_batch;
    }
    toy_backprop_logits(shape, params, x, dlogits, cur, result.gradient);
  }
  return result;
}

ParameterVector grpo_train_range(ParameterVector theta, const ParameterVector& anchor,
                                 std::uint32_t e_begin, std::uint32_t e_end,
                                 const GrpoConfig& cfg, const TaskSuite& suite,
                                 std::span<const GrpoObserver> observers) {
  cfg.validate();
  const TaskSpec& task = suite.target;
  if (task.train_set.empty()) {
    throw InvalidInputError("grpo_train: target task has no training data");
  }
  Scratch scratch;
  const std::uint32_t c = suite.shape.num_classes;
  constexpr double kAdvantageGuard = 1e-12;

  for (std::uint32_t epoch = e_begin; epoch <= e_end; ++epoch) {
    const ParameterVector prev = theta;
    std::vector<GroupSample> samples;
    samples.reserve(cfg.batch_size);
    const std::uint64_t pick_base = derive_seed(cfg.run_seed, detail::kGrpoStream, epoch, 0);
    for (std::uint32_t b = 0; b < cfg.batch_size; ++b) {
      GroupSample sample;
      const double u = uniform_at(pick_base, b);
      sample.input_index = std::min(
          static_cast<std::uint32_t>(u * static_cast<double>(task.train_set.size())),
          static_cast<std::uint32_t>(task.train_set.size() - 1));
      const LabeledExample& ex = task.train_set[sample.input_index];
      toy_forward(suite.shape, theta, ex.x, scratch);
      const std::uint64_t roll_base =
          derive_seed(cfg.run_seed, detail::kGrpoStream, epoch, 1 + b);
      sample.labels.resize(cfg.group_size);
      sample.rewards.resize(cfg.group_size);
      sample.old_log_probs.resize(cfg.group_size);
      for (std::uint32_t k = 0; k < cfg.group_size; ++k) {
        const double r = uniform_at(roll_base, k);
        std::uint32_t y = c - 1;
        double cum = 0.0;
        for (std::uint32_t j = 0; j < c; ++j) {
          cum += scratch.probs[j];
          if (r <= cum) {
            y = j;
            break;
          }
        }
        sample.labels[k] = y;
        sample.rewards[k] = (y == ex.label) ? 1.0 : 0.0;
        sample.old_log_probs[k] = std::log(scratch.probs[y]);
      }
      sample.advantages = group_advantages(sample.rewards, kAdvantageGuard);
      samples.push_back(std::move(sample));
    }
    const GrpoEval eval =
        grpo_objective_and_grad(suite.shape, theta, anchor, samples, task.train_set, cfg);
    if (cfg.learning_rate != 0.0) {
      axpy(theta, cfg.learning_rate, eval.gradient);  // ascent
    }
    for (const GrpoObserver& obs : observers) {
      obs(epoch, prev, theta);
    }
  }
  return theta;
}

ParameterVector grpo_train(const ParameterVector& theta0, const GrpoConfig& cfg,
                           const TaskSuite& suite, std::span<const GrpoObserver> observers) {
  const ParameterVector anchor = theta0;  // frozen before epoch 1
  return grpo_train_range(theta0, anchor, 1, cfg.epochs, cfg, suite, observers);
}

}  // namespace esaw
