#include "esaw/awd.hpp"

#include <cmath>

namespace esaw {

const char* penalty_kind_name(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::None: return "none";
    case PenaltyKind::L1: return "l1";
    case PenaltyKind::L2: return "l2";
    case PenaltyKind::Huber: return "huber";
  }
  return "?";
}

PenaltyKind penalty_kind_from_name(const std::string& name) {
  if (name == "none") return PenaltyKind::None;
  if (name == "l1") return PenaltyKind::L1;
  if (name == "l2") return PenaltyKind::L2;
  if (name == "huber") return PenaltyKind::Huber;
  throw ConfigError("unknown penalty kind: '" + name + "'");
}

void ImportanceWeights::validate(std::size_t d) const {
  if (omega.empty()) {
    return;
  }
  if (omega.size() != d) {
    throw DimensionError("importance weights: length " + std::to_string(omega.size()) +
                         " != parameter count " + std::to_string(d));
  }
  for (double w : omega) {
    if (!(w >= 0.0)) {
      throw ConfigError("importance weights must be nonnegative and finite");
    }
  }
}

void PenaltySpec::validate(std::size_t d) const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("penalty lambda must be >= 0 and finite");
  }
  if (kind == PenaltyKind::Huber && !(huber_delta > 0.0)) {
    throw ConfigError("huber penalty requires delta > 0");
  }
  weights.validate(d);
}

double PenaltySpec::default_lambda(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::L1: return 0.01;
    case PenaltyKind::L2: return 10.0;
    default: return 0.0;
  }
}

void apply_awd(ParameterVector& theta, const ParameterVector& anchor, double alpha,
               const PenaltySpec& spec) {
  require_same_size(theta, anchor, "apply_awd");
  if (spec.kind == PenaltyKind::None || spec.lambda == 0.0) {
    return;  // identity, bit for bit
  }
  spec.validate(theta.size());
  if (!(alpha > 0.0)) {
    throw ConfigError("apply_awd: alpha must be > 0");
  }
  const std::size_t d = theta.size();
  const double base_step = alpha * spec.lambda;
  switch (spec.kind) {
    case PenaltyKind::L2:
      for (std::size_t i = 0; i < d; ++i) {
        const double rate = std::min(base_step * spec.weights.value(i), 1.0);
        theta[i] -= rate * (theta[i] - anchor[i]);
      }
      break;
    case PenaltyKind::L1:
      for (std::size_t i = 0; i < d; ++i) {
        const double step = base_step * spec.weights.value(i);
        const double x = theta[i] - anchor[i];
        if (std::fabs(x) <= step) {
          theta[i] = anchor[i];
        } else {
          theta[i] = anchor[i] + (x > 0.0 ? x - step : x + step);
        }
      }
      break;
    case PenaltyKind::Huber:
      for (std::size_t i = 0; i < d; ++i) {
        const double step = base_step * spec.weights.value(i);
        const double x = theta[i] - anchor[i];
        const double ax = std::fabs(x);
        if (ax > spec.huber_delta) {
          // l1-like proximal step of size `step`
          if (ax <= step) {
            theta[i] = anchor[i];
          } else {
            theta[i] = anchor[i] + (x > 0.0 ? x - step : x + step);
          }
        } else {
          // l2-like decay at rate step/delta; equals the l1 branch at
          // |x| = delta
          const double factor = 1.0 - step / spec.huber_delta;
          theta[i] = anchor[i] + (factor > 0.0 ? x * factor : 0.0);
        }
      }
      break;
    case PenaltyKind::None:
      break;
  }
}

ImportanceWeights estimate_fisher_diag(const ToyModel& model,
                                       std::span<const LabeledExample> inputs,
                                       std::uint32_t samples_per_input, std::uint64_t seed) {
  if (inputs.empty()) {
    throw InvalidInputError("estimate_fisher_diag: empty input batch");
  }
  if (samples_per_input == 0) {
    throw InvalidInputError("estimate_fisher_diag: samples_per_input must be >= 1");
  }
  const std::size_t d = model.shape.param_count();
  const std::uint32_t c = model.shape.num_classes;
  std::vector<double> acc(d, 0.0);
  Scratch scratch;
  std::vector<double> dlogits(c);
  ParameterVector grad(d);
  const std::uint64_t base = derive_seed(seed, detail::kFisherStream);
  std::uint64_t draw = 0;
  for (std::size_t e = 0; e < inputs.size(); ++e) {
    toy_forward(model.shape, model.params, inputs[e].x, scratch);
    for (std::uint32_t s = 0; s < samples_per_input; ++s, ++draw) {
      // Inverse-CDF sample of the categorical output.
      const double u = uniform_at(base, draw);
      std::uint32_t y = c - 1;
      double cum = 0.0;
      for (std::uint32_t k = 0; k < c; ++k) {
        cum += scratch.probs[k];
        if (u <= cum) {
          y = k;
          break;
        }
      }
      for (std::uint32_t k = 0; k < c; ++k) {
        dlogits[k] = (k == y ? 1.0 : 0.0) - scratch.probs[k];
      }
      std::fill(grad.begin(), grad.end(), 0.0);
      toy_backprop_logits(model.shape, model.params, inputs[e].x, dlogits, scratch, grad);
      for (std::size_t i = 0; i < d; ++i) {
        acc[i] += grad[i] * grad[i];
      }
    }
  }
  const double inv = 1.0 / (static_cast<double>(inputs.size()) * samples_per_input);
  for (double& w : acc) {
    w *= inv;
  }
  return ImportanceWeights{std::move(acc)};
}

ImportanceWeights estimate_path_importance(std::span<const GradientUpdate> trajectory,
                                           const ParameterVector& total_drift, double damping) {
  if (trajectory.empty()) {
    throw InvalidInputError("estimate_path_importance: empty trajectory");
  }
  if (!(damping > 0.0)) {
    throw InvalidInputError("estimate_path_importance: damping must be > 0");
  }
  const std::size_t d = total_drift.size();
  std::vector<double> omega(d, 0.0);
  for (const GradientUpdate& step : trajectory) {
    if (step.gradient.size() != d || step.update.size() != d) {
      throw DimensionError("estimate_path_importance: trajectory step length mismatch");
    }
    for (std::size_t i = 0; i < d; ++i) {
      omega[i] += -step.gradient[i] * step.update[i];
    }
  }
  return path_importance_from_sums(ParameterVector(std::move(omega)), total_drift, damping);
}

ImportanceWeights path_importance_from_sums(const ParameterVector& path_sum,
                                            const ParameterVector& total_drift, double damping) {
  require_same_size(path_sum, total_drift, "path_importance_from_sums");
  if (!(damping > 0.0)) {
    throw InvalidInputError("path importance: damping must be > 0");
  }
  std::vector<double> omega(path_sum.size());
  for (std::size_t i = 0; i < path_sum.size(); ++i) {
    omega[i] = std::max(path_sum[i], 0.0) / (total_drift[i] * total_drift[i] + damping);
  }
  return ImportanceWeights{std::move(omega)};
}

}  // namespace esaw
