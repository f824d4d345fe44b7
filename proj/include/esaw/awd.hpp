#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "esaw/param_vector.hpp"
#include "esaw/toy.hpp"

namespace esaw {

enum class PenaltyKind { None, L1, L2, Huber };

const char* penalty_kind_name(PenaltyKind kind);
PenaltyKind penalty_kind_from_name(const std::string& name);

// Per-parameter nonnegative weights Omega. An empty vector is the uniform
// sentinel and behaves exactly (bit for bit) like all-ones.
struct ImportanceWeights {
  std::vector<double> omega;

  bool is_uniform() const { return omega.empty(); }
  double value(std::size_t i) const { return omega.empty() ? 1.0 : omega[i]; }
  void validate(std::size_t d) const;
};

// Anchored decay configuration. lambda couples with the step size alpha
// exactly as the update rule is written: the per-iteration decay step is
// alpha * lambda (no decoupled mode).
struct PenaltySpec {
  PenaltyKind kind = PenaltyKind::None;
  double lambda = 0.0;
  // Only used by the Huber penalty; the crossover point between the
  // l2-like inner branch and the l1-like outer branch. Experimental: no
  // empirically validated default exists, 1e-3 mirrors the default noise
  // scale sigma.
  double huber_delta = 1e-3;
  ImportanceWeights weights;

  void validate(std::size_t d) const;
  // Conventional lambda for a kind when the config leaves it unset
  // (0.01 for l1, 10.0 for l2).
  static double default_lambda(PenaltyKind kind);
};

// One decay step toward the anchor, applied in place after the ES update:
//   l2:    theta_i -= min(alpha*lambda*w_i, 1) * (theta_i - anchor_i)
//   l1:    proximal shrink of the drift by alpha*lambda*w_i, clamping to
//          exactly 0 (theta_i = anchor_i) when |drift| <= step
//   huber: l2-like decay at rate step/delta inside |drift| <= delta,
//          l1-like proximal step outside; branches meet at |drift| = delta
//   none / lambda = 0: identity, bit for bit
// The multiplier clamp keeps the step a contraction for any lambda; a huge
// lambda pins theta to the anchor instead of overshooting.
void apply_awd(ParameterVector& theta, const ParameterVector& anchor, double alpha,
               const PenaltySpec& spec);

// Diagonal Fisher estimate: mean over inputs and labels y ~ p(.|x) of the
// squared score d log p(y|x)/dtheta_i. Entries are >= 0 by construction.
ImportanceWeights estimate_fisher_diag(const ToyModel& model,
                                       std::span<const LabeledExample> inputs,
                                       std::uint32_t samples_per_input, std::uint64_t seed);

// Path-integral importance from a recorded training trajectory:
//   omega_i = sum over steps of (-gradient_i * update_i)   (clipped at 0)
//   Omega_i = max(omega_i, 0) / (drift_i^2 + damping)
// The damping term keeps parameters that never moved from blowing up the
// denominator.
ImportanceWeights estimate_path_importance(std::span<const GradientUpdate> trajectory,
                                           const ParameterVector& total_drift, double damping);

// Same weighting computed from the running sums directly (what checkpointed
// trajectory files store).
ImportanceWeights path_importance_from_sums(const ParameterVector& path_sum,
                                            const ParameterVector& total_drift, double damping);

}  // namespace esaw
