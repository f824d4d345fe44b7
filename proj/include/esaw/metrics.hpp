#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "esaw/param_vector.hpp"
#include "esaw/toy.hpp"

namespace esaw {

// One measured row of a run. Row 0 is the base model (t = 0, zero norms and
// divergences), later rows follow the metrics cadence.
struct DriftRow {
  std::uint32_t iteration = 0;
  double target_accuracy = 0.0;
  std::vector<double> prior_accuracies;
  double deviation_norm = 0.0;  // ||theta_t - theta_0||_2
  double update_norm = 0.0;     // ||theta_t - theta_{t-1}||_2
  double kl_target = 0.0;       // mean KL(p_base || p_current) on the target task
  std::vector<double> kl_priors;
};

struct DriftReport {
  std::uint32_t num_priors = 0;
  std::vector<DriftRow> rows;
};

// Expected cumulative squared weight deviation of the reward-independent
// random walk: alpha^2 * T * d / N. Exactly linear in T and d, exactly
// inverse in N.
double predicted_deviation_sq(double alpha, double iterations, double dim, double population);

// Fixed point of the deviation recurrence under an l2 decay with per-step
// rate alpha*lambda, iterated T times from zero:
//   E_t = (1 - alpha*lambda)^2 * (E_{t-1} + alpha^2 d / N)
double l2_recurrence_deviation_sq(double alpha, double lambda, std::uint32_t iterations,
                                  double dim, double population);

// Mean over the task's eval inputs of KL(p_base(.|x) || p_current(.|x)),
// probabilities floored at 1e-12 before the log. Nonnegative up to numerical
// noise; tiny negatives are clipped to zero.
double mean_kl(const ToyModel& base, const ToyModel& current, const TaskSpec& task);

// Assembles one report row: eval-split accuracies, deviation/update norms,
// per-task divergence against the base model.
DriftRow snapshot_metrics(const ParameterVector& theta_t, const ParameterVector& theta_prev,
                          const ParameterVector& theta0, const TaskSuite& suite,
                          std::uint32_t iteration);

// Accuracy changes between the first and last report rows. The mean covers
// prior tasks only.
struct ForgettingSummary {
  double target_delta = 0.0;
  std::vector<double> prior_deltas;
  double mean_prior_delta = 0.0;
};

ForgettingSummary summarize_forgetting(const DriftReport& report);

// CSV schema (see also the harness docs):
//   iteration,target_acc,prior_acc_1..K,deviation_norm,update_norm,
//   kl_target,kl_prior_1..K
// preceded by a "# schema=esaw.metrics.v1" comment line and the header row.
void write_metrics_csv(const DriftReport& report, std::ostream& out);
void write_metrics_csv(const DriftReport& report, const std::filesystem::path& path);
DriftReport read_metrics_csv(const std::filesystem::path& path);

}  // namespace esaw
