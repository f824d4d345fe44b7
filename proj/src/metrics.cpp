#include "esaw/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "esaw/snapshot.hpp"

namespace esaw {

double predicted_deviation_sq(double alpha, double iterations, double dim, double population) {
  return alpha * alpha * iterations * dim / population;
}

double l2_recurrence_deviation_sq(double alpha, double lambda, std::uint32_t iterations,
                                  double dim, double population) {
  const double per_step = alpha * alpha * dim / population;
  const double shrink = 1.0 - alpha * lambda;
  double e = 0.0;
  for (std::uint32_t t = 0; t < iterations; ++t) {
    e = shrink * shrink * (e + per_step);
  }
  return e;
}

double mean_kl(const ToyModel& base, const ToyModel& current, const TaskSpec& task) {
  if (!(base.shape == current.shape)) {
    throw DimensionError("mean_kl: model shapes differ");
  }
  if (base.params.size() != base.shape.param_count() ||
      current.params.size() != current.shape.param_count()) {
    throw DimensionError("mean_kl: parameter length does not match shape");
  }
  constexpr double kFloor = 1e-12;
  Scratch s_base, s_cur;
  double total = 0.0;
  for (const LabeledExample& ex : task.eval_set) {
    toy_forward(base.shape, base.params, ex.x, s_base);
    toy_forward(current.shape, current.params, ex.x, s_cur);
    double kl = 0.0;
    for (std::uint32_t k = 0; k < base.shape.num_classes; ++k) {
      const double p = std::max(s_base.probs[k], kFloor);
      const double q = std::max(s_cur.probs[k], kFloor);
      kl += p * std::log(p / q);
    }
    total += kl;
  }
  double mean = task.eval_set.empty() ? 0.0 : total / static_cast<double>(task.eval_set.size());
  if (mean < 0.0 && mean > -1e-9) {
    mean = 0.0;  // numerical noise around KL(p || p) = 0
  }
  return mean;
}

DriftRow snapshot_metrics(const ParameterVector& theta_t, const ParameterVector& theta_prev,
                          const ParameterVector& theta0, const TaskSuite& suite,
                          std::uint32_t iteration) {
  require_same_size(theta_t, theta_prev, "snapshot_metrics");
  require_same_size(theta_t, theta0, "snapshot_metrics");
  DriftRow row;
  row.iteration = iteration;
  row.deviation_norm = l2_distance(theta_t, theta0);
  row.update_norm = l2_distance(theta_t, theta_prev);
  row.target_accuracy = accuracy(suite.shape, theta_t, suite.target.eval_set);
  const ToyModel base{suite.shape, theta0};
  const ToyModel cur{suite.shape, theta_t};
  row.kl_target = mean_kl(base, cur, suite.target);
  row.prior_accuracies.reserve(suite.priors.size());
  row.kl_priors.reserve(suite.priors.size());
  for (const TaskSpec& task : suite.priors) {
    row.prior_accuracies.push_back(accuracy(suite.shape, theta_t, task.eval_set));
    row.kl_priors.push_back(mean_kl(base, cur, task));
  }
  return row;
}

ForgettingSummary summarize_forgetting(const DriftReport& report) {
  if (report.rows.empty()) {
    throw InvalidInputError("summarize_forgetting: empty report");
  }
  const DriftRow& first = report.rows.front();
  const DriftRow& last = report.rows.back();
  if (first.prior_accuracies.size() != last.prior_accuracies.size()) {
    throw InvalidInputError("summarize_forgetting: inconsistent rows");
  }
  ForgettingSummary summary;
  summary.target_delta = last.target_accuracy - first.target_accuracy;
  double sum = 0.0;
  for (std::size_t k = 0; k < first.prior_accuracies.size(); ++k) {
    const double delta = last.prior_accuracies[k] - first.prior_accuracies[k];
    summary.prior_deltas.push_back(delta);
    sum += delta;
  }
  summary.mean_prior_delta =
      summary.prior_deltas.empty() ? 0.0 : sum / static_cast<double>(summary.prior_deltas.size());
  return summary;
}

namespace {

// %.17g round-trips doubles exactly; keeps resumed CSVs bit-stable.
std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_metrics_csv(const DriftReport& report, std::ostream& out) {
  out << "# schema=esaw.metrics.v1\n";
  out << "iteration,target_acc";
  for (std::uint32_t k = 1; k <= report.num_priors; ++k) {
    out << ",prior_acc_" << k;
  }
  out << ",deviation_norm,update_norm,kl_target";
  for (std::uint32_t k = 1; k <= report.num_priors; ++k) {
    out << ",kl_prior_" << k;
  }
  out << "\n";
  for (const DriftRow& row : report.rows) {
    out << row.iteration << "," << fmt_double(row.target_accuracy);
    for (double a : row.prior_accuracies) {
      out << "," << fmt_double(a);
    }
    out << "," << fmt_double(row.deviation_norm) << "," << fmt_double(row.update_norm) << ","
        << fmt_double(row.kl_target);
    for (double kl : row.kl_priors) {
      out << "," << fmt_double(kl);
    }
    out << "\n";
  }
}

void write_metrics_csv(const DriftReport& report, const std::filesystem::path& path) {
  std::ostringstream ss;
  write_metrics_csv(report, ss);
  atomic_write_file(path, ss.str());
}

DriftReport read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open metrics csv: " + path.string());
  }
  std::string line;
  if (!std::getline(in, line) || line != "# schema=esaw.metrics.v1") {
    throw FormatError("metrics csv: missing schema line");
  }
  if (!std::getline(in, line)) {
    throw FormatError("metrics csv: missing header");
  }
  std::size_t columns = 1;
  for (char ch : line) {
    if (ch == ',') {
      ++columns;
    }
  }
  if (columns < 5 || (columns - 5) % 2 != 0) {
    throw FormatError("metrics csv: unexpected column count");
  }
  DriftReport report;
  report.num_priors = static_cast<std::uint32_t>((columns - 5) / 2);
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) {
      cells.push_back(cell);
    }
    if (cells.size() != columns) {
      throw FormatError("metrics csv: ragged row");
    }
    DriftRow row;
    std::size_t i = 0;
    row.iteration = static_cast<std::uint32_t>(std::stoul(cells[i++]));
    row.target_accuracy = std::stod(cells[i++]);
    for (std::uint32_t k = 0; k < report.num_priors; ++k) {
      row.prior_accuracies.push_back(std::stod(cells[i++]));
    }
    row.deviation_norm = std::stod(cells[i++]);
    row.update_norm = std::stod(cells[i++]);
    row.kl_target = std::stod(cells[i++]);
    for (std::uint32_t k = 0; k < report.num_priors; ++k) {
      row.kl_priors.push_back(std::stod(cells[i++]));
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace esaw
