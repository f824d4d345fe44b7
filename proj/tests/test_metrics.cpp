#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "esaw/metrics.hpp"
#include "esaw/noise.hpp"
#include "test_util.hpp"

using namespace esaw;
namespace fs = std::filesystem;

TEST_SUITE("metrics") {

TEST_CASE("predicted deviation calculator") {
  SUBCASE("reference value to 10 significant digits") {
    const double v = predicted_deviation_sq(0.0005, 500, 1e4, 30);
    CHECK(std::fabs(v / 0.04166666666666667 - 1.0) < 1e-10);
  }
  SUBCASE("doubling N halves the value exactly") {
    const double a = predicted_deviation_sq(0.0005, 500, 1e4, 30);
    const double b = predicted_deviation_sq(0.0005, 500, 1e4, 60);
    CHECK(a == 2.0 * b);
  }
  SUBCASE("exactly linear in T and d") {
    CHECK(predicted_deviation_sq(0.001, 400, 500, 8) ==
          2.0 * predicted_deviation_sq(0.001, 200, 500, 8));
    CHECK(predicted_deviation_sq(0.001, 200, 1000, 8) ==
          2.0 * predicted_deviation_sq(0.001, 200, 500, 8));
  }
  SUBCASE("T = 0 gives 0") { CHECK(predicted_deviation_sq(0.1, 0, 100, 8) == 0.0); }
}

TEST_CASE("mean KL divergence") {
  const ModelShape shape{4, 6, 2};

  SUBCASE("identical models have exactly zero divergence") {
    const ParameterVector params = sample_noise(NoiseKey{81, 1, 1}, shape.param_count());
    TaskSpec task;
    task.input_noise_scale = 1.0;
    for (int e = 0; e < 10; ++e) {
      LabeledExample ex;
      for (std::size_t i = 0; i < shape.input_dim; ++i) {
        ex.x.push_back(standard_normal_at(derive_seed(82, e), i));
      }
      task.eval_set.push_back(ex);
    }
    const ToyModel model{shape, params};
    CHECK(mean_kl(model, model, task) == 0.0);
  }

  SUBCASE("two-point analytic value") {
    // Zero weights except the output biases: probabilities are softmax(b2).
    ParameterVector base_params(shape.param_count());
    ParameterVector cur_params(shape.param_count());
    const std::size_t b2_begin = shape.param_count() - shape.num_classes;
    // base: [0.5, 0.5]; current: [0.9, 0.1]
    cur_params[b2_begin] = std::log(0.9);
    cur_params[b2_begin + 1] = std::log(0.1);
    TaskSpec task;
    LabeledExample ex;
    ex.x.assign(shape.input_dim, 0.0);
    task.eval_set.push_back(ex);

    const ToyModel base{shape, base_params};
    const ToyModel cur{shape, cur_params};
    const double kl = mean_kl(base, cur, task);
    // 0.5 ln(0.5/0.9) + 0.5 ln(0.5/0.1) = ln(5/3)
    CHECK(kl == doctest::Approx(0.5108256237659907).epsilon(1e-12));
  }

  SUBCASE("nonnegative for random parameter pairs") {
    TaskSpec task;
    for (int e = 0; e < 5; ++e) {
      LabeledExample ex;
      for (std::size_t i = 0; i < shape.input_dim; ++i) {
        ex.x.push_back(standard_normal_at(derive_seed(83, e), i));
      }
      task.eval_set.push_back(ex);
    }
    for (int trial = 0; trial < 1000; ++trial) {
      const ToyModel a{shape,
                       sample_noise(NoiseKey{90 + static_cast<std::uint64_t>(trial), 1, 1},
                                    shape.param_count())};
      const ToyModel b{shape,
                       sample_noise(NoiseKey{90 + static_cast<std::uint64_t>(trial), 1, 2},
                                    shape.param_count())};
      CHECK(mean_kl(a, b, task) >= 0.0);
    }
  }

  SUBCASE("shape mismatch is a dimension error") {
    const ToyModel a{shape, ParameterVector(shape.param_count())};
    const ModelShape other{4, 7, 2};
    const ToyModel b{other, ParameterVector(other.param_count())};
    TaskSpec task;
    CHECK_THROWS_AS(mean_kl(a, b, task), DimensionError);
  }
}

TEST_CASE("snapshot_metrics rows") {
  SuiteParams sp;
  sp.seed = 3;
  sp.num_priors = 2;
  sp.train_size = 80;
  sp.eval_size = 60;
  const TaskSuite suite = generate_suite(sp);
  const std::size_t d = suite.shape.param_count();
  const ParameterVector theta0 = sample_noise(NoiseKey{84, 1, 1}, d);

  SUBCASE("row 0 with theta = theta0 has zero norms and divergences") {
    const DriftRow row = snapshot_metrics(theta0, theta0, theta0, suite, 0);
    CHECK(row.deviation_norm == 0.0);
    CHECK(row.update_norm == 0.0);
    CHECK(row.kl_target == 0.0);
    for (double kl : row.kl_priors) CHECK(kl == 0.0);
    CHECK(row.prior_accuracies.size() == 2);
  }
  SUBCASE("triangle inequality between norms") {
    ParameterVector prev = theta0, cur = theta0;
    axpy(prev, 0.1, sample_noise(NoiseKey{85, 1, 1}, d));
    axpy(cur, 0.2, sample_noise(NoiseKey{85, 1, 2}, d));
    const DriftRow row = snapshot_metrics(cur, prev, theta0, suite, 3);
    const double prev_dev = l2_distance(prev, theta0);
    CHECK(row.update_norm <= row.deviation_norm + prev_dev + 1e-12);
  }
}

TEST_CASE("forgetting summary") {
  SUBCASE("single-row report has zero deltas") {
    DriftReport report;
    report.num_priors = 2;
    DriftRow row;
    row.target_accuracy = 0.5;
    row.prior_accuracies = {0.8, 0.9};
    report.rows.push_back(row);
    const ForgettingSummary s = summarize_forgetting(report);
    CHECK(s.target_delta == 0.0);
    CHECK(s.mean_prior_delta == 0.0);
  }
  SUBCASE("crafted deltas") {
    DriftReport report;
    report.num_priors = 2;
    DriftRow first, mid, last;
    first.target_accuracy = 0.25;
    first.prior_accuracies = {0.8, 0.9};
    mid.target_accuracy = 0.9;       // intermediate rows must not matter
    mid.prior_accuracies = {0.1, 0.1};
    last.target_accuracy = 0.75;
    last.prior_accuracies = {0.7, 0.9};
    report.rows = {first, mid, last};
    const ForgettingSummary s = summarize_forgetting(report);
    CHECK(s.target_delta == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.prior_deltas[0] == doctest::Approx(-0.1).epsilon(1e-12));
    CHECK(s.prior_deltas[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(s.mean_prior_delta == doctest::Approx(-0.05).epsilon(1e-12));
  }
  SUBCASE("deltas stay inside [-1, 1] for valid accuracies") {
    DriftReport report;
    report.num_priors = 1;
    DriftRow first, last;
    first.target_accuracy = 0.0;
    first.prior_accuracies = {1.0};
    last.target_accuracy = 1.0;
    last.prior_accuracies = {0.0};
    report.rows = {first, last};
    const ForgettingSummary s = summarize_forgetting(report);
    CHECK(s.target_delta <= 1.0);
    CHECK(s.prior_deltas[0] >= -1.0);
  }
  SUBCASE("empty report is invalid") {
    CHECK_THROWS_AS(summarize_forgetting(DriftReport{}), InvalidInputError);
  }
}

TEST_CASE("metrics CSV round trip") {
  DriftReport report;
  report.num_priors = 2;
  for (std::uint32_t t = 0; t <= 3; ++t) {
    DriftRow row;
    row.iteration = t;
    row.target_accuracy = 0.25 + 0.1 * t;
    row.prior_accuracies = {0.9 - 0.01 * t, 0.8};
    row.deviation_norm = 0.001 * t * std::sqrt(2.0);
    row.update_norm = t == 0 ? 0.0 : 1e-3;
    row.kl_target = 1e-6 * t;
    row.kl_priors = {2e-6 * t, 0.0};
    report.rows.push_back(row);
  }
  const fs::path path = fs::temp_directory_path() / "esaw_test_metrics.csv";
  write_metrics_csv(report, path);
  const DriftReport back = read_metrics_csv(path);
  REQUIRE(back.rows.size() == report.rows.size());
  CHECK(back.num_priors == report.num_priors);
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    CHECK(back.rows[i].iteration == report.rows[i].iteration);
    CHECK(back.rows[i].target_accuracy == report.rows[i].target_accuracy);
    CHECK(back.rows[i].deviation_norm == report.rows[i].deviation_norm);
    CHECK(back.rows[i].update_norm == report.rows[i].update_norm);
    CHECK(back.rows[i].kl_target == report.rows[i].kl_target);
    CHECK(back.rows[i].prior_accuracies == report.rows[i].prior_accuracies);
    CHECK(back.rows[i].kl_priors == report.rows[i].kl_priors);
  }
  fs::remove(path);
}

TEST_CASE("l2 recurrence approaches its closed-form fixed point") {
  const double alpha = 0.0005, lambda = 20.0, d = 1000, n = 8;
  const double c = alpha * alpha * d / n;
  const double q = (1.0 - alpha * lambda) * (1.0 - alpha * lambda);
  const double fixed_point = c * q / (1.0 - q);
  const double iterated = l2_recurrence_deviation_sq(alpha, lambda, 2000, d, n);
  CHECK(iterated == doctest::Approx(fixed_point).epsilon(1e-6));
}

}  // TEST_SUITE
