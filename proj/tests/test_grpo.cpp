#include <doctest.h>

#include <cmath>

#include "esaw/grpo.hpp"
#include "esaw/noise.hpp"
#include "test_util.hpp"

using namespace esaw;

namespace {

std::vector<LabeledExample> random_inputs(const ModelShape& shape, int count,
                                          std::uint64_t seed) {
  std::vector<LabeledExample> inputs;
  for (int e = 0; e < count; ++e) {
    LabeledExample ex;
    for (std::size_t i = 0; i < shape.input_dim; ++i) {
      ex.x.push_back(standard_normal_at(derive_seed(seed, e), i));
    }
    ex.label = static_cast<std::uint32_t>(e) % shape.num_classes;
    inputs.push_back(ex);
  }
  return inputs;
}

}  // namespace

TEST_SUITE("grpo_lite") {

TEST_CASE("group advantages") {
  SUBCASE("binary rewards oracle: [0,1,1,0] -> [-1,+1,+1,-1]") {
    const auto adv = group_advantages(std::vector<double>{0.0, 1.0, 1.0, 0.0}, 1e-12);
    CHECK(adv[0] == -1.0);
    CHECK(adv[1] == +1.0);
    CHECK(adv[2] == +1.0);
    CHECK(adv[3] == -1.0);
  }
  SUBCASE("constant rewards collapse to zero") {
    const auto adv = group_advantages(std::vector<double>{1.0, 1.0, 1.0}, 1e-12);
    for (double a : adv) CHECK(a == 0.0);
  }
  SUBCASE("positive affine reward maps do not change advantages") {
    const auto a = group_advantages(std::vector<double>{0.0, 1.0, 1.0, 0.0}, 1e-12);
    const auto b = group_advantages(std::vector<double>{3.0, 5.0, 5.0, 3.0}, 1e-12);  // 2r+3
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
  SUBCASE("groups below two members are invalid") {
    CHECK_THROWS_AS(group_advantages(std::vector<double>{1.0}, 1e-12), InvalidInputError);
  }
  SUBCASE("mean 0 / std 1 property over random groups") {
    const std::uint64_t base = derive_seed(515, 0x9);
    for (int g = 0; g < 200; ++g) {
      std::vector<double> rewards(8);
      for (int k = 0; k < 8; ++k) {
        rewards[k] = standard_normal_at(base, g * 8 + k) > 0.3 ? 1.0 : 0.0;
      }
      const auto adv = group_advantages(rewards, 1e-12);
      const bool all_zero =
          std::all_of(adv.begin(), adv.end(), [](double a) { return a == 0.0; });
      if (!all_zero) {
        CHECK(std::fabs(testutil::mean(adv)) < 1e-9);
        CHECK(testutil::variance(adv) == doctest::Approx(1.0).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("objective value at the sampling policy") {
  const ModelShape shape{6, 8, 4};
  const ParameterVector params = sample_noise(NoiseKey{61, 1, 1}, shape.param_count());
  const auto inputs = random_inputs(shape, 8, 62);
  GrpoConfig cfg;
  cfg.kl_coefficient = 0.0;
  cfg.group_size = 4;

  // Samples drawn under the current parameters: rho = 1 everywhere, so the
  // objective is the mean advantage, which is zero by construction.
  std::vector<GroupSample> samples;
  Scratch scratch;
  for (std::uint32_t b = 0; b < inputs.size(); ++b) {
    GroupSample s;
    s.input_index = b;
    toy_forward(shape, params, inputs[b].x, scratch);
    for (std::uint32_t k = 0; k < 4; ++k) {
      const std::uint32_t y = k % shape.num_classes;
      s.labels.push_back(y);
      s.rewards.push_back(k < 2 ? 1.0 : 0.0);
      s.old_log_probs.push_back(std::log(scratch.probs[y]));
    }
    s.advantages = group_advantages(s.rewards, 1e-12);
    samples.push_back(std::move(s));
  }
  const GrpoEval eval = grpo_objective_and_grad(shape, params, params, samples, inputs, cfg);
  CHECK(std::fabs(eval.objective) < 1e-12);
}

TEST_CASE("zero advantages and zero beta give a zero gradient") {
  const ModelShape shape{5, 6, 3};
  const ParameterVector params = sample_noise(NoiseKey{63, 1, 1}, shape.param_count());
  const auto inputs = random_inputs(shape, 4, 64);
  GrpoConfig cfg;
  cfg.kl_coefficient = 0.0;
  std::vector<GroupSample> samples;
  for (std::uint32_t b = 0; b < inputs.size(); ++b) {
    GroupSample s;
    s.input_index = b;
    s.labels = {0, 1};
    s.rewards = {1.0, 1.0};
    s.old_log_probs = {-1.0, -1.0};
    s.advantages = group_advantages(s.rewards, 1e-12);  // all zero
    samples.push_back(std::move(s));
  }
  const GrpoEval eval = grpo_objective_and_grad(shape, params, params, samples, inputs, cfg);
  CHECK(eval.objective == 0.0);
  CHECK(l2_norm(eval.gradient) == 0.0);
}

TEST_CASE("clipping zeroes the gradient of runaway ratios") {
  const ModelShape shape{4, 5, 3};
  const ParameterVector params = sample_noise(NoiseKey{65, 1, 1}, shape.param_count());
  const auto inputs = random_inputs(shape, 1, 66);
  GrpoConfig cfg;
  cfg.kl_coefficient = 0.0;
  cfg.clip_epsilon = 0.2;

  Scratch scratch;
  toy_forward(shape, params, inputs[0].x, scratch);
  GroupSample s;
  s.input_index = 0;
  // Member 0: positive advantage with rho >> 1+eps (old log prob far below
  // the current one). Member 1: zero advantage. Every term's gradient is
  // exactly zero.
  s.labels = {0, 1};
  s.old_log_probs = {std::log(scratch.probs[0]) - 1.0, std::log(scratch.probs[1])};
  s.rewards = {1.0, 0.0};
  s.advantages = {1.0, 0.0};
  const GrpoEval eval =
      grpo_objective_and_grad(shape, params, params, {&s, 1}, inputs, cfg);
  CHECK(l2_norm(eval.gradient) == 0.0);
  // objective still reflects the clipped value: 1.2 * 1 / K
  CHECK(eval.objective == doctest::Approx(1.2 / 2.0).epsilon(1e-12));
}

TEST_CASE("KL penalty vanishes at theta = theta0") {
  const ModelShape shape{5, 6, 3};
  const ParameterVector params = sample_noise(NoiseKey{67, 1, 1}, shape.param_count());
  const auto inputs = random_inputs(shape, 4, 68);
  GrpoConfig cfg;
  cfg.kl_coefficient = 0.5;
  std::vector<GroupSample> samples;
  for (std::uint32_t b = 0; b < inputs.size(); ++b) {
    GroupSample s;
    s.input_index = b;
    s.labels = {0, 1};
    s.rewards = {1.0, 1.0};
    s.old_log_probs = {-1.0, -1.0};
    s.advantages = {0.0, 0.0};
    samples.push_back(std::move(s));
  }
  const GrpoEval eval = grpo_objective_and_grad(shape, params, params, samples, inputs, cfg);
  CHECK(eval.objective == 0.0);
  CHECK(l2_norm(eval.gradient) == 0.0);
}

TEST_CASE("analytic gradient matches central finite differences") {
  const ModelShape shape{10, 14, 4};  // d = 214
  REQUIRE(shape.param_count() == 214);
  const ParameterVector params = sample_noise(NoiseKey{69, 1, 1}, shape.param_count());
  const auto inputs = random_inputs(shape, 6, 70);
  GrpoConfig cfg;
  cfg.kl_coefficient = 0.001;
  cfg.clip_epsilon = 0.2;

  // Old log probs from a nearby parameter vector so the ratios are close to
  // but not exactly 1 (and safely away from the clip kinks).
  ParameterVector old_params = params;
  axpy(old_params, 0.02, sample_noise(NoiseKey{71, 1, 1}, shape.param_count()));
  std::vector<GroupSample> samples;
  Scratch scratch;
  const std::uint64_t base = derive_seed(72, 0x0);
  for (std::uint32_t b = 0; b < inputs.size(); ++b) {
    GroupSample s;
    s.input_index = b;
    toy_forward(shape, old_params, inputs[b].x, scratch);
    for (std::uint32_t k = 0; k < 6; ++k) {
      const double u = uniform_at(base, b * 16 + k);
      std::uint32_t y = shape.num_classes - 1;
      double cum = 0.0;
      for (std::uint32_t j = 0; j < shape.num_classes; ++j) {
        cum += scratch.probs[j];
        if (u <= cum) {
          y = j;
          break;
        }
      }
      s.labels.push_back(y);
      s.rewards.push_back(y == inputs[b].label ? 1.0 : 0.0);
      s.old_log_probs.push_back(std::log(scratch.probs[y]));
    }
    s.advantages = group_advantages(s.rewards, 1e-12);
    samples.push_back(std::move(s));
  }
  // Keep ratios away from the clip boundary so finite differences do not
  // straddle a kink.
  {
    Scratch check;
    for (const GroupSample& s : samples) {
      toy_forward(shape, params, inputs[s.input_index].x, check);
      for (std::size_t k = 0; k < s.labels.size(); ++k) {
        const double rho = std::exp(std::log(check.probs[s.labels[k]]) - s.old_log_probs[k]);
        REQUIRE(std::fabs(rho - (1.0 + cfg.clip_epsilon)) > 1e-3);
        REQUIRE(std::fabs(rho - (1.0 - cfg.clip_epsilon)) > 1e-3);
      }
    }
  }

  const GrpoEval eval =
      grpo_objective_and_grad(shape, params, old_params, samples, inputs, cfg);
  const std::vector<double> numeric = testutil::central_diff_gradient(
      [&](const ParameterVector& p) {
        return grpo_objective_and_grad(shape, p, old_params, samples, inputs, cfg).objective;
      },
      params, 1e-5);
  double max_rel = 0.0;
  double grad_scale = 0.0;
  for (double g : numeric) grad_scale = std::max(grad_scale, std::fabs(g));
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    max_rel = std::max(max_rel, std::fabs(numeric[i] - eval.gradient[i]) / grad_scale);
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("grpo_train basics") {
  SuiteParams sp;
  sp.seed = 21;
  sp.num_priors = 1;
  sp.train_size = 60;
  sp.eval_size = 80;
  const TaskSuite suite = generate_suite(sp);
  const ParameterVector theta0 =
      sample_noise(NoiseKey{73, 1, 1}, suite.shape.param_count());

  SUBCASE("learning rate zero leaves parameters untouched") {
    GrpoConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 5;
    cfg.group_size = 4;
    cfg.batch_size = 4;
    const ParameterVector theta = grpo_train(theta0, cfg, suite);
    CHECK(testutil::bit_equal(theta, theta0));
  }
  SUBCASE("fixed seed gives identical trajectories") {
    GrpoConfig cfg;
    cfg.epochs = 10;
    cfg.group_size = 6;
    cfg.batch_size = 8;
    cfg.run_seed = 99;
    const ParameterVector a = grpo_train(theta0, cfg, suite);
    const ParameterVector b = grpo_train(theta0, cfg, suite);
    CHECK(testutil::bit_equal(a, b));
  }
  SUBCASE("training does not hurt target accuracy") {
    GrpoConfig cfg;
    cfg.epochs = 120;
    cfg.group_size = 8;
    cfg.batch_size = 16;
    cfg.run_seed = 7;
    const double before = accuracy(suite.shape, theta0, suite.target.eval_set);
    const ParameterVector theta = grpo_train(theta0, cfg, suite);
    const double after = accuracy(suite.shape, theta, suite.target.eval_set);
    CHECK(after >= before);
  }
}

TEST_CASE("grpo config validation") {
  GrpoConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.group_size == 30);
  CHECK(cfg.kl_coefficient == 0.001);
  CHECK(cfg.epochs == 500);
  CHECK(cfg.batch_size == 32);
  cfg.clip_epsilon = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = GrpoConfig{};
  cfg.group_size = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = GrpoConfig{};
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

}  // TEST_SUITE
