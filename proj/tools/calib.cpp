// Scratch calibration harness: sweeps toy-suite teacher scales, pretrain
// learning rates and ES sigma / AWD lambda grids to pick project constants.
// Not part of the deliverable build.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "esaw/awd.hpp"
#include "esaw/dist.hpp"
#include "esaw/es.hpp"
#include "esaw/grpo.hpp"
#include "esaw/metrics.hpp"
#include "esaw/noise.hpp"
#include "esaw/toy.hpp"

using namespace esaw;

struct Scales {
  double w1, b1, w2, b2;
};

static ParameterVector scaled_params(const ModelShape& s, std::uint64_t seed, Scales sc) {
  const std::size_t m = s.input_dim, h = s.hidden_dim, c = s.num_classes;
  ParameterVector p(s.param_count());
  std::size_t idx = 0;
  for (std::size_t i = 0; i < h * m; ++i, ++idx)
    p[idx] = sc.w1 / std::sqrt((double)m) * standard_normal_at(seed, idx);
  for (std::size_t i = 0; i < h; ++i, ++idx) p[idx] = sc.b1 * standard_normal_at(seed, idx);
  for (std::size_t i = 0; i < c * h; ++i, ++idx)
    p[idx] = sc.w2 / std::sqrt((double)h) * standard_normal_at(seed, idx);
  for (std::size_t i = 0; i < c; ++i, ++idx) p[idx] = sc.b2 * standard_normal_at(seed, idx);
  return p;
}

struct RawTask {
  std::vector<double> anchor;
  std::vector<LabeledExample> train_set, eval_set;
};

// Local re-implementation of task sampling with tunable teacher scales and no
// regeneration, to measure the raw balance rate.
static RawTask raw_task(std::uint64_t seed, std::uint32_t task_id, const ModelShape& shape,
                        double spread, double s_noise, Scales sc, std::uint32_t train_n,
                        std::uint32_t eval_n, bool center) {
  RawTask task;
  const std::uint64_t abase = derive_seed(seed, detail::kAnchorStream, task_id);
  task.anchor.resize(shape.input_dim);
  for (std::uint32_t i = 0; i < shape.input_dim; ++i)
    task.anchor[i] = spread * standard_normal_at(abase, i);
  const std::uint64_t tseed =
      derive_seed(derive_seed(seed, detail::kTeacherStream, task_id, 0), detail::kTeacherStream);
  ParameterVector teacher(shape.param_count());
  {
    // skewed staircase on a per-suite shared signal dim; sc.w1 = gain base,
    // sc.b1 = jitter, sc.b2 = texture
    const std::size_t m = shape.input_dim, h = shape.hidden_dim, c = shape.num_classes;
    const std::uint64_t base = derive_seed(tseed, 0x7e);
    const std::uint64_t pool_base = derive_seed(seed, 0x9001);
    std::size_t perm[16];
    for (std::size_t i = 0; i < m; ++i) perm[i] = i;
    for (std::size_t i = m - 1; i > 0; --i) {
      const std::size_t j = (std::size_t)(uniform_at(pool_base, i) * (i + 1));
      std::swap(perm[i], perm[std::min(j, i)]);
    }
    const std::size_t active = perm[0];  // one shared signal dim per suite
    const double gain = (sc.w1 + 0.5 * sc.w1 * uniform_at(base, 1)) / s_noise;
    double* w1 = teacher.data();
    double* b1 = w1 + h * m;
    double* w2 = b1 + h;
    double* b2 = w2 + c * h;
    const double offsets[3] = {0.0, 1.8, 2.2};
    const double flip = uniform_at(base, 90) < 0.5 ? -1.0 : 1.0;
    for (std::size_t t = 0; t + 1 < c; ++t) {
      const double threshold =
          task.anchor[active] +
          s_noise * flip * (offsets[t % 3] + sc.b1 * standard_normal_at(base, 2 + t));
      w1[t * m + active] = gain * flip;
      b1[t] = -gain * flip * threshold;
    }
    std::vector<std::size_t> cls(c);
    for (std::size_t k = 0; k < c; ++k) cls[k] = k;
    for (std::size_t k = c - 1; k > 0; --k) {
      const std::size_t j = (std::size_t)(uniform_at(base, 95 + k) * (k + 1));
      std::swap(cls[k], cls[std::min(j, k)]);
    }
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t t = 0; t + 1 < c; ++t) w2[cls[k] * h + t] = (double)k;
      b2[cls[k]] = (double)((c - 1) * k) - (double)k * k;
    }
    std::size_t draw = 100;
    for (std::size_t j = c - 1; j < h; ++j) {
      w1[j * m + active] = 0.5 * gain * standard_normal_at(base, draw++);
      b1[j] = -w1[j * m + active] * (task.anchor[active] + s_noise * standard_normal_at(base, draw++));
      for (std::size_t k = 0; k < c; ++k)
        w2[k * h + j] = sc.b2 * standard_normal_at(base, draw++);
    }
  }
  (void)center;
  const std::uint64_t dbase = derive_seed(seed, detail::kDataStream, task_id, 0);
  Scratch scratch;
  for (std::uint32_t e = 0; e < train_n + eval_n; ++e) {
    LabeledExample ex;
    ex.x.resize(shape.input_dim);
    for (std::uint32_t i = 0; i < shape.input_dim; ++i)
      ex.x[i] = task.anchor[i] +
                s_noise * standard_normal_at(dbase, (std::uint64_t)e * shape.input_dim + i);
    ex.label = toy_predict(shape, teacher, ex.x, scratch);
    (e < train_n ? task.train_set : task.eval_set).push_back(std::move(ex));
  }
  return task;
}

static void sweep_scales(bool center) {
  const ModelShape shape{16, 32, 4};
  // w1 = gain base, b1 = threshold jitter, b2 = texture scale
  std::vector<Scales> grid = {
      {1.0, 0.10, 1.0, 0.05}, {0.6, 0.10, 1.0, 0.05}, {1.5, 0.10, 1.0, 0.05},
      {1.0, 0.05, 1.0, 0.02}, {0.6, 0.15, 1.0, 0.02},
  };
  for (const Scales& sc : grid) {
    int balanced = 0, total = 0;
    double mean_major = 0.0;
    for (std::uint64_t seed = 1; seed <= 24; ++seed) {
      for (std::uint32_t task_id = 0; task_id < 5; ++task_id) {
        const RawTask t = raw_task(seed, task_id, shape, 2.0, 1.0, sc, 200, 0, center);
        std::vector<int> counts(4, 0);
        for (const auto& ex : t.train_set) counts[ex.label]++;
        const int maxc = *std::max_element(counts.begin(), counts.end());
        const int minc = *std::min_element(counts.begin(), counts.end());
        mean_major += maxc / 200.0;
        ++total;
        if (minc > 0 && maxc <= 120) ++balanced;
      }
    }
    std::printf("scales w1=%.2f b1=%.2f w2=%.2f b2=%.2f : balanced %3d/%3d mean_major %.3f\n",
                sc.w1, sc.b1, sc.w2, sc.b2, balanced, total, mean_major / total);
  }
}

static void sweep_pretrain(Scales sc, double spread, double s_noise) {
  const ModelShape shape{16, 32, 4};
  for (double lr : {1.0}) {
    std::printf("pretrain lr=%.2f spread=%.1f s=%.1f:", lr, spread, s_noise);
    for (std::uint64_t seed : {101ULL, 102ULL, 103ULL, 104ULL, 105ULL}) {
      // build 4 prior tasks + target via raw_task (balanced not enforced)
      std::vector<RawTask> tasks;
      for (std::uint32_t id = 0; id < 5; ++id)
        tasks.push_back(raw_task(seed, id, shape, spread, s_noise, sc, 200, 500, true));
      // union batch over priors (ids 1..4), or a single task with CAL_SINGLE
      const bool single = std::getenv("CAL_SINGLE") != nullptr;
      std::vector<const LabeledExample*> batch;
      for (std::uint32_t id = 1; id < (single ? 2u : 5u); ++id)
        for (const auto& ex : tasks[id].train_set) batch.push_back(&ex);
      const double init_scale = std::getenv("CAL_INIT") ? std::atof(std::getenv("CAL_INIT")) : 0.5;
      ParameterVector theta = scaled_params(shape, derive_seed(seed, detail::kInitStream),
                                            Scales{init_scale, 0.1, init_scale, 0.0});
      Scratch scratch;
      std::vector<double> dlogits(4);
      int steps = -1;
      double last_acc = 0.0, peak = 0.0;
      int peak_step = 0;
      for (int step = 0; step <= 1500; ++step) {
        double acc_sum = 0.0, train_sum = 0.0;
        const std::uint32_t hi = single ? 2u : 5u;
        for (std::uint32_t id = 1; id < hi; ++id) {
          acc_sum += accuracy(shape, theta, tasks[id].eval_set);
          train_sum += accuracy(shape, theta, tasks[id].train_set);
        }
        last_acc = acc_sum / (hi - 1);
        if (last_acc > peak) { peak = last_acc; peak_step = step; }
        if (acc_sum / 4.0 >= 0.85) {
          steps = step;
          break;
        }
        ParameterVector grad(shape.param_count());
        const double invb = 1.0 / batch.size();
        for (const auto* ex : batch) {
          toy_forward(shape, theta, ex->x, scratch);
          for (std::uint32_t k = 0; k < 4; ++k)
            dlogits[k] = (scratch.probs[k] - (k == ex->label ? 1.0 : 0.0)) * invb;
          toy_backprop_logits(shape, theta, ex->x, dlogits, scratch, grad);
        }
        axpy(theta, -lr, grad);
      }
      double target0 = accuracy(shape, theta, tasks[0].eval_set);
      std::printf(" [seed %llu: steps=%d acc=%.2f peak=%.3f@%d target0=%.2f]",
                  (unsigned long long)seed, steps, last_acc, peak, peak_step, target0);
      std::fflush(stdout);
    }
    std::printf("\n");
  }
}

static void production_probe() {
  int failures = 0;
  double total_attempt_steps = 0.0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    try {
      SuiteParams sp;
      sp.seed = seed;
      const TaskSuite suite = generate_suite(sp);
      const PretrainResult pre = pretrain(suite, seed);
      const double t0 = accuracy(suite.shape, pre.theta0, suite.target.eval_set);
      total_attempt_steps += pre.steps;
      std::printf("seed %2llu: pretrain steps=%4u mean_prior=%.3f target0=%.2f\n",
                  (unsigned long long)seed, pre.steps, pre.mean_prior_eval_accuracy, t0);
    } catch (const std::exception& e) {
      ++failures;
      std::printf("seed %2llu: FAILED (%s)\n", (unsigned long long)seed, e.what());
    }
    std::fflush(stdout);
  }
  std::printf("failures: %d/40, mean steps %.0f\n", failures, total_attempt_steps / 40.0);
}

static void es_forgetting(double sigma, double lambda, int pop, int iters) {
  std::printf("ES N=%d T=%d sigma=%.3f alpha=sigma/2 l2-lambda=%.3f\n", pop, iters, sigma, lambda);
  double sum_target_delta = 0.0, sum_prior_delta = 0.0;
  for (std::uint64_t seed : {1ULL, 2ULL, 5ULL, 6ULL, 9ULL}) {
    SuiteParams sp;
    sp.seed = seed;
    const TaskSuite suite = generate_suite(sp);
    const PretrainResult pre = pretrain(suite, seed);
    EsConfig cfg;
    cfg.population = pop;
    cfg.iterations = iters;
    cfg.sigma = sigma;
    cfg.alpha = sigma / 2.0;
    cfg.run_seed = derive_seed(seed, 0xE5);
    if (lambda > 0.0) {
      cfg.penalty.kind = PenaltyKind::L2;
      cfg.penalty.lambda = lambda;
    }
    const AccuracyReward reward(suite.shape, suite.target, Split::Train);
    dist::LocalPoolEvaluator pool(2);
    const ParameterVector theta = train(pre.theta0, cfg, reward, pool);
    const double t0 = accuracy(suite.shape, pre.theta0, suite.target.eval_set);
    const double t1 = accuracy(suite.shape, theta, suite.target.eval_set);
    double p0 = 0.0, p1 = 0.0;
    for (const TaskSpec& task : suite.priors) {
      p0 += accuracy(suite.shape, pre.theta0, task.eval_set);
      p1 += accuracy(suite.shape, theta, task.eval_set);
    }
    p0 /= suite.priors.size();
    p1 /= suite.priors.size();
    const double dev = l2_distance(theta, pre.theta0);
    std::printf("  seed %llu: target %.3f->%.3f (d=%+.3f) prior %.3f->%.3f (d=%+.3f) |dev|=%.2f\n",
                (unsigned long long)seed, t0, t1, t1 - t0, p0, p1, p1 - p0, dev);
    std::fflush(stdout);
    sum_target_delta += t1 - t0;
    sum_prior_delta += p1 - p0;
  }
  std::printf("  MEAN: target d=%+.3f prior d=%+.3f\n", sum_target_delta / 5.0,
              sum_prior_delta / 5.0);
}

static void grpo_check(double lr, int epochs) {
  std::printf("GRPO lr=%.4f epochs=%d K=30 batch=32 beta=0.001\n", lr, epochs);
  for (std::uint64_t seed : {1ULL, 2ULL, 5ULL, 6ULL, 9ULL}) {
    SuiteParams sp;
    sp.seed = seed;
    const TaskSuite suite = generate_suite(sp);
    const PretrainResult pre = pretrain(suite, seed);
    GrpoConfig cfg;
    cfg.learning_rate = lr;
    cfg.epochs = epochs;
    cfg.run_seed = derive_seed(seed, 0x6780);
    const ParameterVector theta = grpo_train(pre.theta0, cfg, suite);
    const double t0 = accuracy(suite.shape, pre.theta0, suite.target.eval_set);
    const double t1 = accuracy(suite.shape, theta, suite.target.eval_set);
    double p0 = 0.0, p1 = 0.0;
    for (const TaskSpec& task : suite.priors) {
      p0 += accuracy(suite.shape, pre.theta0, task.eval_set);
      p1 += accuracy(suite.shape, theta, task.eval_set);
    }
    std::printf("  seed %llu: target %.3f->%.3f (d=%+.3f) prior %.3f->%.3f (d=%+.3f) |dev|=%.3f\n",
                (unsigned long long)seed, t0, t1, t1 - t0, p0 / 4, p1 / 4, (p1 - p0) / 4,
                l2_distance(theta, pre.theta0));
    std::fflush(stdout);
  }
}

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "scales";
  if (mode == "grpo") {
    grpo_check(argc > 2 ? std::atof(argv[2]) : 1e-2, argc > 3 ? std::atoi(argv[3]) : 500);
  } else if (mode == "es") {
    es_forgetting(argc > 2 ? std::atof(argv[2]) : 0.05, argc > 3 ? std::atof(argv[3]) : 0.0,
                  argc > 4 ? std::atoi(argv[4]) : 8, argc > 5 ? std::atoi(argv[5]) : 500);
  } else if (mode == "probe") {
    production_probe();
  } else if (mode == "scales") {
    sweep_scales(argc > 2 && std::string(argv[2]) == "center");
  } else if (mode == "pretrain") {
    Scales sc{argc > 2 ? std::atof(argv[2]) : 0.3, argc > 3 ? std::atof(argv[3]) : 0.2,
              argc > 4 ? std::atof(argv[4]) : 1.0, argc > 5 ? std::atof(argv[5]) : 0.05};
    sweep_pretrain(sc, argc > 6 ? std::atof(argv[6]) : 2.0, argc > 7 ? std::atof(argv[7]) : 1.0);
  }
  return 0;
}
