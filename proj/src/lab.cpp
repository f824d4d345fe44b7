#include "esaw/lab.hpp"

namespace esaw::lab {

RandomWalkResult run_random_walk(const RandomWalkSettings& settings) {
  if (settings.repeats < 1 || settings.populations.empty() || settings.dim < 1) {
    throw ConfigError("random-walk: needs dim >= 1, repeats >= 1 and at least one population");
  }
  RandomWalkResult result;
  result.settings = settings;
  std::vector<std::uint32_t> checkpoints = settings.checkpoints;
  if (checkpoints.empty()) {
    checkpoints = {settings.iterations};
  }
  for (std::uint32_t cp : checkpoints) {
    if (cp < 1 || cp > settings.iterations) {
      throw ConfigError("random-walk: checkpoint outside [1, iterations]");
    }
  }

  const SyntheticNoiseReward reward;
  dist::LocalPoolEvaluator evaluator(1);
  const ParameterVector theta0(settings.dim);
  const bool l2_decay = settings.penalty.kind == PenaltyKind::L2 && settings.penalty.lambda > 0.0;

  for (std::uint32_t population : settings.populations) {
    RandomWalkSeries series;
    series.population = population;
    series.checkpoints = checkpoints;
    series.measured_mean_dev_sq.assign(checkpoints.size(), 0.0);

    for (std::uint32_t rep = 0; rep < settings.repeats; ++rep) {
      EsConfig cfg;
      cfg.alpha = settings.alpha;
      cfg.sigma = 1.0;  // irrelevant: the reward never sees the parameters
      cfg.population = population;
      cfg.iterations = settings.iterations;
      cfg.run_seed = derive_seed(settings.run_seed, 0x7257ULL, population, rep);
      cfg.penalty = settings.penalty;

      std::size_t next_checkpoint = 0;
      IterationObserver observer = [&](std::uint32_t t, const ParameterVector&,
                                       const ParameterVector& theta,
                                       std::span<const PopulationRecord>) {
        while (next_checkpoint < checkpoints.size() && checkpoints[next_checkpoint] == t) {
          series.measured_mean_dev_sq[next_checkpoint] += squared_distance(theta, theta0);
          ++next_checkpoint;
        }
      };
      train(theta0, cfg, reward, evaluator, {&observer, 1});
    }

    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
      series.measured_mean_dev_sq[i] /= settings.repeats;
      series.predicted_dev_sq.push_back(predicted_deviation_sq(
          settings.alpha, checkpoints[i], static_cast<double>(settings.dim), population));
      if (l2_decay) {
        series.decay_predicted_dev_sq.push_back(
            l2_recurrence_deviation_sq(settings.alpha, settings.penalty.lambda, checkpoints[i],
                                       static_cast<double>(settings.dim), population));
      }
      const double reference =
          l2_decay ? series.decay_predicted_dev_sq[i] : series.predicted_dev_sq[i];
      series.ratio.push_back(series.measured_mean_dev_sq[i] / reference);
    }
    result.series.push_back(std::move(series));
  }
  return result;
}

LabSetup prepare_setup(std::uint64_t seed, const SuiteParams& suite_params,
                       double pretrain_threshold, std::uint32_t pretrain_max_steps,
                       double pretrain_learning_rate) {
  SuiteParams params = suite_params;
  params.seed = seed;
  LabSetup setup;
  setup.suite = generate_suite(params);
  setup.pretrained = pretrain(setup.suite, seed, pretrain_threshold, pretrain_max_steps,
                              pretrain_learning_rate);
  return setup;
}

namespace {

DriftReport start_report(const TaskSuite& suite, const ParameterVector& theta0,
                         const DriftReport& existing, std::uint32_t start_iteration) {
  if (start_iteration > 0) {
    if (existing.rows.empty()) {
      throw InvalidInputError("resume: missing prior report rows");
    }
    return existing;
  }
  DriftReport report;
  report.num_priors = static_cast<std::uint32_t>(suite.priors.size());
  report.rows.push_back(snapshot_metrics(theta0, theta0, theta0, suite, 0));
  return report;
}

}  // namespace

TrainOutcome run_es_training(const TaskSuite& suite, const ParameterVector& theta0,
                             const EsRunSpec& spec, PopulationEvaluator& evaluator) {
  if (theta0.size() != suite.shape.param_count()) {
    throw DimensionError("run_es_training: theta0 does not match the suite's model shape");
  }
  TrainOutcome outcome;
  outcome.report = start_report(suite, theta0, spec.existing_report, spec.start_iteration);

  const std::uint32_t cadence = spec.metrics_every == 0 ? 1 : spec.metrics_every;
  const std::uint32_t t_end = spec.cfg.iterations;
  std::vector<IterationObserver> observers;
  observers.push_back([&](std::uint32_t t, const ParameterVector& prev,
                          const ParameterVector& cur, std::span<const PopulationRecord>) {
    if (t % cadence == 0 || t == t_end) {
      outcome.report.rows.push_back(snapshot_metrics(cur, prev, theta0, suite, t));
    }
    if (spec.checkpoint_fn && spec.checkpoint_every > 0 && t % spec.checkpoint_every == 0 &&
        t != t_end) {
      spec.checkpoint_fn(t, cur, outcome.report);
    }
  });
  for (const IterationObserver& obs : spec.observers) {
    observers.push_back(obs);
  }

  const AccuracyReward reward(suite.shape, suite.target, Split::Train);
  const std::uint32_t t_begin = spec.start_iteration + 1;
  const ParameterVector start =
      spec.start_iteration > 0 ? spec.theta_start : theta0;
  outcome.theta_final =
      train_range(start, theta0, t_begin, t_end, spec.cfg, reward, evaluator, observers);
  outcome.summary = summarize_forgetting(outcome.report);
  return outcome;
}

TrainOutcome run_grpo_training(const TaskSuite& suite, const ParameterVector& theta0,
                               const GrpoRunSpec& spec) {
  if (theta0.size() != suite.shape.param_count()) {
    throw DimensionError("run_grpo_training: theta0 does not match the suite's model shape");
  }
  TrainOutcome outcome;
  outcome.report = start_report(suite, theta0, spec.existing_report, spec.start_epoch);

  const std::uint32_t cadence = spec.metrics_every == 0 ? 1 : spec.metrics_every;
  const std::uint32_t e_end = spec.cfg.epochs;
  std::vector<GrpoObserver> observers;
  observers.push_back(
      [&](std::uint32_t epoch, const ParameterVector& prev, const ParameterVector& cur) {
        if (epoch % cadence == 0 || epoch == e_end) {
          outcome.report.rows.push_back(snapshot_metrics(cur, prev, theta0, suite, epoch));
        }
        if (spec.checkpoint_fn && spec.checkpoint_every > 0 &&
            epoch % spec.checkpoint_every == 0 && epoch != e_end) {
          spec.checkpoint_fn(epoch, cur, outcome.report);
        }
      });
  for (const GrpoObserver& obs : spec.observers) {
    observers.push_back(obs);
  }

  const std::uint32_t e_begin = spec.start_epoch + 1;
  const ParameterVector start = spec.start_epoch > 0 ? spec.theta_start : theta0;
  outcome.theta_final =
      grpo_train_range(start, theta0, e_begin, e_end, spec.cfg, suite, observers);
  outcome.summary = summarize_forgetting(outcome.report);
  return outcome;
}

}  // namespace esaw::lab
