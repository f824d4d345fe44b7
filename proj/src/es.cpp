#include "esaw/es.hpp"

#include <cmath>

namespace esaw {

void EsConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw ConfigError("es: alpha must be > 0");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ConfigError("es: sigma must be > 0");
  }
  if (population < 2) {
    throw ConfigError("es: population must be >= 2");
  }
  if (iterations < 1) {
    throw ConfigError("es: iterations must be >= 1");
  }
  if (!(normalization_epsilon >= 0.0)) {
    throw ConfigError("es: normalization_epsilon must be >= 0");
  }
  penalty.validate(0 /* length checked against theta at use */);
}

std::vector<double> z_normalize(std::span<const double> rewards, double epsilon) {
  const std::size_t n = rewards.size();
  if (n < 2) {
    throw InvalidInputError("z_normalize: population must have >= 2 members");
  }
  double mean = 0.0;
  for (double r : rewards) {
    mean += r;
  }
  mean /= static_cast<double>(n);
  double var = 0.0;  // population variance, divisor N
  for (double r : rewards) {
    const double u = r - mean;
    var += u * u;
  }
  var /= static_cast<double>(n);
  std::vector<double> out(n, 0.0);
  if (std::sqrt(var) <= epsilon) {
    return out;  // degenerate population: zero update
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rewards[i] - mean;
    out[i] = std::copysign(std::sqrt(u * u / var), u);
  }
  return out;
}

namespace {

void check_members(std::span<const PopulationRecord> records) {
  if (records.empty()) {
    throw ProtocolError("es_update_direction: no records");
  }
  const std::uint32_t t = records.front().iteration;
  std::vector<bool> seen(records.size(), false);
  for (const PopulationRecord& rec : records) {
    if (rec.iteration != t) {
      throw ProtocolError("es_update_direction: records span several iterations");
    }
    if (rec.member_index < 1 || rec.member_index > records.size() ||
        seen[rec.member_index - 1]) {
      throw ProtocolError("es_update_direction: member indices must cover 1..N exactly "
                          "(bad or duplicate index " +
                          std::to_string(rec.member_index) + ")");
    }
    seen[rec.member_index - 1] = true;
  }
}

}  // namespace

ParameterVector es_update_direction(std::span<const PopulationRecord> records, std::size_t d) {
  check_members(records);
  ParameterVector direction(d);
  for (const PopulationRecord& rec : records) {
    const double w = rec.normalized_reward;
    if (w == 0.0) {
      continue;
    }
    for_each_normal(rec.key, d, [&](std::size_t i, double eps) { direction[i] += w * eps; });
  }
  const double inv_n = 1.0 / static_cast<double>(records.size());
  for (double& v : direction) {
    v *= inv_n;
  }
  return direction;
}

std::vector<PopulationRecord> apply_population_update(ParameterVector& theta,
                                                      const ParameterVector& anchor,
                                                      std::uint32_t iteration,
                                                      const EsConfig& cfg,
                                                      std::span<const double> raw_rewards) {
  require_same_size(theta, anchor, "apply_population_update");
  if (raw_rewards.size() != cfg.population) {
    throw ProtocolError("apply_population_update: got " + std::to_string(raw_rewards.size()) +
                        " rewards for population " + std::to_string(cfg.population));
  }
  const std::vector<double> normalized = z_normalize(raw_rewards, cfg.normalization_epsilon);

  std::vector<PopulationRecord> records(cfg.population);
  bool all_zero = true;
  for (std::uint32_t n = 1; n <= cfg.population; ++n) {
    PopulationRecord& rec = records[n - 1];
    rec.iteration = iteration;
    rec.member_index = n;
    rec.key = NoiseKey{cfg.run_seed, iteration, n};
    rec.raw_reward = raw_rewards[n - 1];
    rec.normalized_reward = normalized[n - 1];
    all_zero = all_zero && normalized[n - 1] == 0.0;
  }
  // Degenerate guard fired: theta stays bit-identical (no zero-valued axpy,
  // which could still flip signed zeros).
  if (!all_zero) {
    const ParameterVector direction = es_update_direction(records, theta.size());
    axpy(theta, cfg.alpha, direction);
  }
  apply_awd(theta, anchor, cfg.alpha, cfg.penalty);
  return records;
}

std::vector<PopulationRecord> run_iteration(ParameterVector& theta,
                                            const ParameterVector& anchor,
                                            std::uint32_t iteration, const EsConfig& cfg,
                                            const RewardFn& reward_fn,
                                            PopulationEvaluator& evaluator) {
  if (iteration < 1) {
    throw InvalidInputError("run_iteration: iterations are 1-based");
  }
  const std::vector<double> rewards = evaluator.evaluate(theta, iteration, cfg, reward_fn);
  return apply_population_update(theta, anchor, iteration, cfg, rewards);
}

ParameterVector train_range(ParameterVector theta, const ParameterVector& anchor,
                            std::uint32_t t_begin, std::uint32_t t_end, const EsConfig& cfg,
                            const RewardFn& reward_fn, PopulationEvaluator& evaluator,
                            std::span<const IterationObserver> observers) {
  cfg.validate();
  ParameterVector prev = theta;
  for (std::uint32_t t = t_begin; t <= t_end; ++t) {
    const std::string where = "iteration " + std::to_string(t) + ": ";
    try {
      prev = theta;
      const std::vector<PopulationRecord> records =
          run_iteration(theta, anchor, t, cfg, reward_fn, evaluator);
      for (const IterationObserver& obs : observers) {
        obs(t, prev, theta, records);
      }
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    } catch (const ProtocolError& e) {
      throw ProtocolError(where + e.what());
    } catch (const EvalError& e) {
      throw EvalError(where + e.what());
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
  }
  return theta;
}

ParameterVector train(const ParameterVector& theta0, const EsConfig& cfg,
                      const RewardFn& reward_fn, PopulationEvaluator& evaluator,
                      std::span<const IterationObserver> observers) {
  const ParameterVector anchor = theta0;  // frozen before iteration 1
  return train_range(theta0, anchor, 1, cfg.iterations, cfg, reward_fn, evaluator, observers);
}

}  // namespace esaw
