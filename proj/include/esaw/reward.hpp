#pragma once

#include "esaw/noise.hpp"
#include "esaw/param_vector.hpp"

namespace esaw {

// Black-box reward R(theta). Task rewards are pure in the parameters (the
// evaluation batch is frozen), which is what makes the whole run a pure
// function of (theta0, config, task data).
class RewardFn {
 public:
  virtual ~RewardFn() = default;

  virtual double evaluate(const ParameterVector& params) const = 0;

  // Entry point used by evaluation backends. The default forwards to
  // evaluate(); synthetic reward sources (random-walk mode) override this to
  // draw a deterministic value keyed by (run_seed, iteration, member) instead.
  virtual double evaluate_member(const ParameterVector& params, const NoiseKey& key) const {
    (void)key;
    return evaluate(params);
  }

  // Backends skip building theta + sigma*epsilon when the reward does not
  // look at the parameters at all.
  virtual bool needs_params() const { return true; }
};

}  // namespace esaw
