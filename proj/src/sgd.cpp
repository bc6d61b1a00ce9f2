#include "sgdinfer/sgd.hpp"

#include <string>

#include "sgdinfer/batching.hpp"

namespace sgdinfer {

void sgd_step(IterateState& state, const Vector& grad, double eta) {
  require(grad.size() == state.theta.size(), Errc::dimension_mismatch,
          "sgd_step: gradient length " + std::to_string(grad.size()) +
              " does not match parameter dimension " + std::to_string(state.theta.size()));
  state.theta -= eta * grad;
  ++state.index;
  if (state.index > state.burn_in) {
    // m <- m + (theta - m)/k keeps the mean exact over very long runs.
    double k = static_cast<double>(state.index - state.burn_in);
    state.running_mean += (state.theta - state.running_mean) / k;
  } else {
    state.burned = state.index;
  }
}

void asgd_advance(IterateState& state, const GradientOracle& oracle, DataSource& stream,
                  const LearningRateSchedule& schedule, std::int64_t steps, EbsTracker* tracker) {
  Datum datum;
  Vector grad(state.theta.size());
  for (std::int64_t s = 0; s < steps; ++s) {
    if (!stream.next(datum)) {
      fail(Errc::insufficient_data,
           "data stream exhausted after " + std::to_string(state.index) + " iterates (" +
               std::to_string(steps - s) + " more requested)");
    }
    oracle.gradient(state.theta, datum, grad);
    sgd_step(state, grad, schedule.at(state.index + 1));
    if (tracker != nullptr && state.index > state.burn_in) tracker->push(state.theta);
  }
}

AsgdResult run_asgd(const GradientOracle& oracle, DataSource& stream,
                    const LearningRateSchedule& schedule, const Vector& theta0,
                    std::int64_t burn_in, std::int64_t n, EbsTracker* tracker) {
  require(theta0.size() == oracle.dimension(), Errc::dimension_mismatch,
          "run_asgd: theta0 length does not match oracle dimension");
  require(burn_in >= 0, Errc::invalid_argument, "run_asgd: burn_in must be nonnegative");
  require(n >= 1, Errc::invalid_argument, "run_asgd: n must be positive");
  IterateState state = IterateState::start(theta0, burn_in);
  asgd_advance(state, oracle, stream, schedule, burn_in + n, tracker);
  return AsgdResult{state.running_mean, std::move(state)};
}

}  // namespace sgdinfer
