#pragma once

#include <cmath>
#include <cstdint>

#include "sgdinfer/common.hpp"

namespace sgdinfer {

class EbsTracker;

/// One observation: covariate vector and response.
struct Datum {
  Vector x;
  double y = 0.0;
};

/// Source of observations. Synthetic generators never run out; file-backed
/// sources return false when exhausted.
class DataSource {
 public:
  virtual ~DataSource() = default;
  virtual bool next(Datum& out) = 0;
};

/// Loss-gradient oracle: fills grad with the gradient of f(theta, datum) in theta.
class GradientOracle {
 public:
  virtual ~GradientOracle() = default;
  virtual int dimension() const = 0;
  virtual void gradient(const Vector& theta, const Datum& datum, Vector& grad) const = 0;
};

/// Polynomially decaying step size eta_i = eta0 * i^(-alpha), alpha in (0.5, 1).
class LearningRateSchedule {
 public:
  LearningRateSchedule(double eta0, double alpha) : eta0_(eta0), alpha_(alpha) {
    require(eta0 > 0.0, Errc::invalid_argument, "learning rate: eta0 must be positive");
    require(alpha > 0.5 && alpha < 1.0, Errc::invalid_argument,
            "learning rate: alpha must lie in (0.5, 1)");
  }

  double at(std::int64_t i) const { return eta0_ * std::pow(static_cast<double>(i), -alpha_); }

  double eta0() const { return eta0_; }
  double alpha() const { return alpha_; }

 private:
  double eta0_;
  double alpha_;
};

/// Mutable state of one SGD chain. `index` counts every oracle call including
/// burn-in; `running_mean` is the exact online mean of the post-burn-in
/// iterates only.
struct IterateState {
  Vector theta;
  Vector running_mean;
  std::int64_t index = 0;
  std::int64_t burned = 0;
  std::int64_t burn_in = 0;  // budget of initial iterates to discard

  static IterateState start(const Vector& theta0, std::int64_t burn_in) {
    IterateState s;
    s.theta = theta0;
    s.running_mean = Vector::Zero(theta0.size());
    s.burn_in = burn_in;
    return s;
  }

  std::int64_t averaged() const { return index - burned; }
};

/// One SGD update: theta <- theta - eta * grad. Advances the global step index
/// and folds the new iterate into the running mean once past the burn-in budget.
void sgd_step(IterateState& state, const Vector& grad, double eta);

struct AsgdResult {
  Vector theta_hat;  // mean of the n post-burn-in iterates
  IterateState state;
};

/// Runs burn_in + n steps from state's current position, pushing each
/// post-burn-in iterate into the tracker (if given). The learning-rate clock is
/// the global step index and keeps running through the burn-in.
void asgd_advance(IterateState& state, const GradientOracle& oracle, DataSource& stream,
                  const LearningRateSchedule& schedule, std::int64_t steps, EbsTracker* tracker);

AsgdResult run_asgd(const GradientOracle& oracle, DataSource& stream,
                    const LearningRateSchedule& schedule, const Vector& theta0,
                    std::int64_t burn_in, std::int64_t n, EbsTracker* tracker = nullptr);

}  // namespace sgdinfer
