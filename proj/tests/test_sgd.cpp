#include <doctest.h>

#include <cmath>

#include "sgdinfer/batching.hpp"
#include "sgdinfer/models.hpp"
#include "sgdinfer/sgd.hpp"

using namespace sgdinfer;

namespace {

Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<int>(values.size()));
  int i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

// Deterministic scalar data source for hand examples.
class FixedSource final : public DataSource {
 public:
  explicit FixedSource(std::vector<double> ys) : ys_(std::move(ys)) {}
  bool next(Datum& out) override {
    if (pos_ >= ys_.size()) return false;
    out.x = vec({1.0});
    out.y = ys_[pos_++];
    return true;
  }

 private:
  std::vector<double> ys_;
  std::size_t pos_ = 0;
};

}  // namespace

TEST_CASE("learning rate schedule values") {
  CHECK(LearningRateSchedule(0.5, 0.51).at(1) == 0.5);
  CHECK(LearningRateSchedule(0.5, 0.51).at(100) ==
        doctest::Approx(0.5 * std::pow(100.0, -0.51)).epsilon(1e-14));
  CHECK(LearningRateSchedule(1.0, 0.75).at(16) == doctest::Approx(0.125).epsilon(1e-15));
}

TEST_CASE("learning rate schedule validation") {
  CHECK_THROWS_AS(LearningRateSchedule(0.0, 0.51), Error);
  CHECK_THROWS_AS(LearningRateSchedule(-1.0, 0.51), Error);
  CHECK_THROWS_AS(LearningRateSchedule(1.0, 0.5), Error);
  CHECK_THROWS_AS(LearningRateSchedule(1.0, 1.0), Error);
}

TEST_CASE("sgd_step arithmetic") {
  IterateState state = IterateState::start(vec({0.0, 0.0}), 0);
  sgd_step(state, vec({1.0, -2.0}), 0.5);
  CHECK(state.theta(0) == -0.5);
  CHECK(state.theta(1) == 1.0);
  CHECK(state.index == 1);
}

TEST_CASE("sgd_step zero gradient is a fixed point") {
  IterateState state = IterateState::start(vec({1.25, -3.5}), 0);
  Vector before = state.theta;
  sgd_step(state, vec({0.0, 0.0}), 7.0);
  CHECK(state.theta == before);
}

TEST_CASE("sgd_step mean-model hand example") {
  // theta_1 = theta_0 + eta_1 (y_1 - theta_0) with theta_0 = 0, y_1 = 2, eta_1 = 1
  IterateState state = IterateState::start(vec({0.0}), 0);
  Vector grad = vec({state.theta(0) - 2.0});
  sgd_step(state, grad, 1.0);
  CHECK(state.theta(0) == 2.0);
}

TEST_CASE("sgd_step rejects dimension mismatch") {
  IterateState state = IterateState::start(vec({0.0, 0.0}), 0);
  CHECK_THROWS_AS(sgd_step(state, vec({1.0}), 0.5), Error);
}

TEST_CASE("sgd_step determinism is bitwise") {
  for (int rep = 0; rep < 3; ++rep) {
    IterateState state = IterateState::start(vec({0.3, -0.7}), 0);
    sgd_step(state, vec({0.1234567890123, -9.87654321e-3}), 0.371);
    static Vector first;
    if (rep == 0) {
      first = state.theta;
    } else {
      CHECK(state.theta(0) == first(0));
      CHECK(state.theta(1) == first(1));
    }
  }
}

TEST_CASE("run_asgd single step returns theta_1") {
  FixedSource stream({2.0});
  MeanGradient oracle;
  LearningRateSchedule schedule(1.0, 0.51);
  AsgdResult res = run_asgd(oracle, stream, schedule, vec({0.0}), 0, 1);
  CHECK(res.theta_hat(0) == 2.0);
  CHECK(res.state.index == 1);
}

TEST_CASE("run_asgd fixed point when data equals start") {
  FixedSource stream(std::vector<double>(50, 5.0));
  MeanGradient oracle;
  LearningRateSchedule schedule(0.5, 0.51);
  AsgdResult res = run_asgd(oracle, stream, schedule, vec({5.0}), 10, 40);
  CHECK(res.theta_hat(0) == 5.0);
  CHECK(res.state.theta(0) == 5.0);
}

TEST_CASE("run_asgd matches an offline reference loop exactly") {
  std::vector<double> ys = {1.0, 3.0, 2.0, 4.0};
  FixedSource stream(ys);
  MeanGradient oracle;
  LearningRateSchedule schedule(1.0, 0.51);
  AsgdResult res = run_asgd(oracle, stream, schedule, vec({0.0}), 0, 4);

  double theta = 0.0;
  double mean = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    double eta = std::pow(static_cast<double>(i + 1), -0.51);
    theta = theta + eta * (ys[i] - theta);
    mean += (theta - mean) / static_cast<double>(i + 1);
  }
  CHECK(res.state.theta(0) == theta);
  CHECK(res.theta_hat(0) == mean);
}

TEST_CASE("run_asgd reports consumed iterates when the stream runs dry") {
  FixedSource stream({1.0, 2.0, 3.0});
  MeanGradient oracle;
  LearningRateSchedule schedule(1.0, 0.51);
  try {
    run_asgd(oracle, stream, schedule, vec({0.0}), 1, 5);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::insufficient_data);
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
}

TEST_CASE("running mean equals offline recomputation") {
  Rng rng(42);
  CovariateDesign design = make_design(DesignKind::Identity, 3, 0.0);
  auto stream = gen_stream(ModelKind::Linear, design, default_beta_star(3), 7);
  LinearGradient oracle(3);
  LearningRateSchedule schedule(0.5, 0.6);

  IterateState state = IterateState::start(Vector::Zero(3), 5);
  Datum datum;
  Vector grad(3);
  std::vector<Vector> kept;
  for (int i = 0; i < 205; ++i) {
    stream->next(datum);
    oracle.gradient(state.theta, datum, grad);
    sgd_step(state, grad, schedule.at(state.index + 1));
    if (state.index > 5) kept.push_back(state.theta);
  }
  Vector offline = Vector::Zero(3);
  for (const Vector& t : kept) offline += t;
  offline /= static_cast<double>(kept.size());
  CHECK((state.running_mean - offline).norm() <= 1e-12 * offline.norm());
  CHECK(state.averaged() == 200);
  CHECK(state.burned == 5);
}

TEST_CASE("learning rate clock runs through the burn-in") {
  // Two runs over the same data, one with burn-in and one without; the chain
  // with burn-in must match the plain chain (same eta at the same global step).
  std::vector<double> ys = {1.0, -2.0, 0.5, 3.0, -1.0, 2.5};
  MeanGradient oracle;
  LearningRateSchedule schedule(1.0, 0.6);

  FixedSource a(ys);
  AsgdResult with_burn = run_asgd(oracle, a, schedule, vec({0.0}), 2, 4);

  double theta = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    theta -= schedule.at(static_cast<std::int64_t>(i + 1)) * (theta - ys[i]);
  }
  CHECK(with_burn.state.theta(0) == doctest::Approx(theta).epsilon(1e-15));
}
