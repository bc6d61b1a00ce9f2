#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "sgdinfer/models.hpp"
#include "sgdinfer/rng.hpp"

using namespace sgdinfer;

namespace {

Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<int>(values.size()));
  int i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

double linear_loss(const Vector& theta, const Datum& d) {
  double r = d.y - d.x.dot(theta);
  return 0.5 * r * r;
}

double lad_loss(const Vector& theta, const Datum& d) { return std::abs(d.y - d.x.dot(theta)); }

double logistic_loss(const Vector& theta, const Datum& d) {
  double s = d.x.dot(theta);
  double lse = s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
  return lse - d.y * s;
}

template <typename Loss>
void check_gradient_fd(const GradientOracle& oracle, Loss loss, const Vector& theta,
                       const Datum& datum, double tol) {
  int d = static_cast<int>(theta.size());
  Vector grad(d);
  oracle.gradient(theta, datum, grad);
  const double h = 1e-6;
  for (int j = 0; j < d; ++j) {
    Vector up = theta, down = theta;
    up(j) += h;
    down(j) -= h;
    double fd = (loss(up, datum) - loss(down, datum)) / (2.0 * h);
    CHECK(std::abs(grad(j) - fd) <= tol * (1.0 + std::abs(fd)));
  }
}

std::string write_temp_csv(const std::string& name, const std::string& content) {
  std::string path = "/tmp/sgdinfer_test_" + name;
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("linear gradient examples") {
  LinearGradient oracle(2);
  Vector grad(2);

  Datum noiseless;
  noiseless.x = vec({1.0, 2.0});
  noiseless.y = vec({1.0, 2.0}).dot(vec({0.5, -0.25}));
  oracle.gradient(vec({0.5, -0.25}), noiseless, grad);
  CHECK(grad.norm() == 0.0);

  Datum d2;
  d2.x = vec({1.0, 2.0});
  d2.y = 3.0;
  oracle.gradient(vec({0.0, 0.0}), d2, grad);
  CHECK(grad(0) == -3.0);
  CHECK(grad(1) == -6.0);

  // mean model as the one-dimensional, x = 1 special case
  MeanGradient mean;
  Vector g1(1);
  Datum dm;
  dm.x = vec({1.0});
  dm.y = 4.0;
  mean.gradient(vec({1.5}), dm, g1);
  CHECK(g1(0) == 1.5 - 4.0);
}

TEST_CASE("lad gradient sign convention") {
  LadGradient oracle(2);
  Vector grad(2);
  Datum d;
  d.x = vec({2.0, -1.0});

  d.y = 10.0;  // positive residual
  oracle.gradient(vec({0.0, 0.0}), d, grad);
  CHECK(grad == -d.x);

  d.y = -10.0;  // negative residual
  oracle.gradient(vec({0.0, 0.0}), d, grad);
  CHECK(grad == d.x);

  d.y = 0.0;  // zero residual: chosen subgradient is zero
  oracle.gradient(vec({0.0, 0.0}), d, grad);
  CHECK(grad.norm() == 0.0);
}

TEST_CASE("logistic gradient saturates without overflow") {
  LogisticGradient oracle(1);
  Vector grad(1);
  Datum d;
  d.x = vec({1.0});
  d.y = 0.0;
  oracle.gradient(vec({0.0}), d, grad);
  CHECK(grad(0) == 0.5);

  d.y = 1.0;
  oracle.gradient(vec({40.0}), d, grad);
  CHECK(std::abs(grad(0)) < 1e-15);
  oracle.gradient(vec({-745.0}), d, grad);  // exp underflow territory
  CHECK(std::isfinite(grad(0)));
}

TEST_CASE("gradients match central finite differences") {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    int d = 1 + static_cast<int>(rng.below(5));
    Vector theta(d), x(d);
    for (int j = 0; j < d; ++j) {
      theta(j) = rng.normal();
      x(j) = rng.normal();
    }
    Datum datum;
    datum.x = x;

    datum.y = rng.normal() * 2.0;
    check_gradient_fd(LinearGradient(d), linear_loss, theta, datum, 1e-6);

    // keep the LAD check away from the kink
    if (std::abs(datum.y - x.dot(theta)) > 1e-3) {
      check_gradient_fd(LadGradient(d), lad_loss, theta, datum, 1e-6);
    }

    datum.y = rng.bernoulli(0.5) ? 1.0 : 0.0;
    check_gradient_fd(LogisticGradient(d), logistic_loss, theta, datum, 1e-6);
  }
}

TEST_CASE("toeplitz cholesky by hand") {
  CovariateDesign design = make_design(DesignKind::Toeplitz, 2, 0.5);
  CHECK(design.chol_lower(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(design.chol_lower(1, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(design.chol_lower(1, 1) == doctest::Approx(std::sqrt(0.75)).epsilon(1e-15));
}

TEST_CASE("rho = 0 reduces every design to the identity") {
  for (DesignKind kind : {DesignKind::Toeplitz, DesignKind::Equicorr}) {
    CovariateDesign design = make_design(kind, 4, 0.0);
    CHECK((design.a - Matrix::Identity(4, 4)).norm() == 0.0);
  }
  CHECK_THROWS_AS(make_design(DesignKind::Equicorr, 3, -0.2), Error);
  CHECK_THROWS_AS(make_design(DesignKind::Toeplitz, 3, 1.0), Error);
}

TEST_CASE("true sigma closed forms") {
  CovariateDesign eq = make_design(DesignKind::Equicorr, 3, 0.5);
  Matrix sigma = true_sigma(eq);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(sigma(i, j) == doctest::Approx(i == j ? 1.5 : -0.5).epsilon(1e-12));
    }
  }
  CHECK((true_sigma(make_design(DesignKind::Identity, 4, 0.0)) - Matrix::Identity(4, 4)).norm() ==
        0.0);

  for (DesignKind kind : {DesignKind::Identity, DesignKind::Toeplitz, DesignKind::Equicorr}) {
    for (int d : {2, 5, 20}) {
      CovariateDesign design = make_design(kind, d, 0.5);
      Matrix residual = design.a * true_sigma(design) - Matrix::Identity(d, d);
      CHECK(residual.lpNorm<Eigen::Infinity>() <= 1e-10);
    }
  }
}

TEST_CASE("sampled covariates reproduce the design covariance") {
  CovariateDesign design = make_design(DesignKind::Toeplitz, 3, 0.5);
  Rng rng(103);
  const int n = 100000;
  Matrix acc = Matrix::Zero(3, 3);
  Vector x;
  for (int i = 0; i < n; ++i) {
    sample_covariate(design, rng, x);
    acc += x * x.transpose();
  }
  acc /= static_cast<double>(n);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double se = std::sqrt((design.a(i, i) * design.a(j, j) + design.a(i, j) * design.a(i, j)) /
                            static_cast<double>(n));
      CHECK(std::abs(acc(i, j) - design.a(i, j)) <= 5.0 * se);
    }
  }
}

TEST_CASE("laplace noise has unit mean absolute value") {
  Rng rng(107);
  double acc = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) acc += std::abs(rng.laplace());
  CHECK(acc / n == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("logistic stream with zero coefficients is balanced") {
  CovariateDesign design = make_design(DesignKind::Identity, 3, 0.0);
  auto stream = gen_stream(ModelKind::Logistic, design, Vector::Zero(3), 5);
  Datum d;
  double ones = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    stream->next(d);
    ones += d.y;
  }
  CHECK(ones / n == doctest::Approx(0.5).epsilon(0.03));
}

TEST_CASE("label offset shifts the logistic base rate") {
  CovariateDesign design = make_design(DesignKind::Identity, 2, 0.0);
  auto stream = gen_stream(ModelKind::Logistic, design, Vector::Zero(2), 5, -2.0);
  Datum d;
  double ones = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    stream->next(d);
    ones += d.y;
  }
  CHECK(ones / n == doctest::Approx(logistic_sigmoid(-2.0)).epsilon(0.1));
}

TEST_CASE("linear stream residuals have unit variance at the truth") {
  CovariateDesign design = make_design(DesignKind::Identity, 4, 0.0);
  Vector beta = default_beta_star(4);
  auto stream = gen_stream(ModelKind::Linear, design, beta, 5);
  Datum d;
  double ss = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    stream->next(d);
    double r = d.y - d.x.dot(beta);
    ss += r * r;
  }
  CHECK(ss / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("streams are bitwise reproducible for a fixed seed") {
  CovariateDesign design = make_design(DesignKind::Toeplitz, 3, 0.5);
  auto a = gen_stream(ModelKind::Lad, design, default_beta_star(3), 99);
  auto b = gen_stream(ModelKind::Lad, design, default_beta_star(3), 99);
  Datum da, db;
  for (int i = 0; i < 100; ++i) {
    a->next(da);
    b->next(db);
    CHECK(da.x == db.x);
    CHECK(da.y == db.y);
  }
}

TEST_CASE("beta star grid uses interior points") {
  Vector beta = default_beta_star(4);
  CHECK(beta(0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(beta(3) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("csv split is reproducible and covers the file") {
  std::string path = write_temp_csv(
      "toy.csv", "a,b,y\n1.0,2.0,1\n-1.0,0.5,0\n0.25,0.75,1\n2.0,-2.0,0\n");
  CsvSplit s1 = csv_stream(path, "y", {}, 0.5, 7);
  CHECK(s1.train.size() == 2);
  CHECK(s1.test.size() == 2);
  CHECK(s1.skipped_rows == 0);
  CHECK(s1.feature_names == std::vector<std::string>({"a", "b"}));

  CsvSplit s2 = csv_stream(path, "y", {}, 0.5, 7);
  CHECK(s1.train_indices == s2.train_indices);
  CHECK(s1.test_indices == s2.test_indices);
  std::remove(path.c_str());
}

TEST_CASE("csv errors are diagnosed") {
  std::string missing = write_temp_csv("missing.csv", "a,b,y\n1,2,1\n2,3,0\n");
  try {
    csv_stream(missing, "label", {}, 0.5, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::data);
    CHECK(std::string(e.what()).find("label") != std::string::npos);
  }
  std::remove(missing.c_str());

  std::string malformed =
      write_temp_csv("malformed.csv", "a,y\n1,1\nbroken,0\n2,0\n3,1\n");
  CsvSplit s = csv_stream(malformed, "y", {}, 0.5, 1);
  CHECK(s.skipped_rows == 1);
  CHECK(s.train.size() + s.test.size() == 3);
  std::remove(malformed.c_str());

  std::string nonbinary = write_temp_csv("nonbinary.csv", "a,y\n1,1\n2,2\n");
  CHECK_THROWS_AS(csv_stream(nonbinary, "y", {}, 0.5, 1), Error);
  std::remove(nonbinary.c_str());
}

TEST_CASE("logistic mle recovers an easy model") {
  Rng rng(113);
  CovariateDesign design = make_design(DesignKind::Identity, 3, 0.0);
  Vector beta = vec({0.8, -0.5, 0.3});
  auto stream = gen_stream(ModelKind::Logistic, design, beta, 17);
  std::vector<Datum> data(4000);
  for (Datum& d : data) stream->next(d);
  Vector fit = logistic_mle(data);
  CHECK((fit - beta).norm() < 0.25);

  std::vector<Datum> single;
  for (int i = 0; i < 10; ++i) {
    Datum d;
    d.x = vec({1.0});
    d.y = 1.0;
    single.push_back(d);
  }
  CHECK_THROWS_AS(logistic_mle(single), Error);
}
