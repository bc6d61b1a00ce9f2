#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "sgdinfer/covariance.hpp"
#include "sgdinfer/rng.hpp"

using namespace sgdinfer;

namespace {

BatchMeans make_bm(std::initializer_list<double> scalar_means, std::int64_t b) {
  BatchMeans bm;
  bm.batch_size = b;
  double center = 0.0;
  for (double m : scalar_means) {
    Vector v(1);
    v(0) = m;
    bm.means.push_back(v);
    center += m;
  }
  bm.center = Vector(1);
  bm.center(0) = center / static_cast<double>(bm.means.size());
  return bm;
}

BatchMeans bm_from_chain(const std::vector<Vector>& chain, std::int64_t b) {
  EbsTracker t = EbsTracker::fixed(static_cast<int>(chain.front().size()), b);
  for (const Vector& v : chain) t.push(v);
  return t.finalize();
}

}  // namespace

TEST_CASE("ebs_estimate hand example") {
  CovEstimate est = ebs_estimate(make_bm({2.0, 3.0}, 2));
  CHECK(est.matrix(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(est.kind == CovKind::Ebs);
  CHECK(est.b_n == 2);
  CHECK(est.a_n == 2);
  CHECK(est.n == 4);
  CHECK(!est.indefinite);
}

TEST_CASE("ebs_estimate of a constant chain is zero") {
  std::vector<Vector> chain(40, Vector::Constant(2, 3.25));
  CovEstimate est = ebs_estimate(bm_from_chain(chain, 4));
  CHECK(est.matrix.norm() == 0.0);
}

TEST_CASE("ebs_estimate needs two batches") {
  CHECK_THROWS_AS(ebs_estimate(make_bm({1.0}, 2)), Error);
}

TEST_CASE("ebs_estimate matches the general-form brute force on random chains") {
  Rng rng(5);
  std::vector<Vector> chain = oracles::random_chain(3, 100, rng);
  CovEstimate est = ebs_estimate(bm_from_chain(chain, 4));
  CHECK(est.a_n == 25);
  std::vector<std::int64_t> taus;
  for (std::int64_t tau = 4; tau <= 100; tau += 4) taus.push_back(tau);
  Matrix brute = oracles::bruteforce_general(chain, taus);
  CHECK((est.matrix - brute).norm() <= 1e-12 * brute.norm());
}

TEST_CASE("pair_merge halves the batch count") {
  CHECK_THROWS_AS(pair_merge(make_bm({2.0, 3.0}, 2)), Error);

  BatchMeans merged = pair_merge(make_bm({1.0, 3.0, 5.0, 7.0}, 2));
  CHECK(merged.batch_size == 4);
  REQUIRE(merged.count() == 2);
  CHECK(merged.means[0](0) == 2.0);
  CHECK(merged.means[1](0) == 6.0);
  CHECK(merged.center(0) == 4.0);

  BatchMeans odd = pair_merge(make_bm({1.0, 3.0, 5.0, 7.0, 9.0}, 2));
  REQUIRE(odd.count() == 2);
  CHECK(odd.means[0](0) == 2.0);
  CHECK(odd.means[1](0) == 6.0);
}

TEST_CASE("lugsail hand example") {
  BatchMeans bm = make_bm({1.0, 3.0, 5.0, 7.0}, 2);
  CHECK(ebs_estimate(bm).matrix(0, 0) == doctest::Approx(10.0).epsilon(1e-15));
  CovEstimate doubled = ebs2b_estimate(bm);
  CHECK(doubled.matrix(0, 0) == doctest::Approx(16.0).epsilon(1e-15));
  CHECK(doubled.kind == CovKind::Ebs2b);
  CHECK(doubled.b_n == 4);
  CovEstimate lug = lugsail_estimate(bm);
  CHECK(lug.matrix(0, 0) == doctest::Approx(22.0).epsilon(1e-15));
  CHECK(lug.kind == CovKind::Lugsail);
}

TEST_CASE("lugsail of a constant chain is zero") {
  std::vector<Vector> chain(64, Vector::Constant(2, -1.5));
  CovEstimate lug = lugsail_estimate(bm_from_chain(chain, 4));
  CHECK(lug.matrix.norm() == 0.0);
}

TEST_CASE("lugsail identity holds elementwise and matches the offline oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Vector> chain = oracles::random_chain(2, 96 + 8 * trial, rng);
    std::int64_t b = 4;
    BatchMeans bm = bm_from_chain(chain, b);
    CovEstimate lug = lugsail_estimate(bm);
    Matrix recombined =
        2.0 * ebs_estimate(pair_merge(bm)).matrix - ebs_estimate(bm).matrix;
    CHECK((lug.matrix - recombined).norm() == 0.0);

    Matrix offline = oracles::offline_lugsail(chain, b);
    CHECK((lug.matrix - offline).norm() <= 1e-12 * (1.0 + offline.norm()));
  }
}

TEST_CASE("ibs_estimate reduces to the equal-size estimator") {
  Rng rng(23);
  std::vector<Vector> chain = oracles::random_chain(2, 80, rng);
  BatchMeans bm = bm_from_chain(chain, 8);
  std::vector<std::int64_t> sizes(static_cast<std::size_t>(bm.count()), 8);
  CovEstimate general = ibs_estimate(bm.means, sizes);
  CovEstimate equal = ebs_estimate(bm);
  CHECK((general.matrix - equal.matrix).norm() <= 1e-12 * equal.matrix.norm());
}

TEST_CASE("ibs_estimate with unit batches is the scaled sample covariance") {
  Rng rng(29);
  std::vector<Vector> chain = oracles::random_chain(2, 30, rng);
  std::vector<std::int64_t> sizes(30, 1);
  CovEstimate est = ibs_estimate(chain, sizes);
  Vector mean = Vector::Zero(2);
  for (const Vector& v : chain) mean += v;
  mean /= 30.0;
  Matrix expect = Matrix::Zero(2, 2);
  for (const Vector& v : chain) expect += (v - mean) * (v - mean).transpose();
  expect /= 30.0;
  CHECK((est.matrix - expect).norm() <= 1e-12 * expect.norm());
}

TEST_CASE("ibs_estimate matches the literal summation on the example partition") {
  Rng rng(31);
  std::vector<Vector> chain = oracles::random_chain(2, 100, rng);
  IbsPartition part = ibs_boundaries(100, 0.51, 1.0);
  CovEstimate est = ibs_estimate_chain(chain, part);
  Matrix brute = oracles::bruteforce_general(chain, part.boundaries);
  CHECK((est.matrix - brute).norm() <= 1e-12 * brute.norm());
  CHECK(est.kind == CovKind::Ibs);
  CHECK(est.b_n == 0);
}

TEST_CASE("estimates are PSD as quadratic forms") {
  Rng rng(37);
  std::vector<Vector> chain = oracles::random_chain(3, 120, rng);
  CovEstimate est = ebs_estimate(bm_from_chain(chain, 6));
  for (int i = 0; i < 100; ++i) {
    Vector v(3);
    for (int j = 0; j < 3; ++j) v(j) = rng.normal();
    CHECK(v.dot(est.matrix * v) >= -1e-12);
  }
  CHECK((est.matrix - est.matrix.transpose()).norm() == 0.0);
}

TEST_CASE("scale equivariance under affine maps of the chain") {
  Rng rng(41);
  std::vector<Vector> chain = oracles::random_chain(2, 96, rng);
  Matrix m(2, 2);
  m << 1.3, -0.4, 0.7, 2.1;
  Vector shift(2);
  shift << -5.0, 3.0;
  std::vector<Vector> mapped;
  for (const Vector& v : chain) mapped.push_back(m * v + shift);

  BatchMeans bm = bm_from_chain(chain, 4);
  BatchMeans bm_mapped = bm_from_chain(mapped, 4);

  auto check_equivariant = [&](const Matrix& base, const Matrix& image) {
    Matrix expect = m * base * m.transpose();
    CHECK((image - expect).norm() <= 1e-10 * (1.0 + expect.norm()));
  };
  check_equivariant(ebs_estimate(bm).matrix, ebs_estimate(bm_mapped).matrix);
  check_equivariant(ebs_estimate(pair_merge(bm)).matrix,
                    ebs_estimate(pair_merge(bm_mapped)).matrix);
  check_equivariant(lugsail_estimate(bm).matrix, lugsail_estimate(bm_mapped).matrix);

  IbsPartition part = ibs_boundaries(96, 0.51, 1.0);
  check_equivariant(ibs_estimate_chain(chain, part).matrix,
                    ibs_estimate_chain(mapped, part).matrix);
}

TEST_CASE("ebs_estimate is invariant to batch order and within-batch reversal") {
  Rng rng(43);
  std::vector<Vector> chain = oracles::random_chain(2, 64, rng);
  BatchMeans bm = bm_from_chain(chain, 8);
  Matrix base = ebs_estimate(bm).matrix;

  BatchMeans permuted = bm;
  std::reverse(permuted.means.begin(), permuted.means.end());
  std::swap(permuted.means[1], permuted.means[3]);
  CHECK((ebs_estimate(permuted).matrix - base).norm() == 0.0);

  std::vector<Vector> reversed = chain;
  for (std::size_t k = 0; k < reversed.size() / 8; ++k) {
    std::reverse(reversed.begin() + static_cast<std::ptrdiff_t>(8 * k),
                 reversed.begin() + static_cast<std::ptrdiff_t>(8 * (k + 1)));
  }
  CHECK((ebs_estimate(bm_from_chain(reversed, 8)).matrix - base).norm() <= 1e-12 * base.norm());
}

TEST_CASE("psd_project clips negative eigenvalues") {
  CovEstimate est;
  est.matrix = Matrix::Zero(2, 2);
  est.matrix(0, 0) = 2.0;
  est.matrix(1, 1) = -1.0;
  est.kind = CovKind::Lugsail;
  est.min_eigenvalue = -1.0;
  est.indefinite = true;
  CovEstimate fixed = psd_project(est);
  CHECK(fixed.matrix(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(fixed.matrix(1, 1) == doctest::Approx(5e-11).epsilon(1e-6));
  CHECK(!fixed.indefinite);
  CHECK(fixed.min_eigenvalue > 0.0);

  // PSD inputs pass through unchanged
  CovEstimate ok;
  ok.matrix = Matrix::Identity(3, 3);
  ok.min_eigenvalue = 1.0;
  CHECK((psd_project(ok).matrix - ok.matrix).norm() == 0.0);

  CovEstimate lug;
  lug.matrix = Matrix::Constant(1, 1, 22.0);
  lug.min_eigenvalue = 22.0;
  CHECK(psd_project(lug).matrix(0, 0) == 22.0);
}

TEST_CASE("covariance json round trip is exact") {
  Rng rng(47);
  std::vector<Vector> chain = oracles::random_chain(3, 90, rng);
  CovEstimate est = lugsail_estimate(bm_from_chain(chain, 4));
  CovEstimate back = cov_from_json(cov_to_json(est));
  CHECK((back.matrix - est.matrix).norm() == 0.0);
  CHECK(back.kind == est.kind);
  CHECK(back.b_n == est.b_n);
  CHECK(back.a_n == est.a_n);
  CHECK(back.n == est.n);
  CHECK(back.indefinite == est.indefinite);

  CHECK_THROWS_AS(cov_from_json("{\"format\":\"nope\"}"), Error);
}

TEST_CASE("upper triangle csv lists i<=j entries") {
  CovEstimate est;
  est.matrix = Matrix::Zero(2, 2);
  est.matrix << 1.0, 2.0, 2.0, 3.0;
  std::string csv = cov_upper_triangle_csv(est);
  CHECK(csv == "i,j,value\n0,0,1\n0,1,2\n1,1,3\n");
}
