#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sgdinfer/batching.hpp"
#include "sgdinfer/rng.hpp"

using namespace sgdinfer;

namespace {

Vector scalar(double x) {
  Vector v(1);
  v(0) = x;
  return v;
}

}  // namespace

TEST_CASE("ebs_batch_size examples") {
  CHECK(ebs_batch_size(8, 1.0, 1.0) == 8);
  CHECK(ebs_batch_size(10000, 0.1, 0.755) == 128);
  CHECK(ebs_batch_size(1, 0.1, 0.755) == 1);
}

TEST_CASE("ebs_batch_size guards") {
  CHECK_THROWS_AS(ebs_batch_size(0, 1.0, 0.5), Error);
  CHECK_THROWS_AS(ebs_batch_size(10, -1.0, 0.5), Error);
  CHECK_THROWS_AS(ebs_batch_size(10, 1.0, 1.5), Error);
  CHECK_THROWS_AS(ebs_batch_size(1000000, 1e18, 1.0), Error);  // overflow guard
}

TEST_CASE("tracker groups pushes into fixed batches") {
  EbsTracker t = EbsTracker::fixed(1, 2);
  for (double x : {1.0, 3.0, 2.0, 4.0}) t.push(scalar(x));
  REQUIRE(t.complete_batches() == 2);
  CHECK(t.batch_sums()[0](0) == 4.0);
  CHECK(t.batch_sums()[1](0) == 6.0);
  CHECK(t.partial_count() == 0);
}

TEST_CASE("tracker doubling merges adjacent sums") {
  // c=0.3, beta=0.9: b=1 for n<=3, 2 for n in [4,8], 4 for n>=9. Pushing
  // 1,3,2,4 exercises the odd-count doubling (third sum becomes the partial
  // prefix); pushing on to n=9 exercises the even-count merge (4,6)->(10).
  EbsTracker t(1, 0.3, 0.9);
  t.push(scalar(1.0));
  t.push(scalar(3.0));
  t.push(scalar(2.0));
  CHECK(t.batch_size() == 1);
  CHECK(t.complete_batches() == 3);
  t.push(scalar(4.0));
  CHECK(t.batch_size() == 2);
  REQUIRE(t.complete_batches() == 2);
  CHECK(t.batch_sums()[0](0) == 4.0);   // 1+3
  CHECK(t.batch_sums()[1](0) == 6.0);   // 2+4 (unpaired sum merged with the new push)
  CHECK(t.partial_count() == 0);

  t.push(scalar(5.0));
  t.push(scalar(7.0));
  t.push(scalar(6.0));
  t.push(scalar(8.0));
  CHECK(t.batch_size() == 2);
  CHECK(t.complete_batches() == 4);
  t.push(scalar(9.0));
  CHECK(t.batch_size() == 4);
  REQUIRE(t.complete_batches() == 2);
  CHECK(t.batch_sums()[0](0) == 10.0);  // (1+3)+(2+4)
  CHECK(t.batch_sums()[1](0) == 26.0);  // (5+7)+(6+8)
  CHECK(t.partial_count() == 1);
  CHECK(t.partial_sum()(0) == 9.0);
}

TEST_CASE("tracker finalize computes means and center") {
  EbsTracker t = EbsTracker::fixed(1, 2);
  for (double x : {1.0, 3.0, 2.0, 4.0}) t.push(scalar(x));
  BatchMeans bm = t.finalize();
  CHECK(bm.batch_size == 2);
  REQUIRE(bm.count() == 2);
  CHECK(bm.means[0](0) == 2.0);
  CHECK(bm.means[1](0) == 3.0);
  CHECK(bm.center(0) == 2.5);
}

TEST_CASE("tracker finalize drops the incomplete tail") {
  EbsTracker t = EbsTracker::fixed(1, 2);
  for (double x : {1.0, 3.0, 2.0, 4.0, 99.0}) t.push(scalar(x));
  BatchMeans bm = t.finalize();
  CHECK(bm.count() == 2);
}

TEST_CASE("tracker finalize needs two complete batches") {
  EbsTracker t = EbsTracker::fixed(1, 4);
  for (double x : {1.0, 2.0, 3.0, 4.0, 5.0}) t.push(scalar(x));
  try {
    t.finalize();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::insufficient_data);
    CHECK(std::string(e.what()).find("insufficient batches") != std::string::npos);
  }
}

TEST_CASE("batch count at n=1e4 with the default settings") {
  EbsTracker t(1, 0.1, 0.755);
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) t.push(scalar(rng.normal()));
  CHECK(t.batch_size() == 128);
  CHECK(t.complete_batches() == 78);
}

TEST_CASE("tracker rejects dimension mismatch") {
  EbsTracker t(2, 0.1, 0.755);
  CHECK_THROWS_AS(t.push(scalar(1.0)), Error);
}

TEST_CASE("power-of-two law and bounds over a sweep") {
  const double c = 0.1, beta = 0.755;
  EbsTracker t(1, c, beta);
  std::int64_t prev_b = t.batch_size();
  Rng rng(9);
  for (std::int64_t n = 1; n <= 50000; ++n) {
    t.push(scalar(rng.normal()));
    std::int64_t b = t.batch_size();
    CHECK((b & (b - 1)) == 0);  // power of two
    double target = c * std::pow(static_cast<double>(n), beta);
    CHECK(static_cast<double>(b) >= target);
    CHECK(static_cast<double>(b) < 2.0 * std::max(target, 1.0));
    // never decreases; grows only by exact doubling
    CHECK(b >= prev_b);
    if (b != prev_b) CHECK(b == 2 * prev_b);
    prev_b = b;
  }
}

TEST_CASE("online tracker equals offline batching at every stage") {
  struct Config {
    int d;
    double c, beta;
    std::int64_t n;
  };
  for (const Config& cfg : {Config{1, 0.5, 0.6, 200}, Config{3, 0.2, 0.8, 317},
                            Config{2, 1.3, 0.4, 150}, Config{5, 0.05, 0.9, 400}}) {
    Rng rng(static_cast<std::uint64_t>(cfg.n));
    std::vector<Vector> chain = oracles::random_chain(cfg.d, cfg.n, rng, true);
    EbsTracker t(cfg.d, cfg.c, cfg.beta);
    Vector total = Vector::Zero(cfg.d);
    for (std::int64_t i = 0; i < cfg.n; ++i) {
      t.push(chain[static_cast<std::size_t>(i)]);
      total += chain[static_cast<std::size_t>(i)];

      // merge conservation, exact for integer-valued iterates
      Vector held = t.partial_sum();
      for (const Vector& s : t.batch_sums()) held += s;
      CHECK((held - total).norm() == 0.0);
    }
    // offline equivalence at the final batch size
    std::vector<Vector> offline = oracles::offline_batch_means(chain, t.batch_size());
    if (offline.size() >= 2) {
      BatchMeans bm = t.finalize();
      REQUIRE(bm.count() == static_cast<std::int64_t>(offline.size()));
      for (std::size_t k = 0; k < offline.size(); ++k) {
        CHECK((bm.means[k] - offline[k]).norm() <= 1e-12 * (1.0 + offline[k].norm()));
      }
    }
  }
}

TEST_CASE("tracker snapshot round-trips and resumes exactly") {
  Rng rng(11);
  std::vector<Vector> chain = oracles::random_chain(2, 300, rng);
  EbsTracker full(2, 0.3, 0.7);
  EbsTracker first_half(2, 0.3, 0.7);
  for (int i = 0; i < 300; ++i) {
    full.push(chain[static_cast<std::size_t>(i)]);
    if (i < 150) first_half.push(chain[static_cast<std::size_t>(i)]);
  }
  EbsTracker resumed = EbsTracker::from_json(first_half.to_json());
  for (int i = 150; i < 300; ++i) resumed.push(chain[static_cast<std::size_t>(i)]);
  CHECK(resumed.n_seen() == full.n_seen());
  CHECK(resumed.batch_size() == full.batch_size());
  REQUIRE(resumed.complete_batches() == full.complete_batches());
  for (std::int64_t k = 0; k < full.complete_batches(); ++k) {
    CHECK(resumed.batch_sums()[static_cast<std::size_t>(k)] ==
          full.batch_sums()[static_cast<std::size_t>(k)]);
  }
  CHECK(resumed.partial_sum() == full.partial_sum());

  CHECK_THROWS_AS(EbsTracker::from_json("{not json"), Error);
  CHECK_THROWS_AS(EbsTracker::from_json("{\"format\":\"other\"}"), Error);
}

TEST_CASE("ibs boundaries match the direct evaluation") {
  IbsPartition part = ibs_boundaries(100, 0.51, 1.0);
  CHECK(part.exponent == doctest::Approx(1.51 / 0.49).epsilon(1e-15));
  REQUIRE(part.count() == 5);
  CHECK(part.boundaries == std::vector<std::int64_t>({1, 8, 29, 71, 100}));
  CHECK(!part.scale_adjusted);

  std::vector<std::int64_t> sizes = part.sizes();
  // nondecreasing except possibly the final clipped batch
  for (std::size_t k = 1; k + 1 < sizes.size(); ++k) CHECK(sizes[k] >= sizes[k - 1]);
  std::int64_t covered = 0;
  for (std::int64_t s : sizes) covered += s;
  CHECK(covered == 100);
}

TEST_CASE("ibs boundaries shrink the scale when batches are too few") {
  IbsPartition part = ibs_boundaries(100, 0.51, 64.0, 6);
  CHECK(part.scale_adjusted);
  CHECK(part.count() >= 6);
  CHECK(part.n() == 100);

  // n smaller than the scale: a single batch would remain without shrinking
  IbsPartition tiny = ibs_boundaries(5, 0.51, 100.0, 2);
  CHECK(tiny.scale_adjusted);
  CHECK(tiny.count() >= 2);

  CHECK_THROWS_AS(ibs_boundaries(1, 0.51, 100.0, 2), Error);
}

TEST_CASE("ibs accumulator reproduces the stored-chain batching") {
  Rng rng(21);
  std::vector<Vector> chain = oracles::random_chain(2, 100, rng);
  IbsPartition part = ibs_boundaries(100, 0.51, 1.0);
  IbsAccumulator acc(part, 2);
  for (const Vector& v : chain) acc.push(v);
  REQUIRE(acc.complete());
  auto [means, sizes] = acc.batches();
  std::int64_t prev = 0;
  for (std::size_t k = 0; k < means.size(); ++k) {
    Vector expect = Vector::Zero(2);
    for (std::int64_t i = prev; i < part.boundaries[k]; ++i) {
      expect += chain[static_cast<std::size_t>(i)];
    }
    expect /= static_cast<double>(sizes[k]);
    CHECK((means[k] - expect).norm() <= 1e-12 * (1.0 + expect.norm()));
    prev = part.boundaries[k];
  }
}

TEST_CASE("decorrelation bound values") {
  // vanishing learning rate: empty decay, bound -> 1
  LearningRateSchedule tiny(1e-12, 0.51);
  CHECK(decorrelation_bound(3, 4, tiny, 1.0) == doctest::Approx(1.0).epsilon(1e-10));

  LearningRateSchedule unit(1.0, 0.51);
  double expected = std::exp(-(std::pow(2.0, -0.51) + std::pow(3.0, -0.51)));
  CHECK(decorrelation_bound(1, 3, unit, 1.0) == doctest::Approx(expected).epsilon(1e-14));

  // nonincreasing in k for fixed j
  double prev = 1.0;
  for (std::int64_t k = 2; k < 12; ++k) {
    double b = decorrelation_bound(1, k, unit, 0.5);
    CHECK(b <= prev);
    prev = b;
  }
  CHECK_THROWS_AS(decorrelation_bound(3, 3, unit, 1.0), Error);
}
