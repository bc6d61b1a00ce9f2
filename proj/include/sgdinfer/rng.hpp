#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace sgdinfer {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent sub-seed from (master seed, indices...). Used to give
/// each replication / stream / QMC instance its own generator so results do not
/// depend on scheduling order.
inline std::uint64_t sub_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t state = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t p : parts) {
    state ^= splitmix64(state) + p;
    (void)splitmix64(state);
  }
  return splitmix64(state);
}

inline std::uint64_t sub_seed(std::uint64_t master, std::uint64_t index, std::uint64_t purpose = 0) {
  return sub_seed({master, index, purpose});
}

/// Deterministic random source. The distribution transforms are implemented
/// explicitly (not via <random> distributions, whose algorithms are
/// implementation-defined) so identical seeds give identical streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t bits() { return gen_(); }

  /// Uniform on the open interval (0, 1).
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53 + 0x1.0p-54; }

  /// Standard normal via Box-Muller; the second draw of each pair is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Double exponential (Laplace) with density 0.5*exp(-|x|), via inverse CDF.
  double laplace() {
    double u = uniform01() - 0.5;
    return u < 0 ? std::log1p(2.0 * u) : -std::log1p(-2.0 * u);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection to avoid modulo bias.
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v = gen_();
    while (v >= limit) v = gen_();
    return v % n;
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sgdinfer
