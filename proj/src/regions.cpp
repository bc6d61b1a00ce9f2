#include "sgdinfer/regions.hpp"

#include <nlohmann/json.hpp>

#include <boost/math/special_functions/gamma.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <vector>

#include "sgdinfer/rng.hpp"
#include "sgdinfer/stats.hpp"

namespace sgdinfer {

using nlohmann::json;

bool EllipsoidRegion::contains(const Vector& theta) const {
  Vector dev = center - theta;
  double q = static_cast<double>(n) * dev.dot(shape_inv * dev);
  return q <= chi2;
}

const char* rect_kind_name(RectKind kind) {
  switch (kind) {
    case RectKind::Uncorrected: return "UNCORRECTED";
    case RectKind::Bonferroni: return "BONFERRONI";
    case RectKind::Simultaneous: return "SIMULTANEOUS";
  }
  return "?";
}

bool RectRegion::contains(const Vector& theta) const {
  for (int i = 0; i < center.size(); ++i) {
    if (std::abs(theta(i) - center(i)) > halfwidths(i)) return false;
  }
  return true;
}

EllipsoidRegion ellipsoid_region(const Vector& theta_hat, const Matrix& sigma, std::int64_t n,
                                 double p) {
  require(p > 0.0 && p < 1.0, Errc::invalid_argument, "ellipsoid_region: p must be in (0,1)");
  require(n >= 1, Errc::invalid_argument, "ellipsoid_region: n must be positive");
  require(sigma.rows() == sigma.cols() && sigma.rows() == theta_hat.size(),
          Errc::dimension_mismatch, "ellipsoid_region: dimension mismatch");
  int d = static_cast<int>(sigma.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma);
  int min_idx = 0;
  eig.eigenvalues().minCoeff(&min_idx);
  double min_eig = eig.eigenvalues()(min_idx);
  if (min_eig <= 0.0) {
    fail(Errc::singular_matrix, "ellipsoid_region: covariance not positive definite (eigenvalue #" +
                                    std::to_string(min_idx) + " = " + std::to_string(min_eig) + ")");
  }
  EllipsoidRegion region;
  region.center = theta_hat;
  region.shape = sigma;
  region.shape_inv = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
                     eig.eigenvectors().transpose();
  region.chi2 = chi2_quantile(d, 1.0 - p);
  region.n = n;
  region.level = 1.0 - p;
  return region;
}

namespace {

RectRegion rect_from_z(const Vector& theta_hat, const Matrix& sigma, std::int64_t n, double p,
                       double z, RectKind kind) {
  require(p > 0.0 && p < 1.0, Errc::invalid_argument, "rectangle region: p must be in (0,1)");
  require(n >= 1, Errc::invalid_argument, "rectangle region: n must be positive");
  require(sigma.rows() == sigma.cols() && sigma.rows() == theta_hat.size(),
          Errc::dimension_mismatch, "rectangle region: dimension mismatch");
  RectRegion region;
  region.center = theta_hat;
  region.halfwidths = Vector(theta_hat.size());
  for (int i = 0; i < theta_hat.size(); ++i) {
    double v = sigma(i, i);
    require(v > 0.0, Errc::invalid_argument,
            "rectangle region: nonpositive variance at coordinate " + std::to_string(i));
    region.halfwidths(i) = z * std::sqrt(v / static_cast<double>(n));
  }
  region.z = z;
  region.kind = kind;
  region.n = n;
  region.level = 1.0 - p;
  return region;
}

}  // namespace

RectRegion marginal_cis(const Vector& theta_hat, const Matrix& sigma, std::int64_t n, double p) {
  double z = normal_quantile(1.0 - p / 2.0);
  return rect_from_z(theta_hat, sigma, n, p, z, RectKind::Uncorrected);
}

RectRegion bonferroni_region(const Vector& theta_hat, const Matrix& sigma, std::int64_t n,
                             double p) {
  double d = static_cast<double>(theta_hat.size());
  double z = normal_quantile(1.0 - p / (2.0 * d));
  return rect_from_z(theta_hat, sigma, n, p, z, RectKind::Bonferroni);
}

namespace {

// Fractional parts of sqrt(prime) drive the Richtmyer lattice. The cache is
// shared across threads; callers get a copy so extensions cannot invalidate
// anything in flight.
std::vector<double> qmc_generators(int count) {
  static std::mutex mutex;
  static std::vector<double> roots;
  static std::vector<int> primes;
  std::lock_guard<std::mutex> lock(mutex);
  while (static_cast<int>(roots.size()) < count) {
    int candidate = primes.empty() ? 2 : primes.back() + 1;
    for (;; ++candidate) {
      bool is_prime = true;
      for (int p : primes) {
        if (p * p > candidate) break;
        if (candidate % p == 0) {
          is_prime = false;
          break;
        }
      }
      if (is_prime) break;
    }
    primes.push_back(candidate);
    double r = std::sqrt(static_cast<double>(candidate));
    roots.push_back(r - std::floor(r));
  }
  return std::vector<double>(roots.begin(), roots.begin() + count);
}

struct ConditioningFactor {
  Matrix chol;                 // lower triangular, possibly with zero diagonal entries
  std::vector<double> limits;  // per-variable standardized half-width (all equal to z here)
};

// Gram-Schmidt Cholesky of the correlation matrix with greedy variable
// reordering: at each stage pick the variable whose conditional interval
// probability is smallest (Genz-Bretz ordering). Zero pivots (rank-deficient
// correlation) keep a zero diagonal and are handled as point masses during
// integration.
ConditioningFactor reorder_and_factor(Matrix corr, double z) {
  int d = static_cast<int>(corr.rows());
  Matrix L = Matrix::Zero(d, d);
  std::vector<double> y(d, 0.0);
  for (int k = 0; k < d; ++k) {
    int best = -1;
    double best_prob = 2.0;
    for (int i = k; i < d; ++i) {
      double s = 0.0;
      double v = corr(i, i);
      for (int j = 0; j < k; ++j) {
        s += L(i, j) * y[j];
        v -= L(i, j) * L(i, j);
      }
      double prob;
      if (v > 1e-14) {
        double sd = std::sqrt(v);
        prob = normal_cdf((z - s) / sd) - normal_cdf((-z - s) / sd);
      } else {
        prob = (std::abs(s) <= z) ? 1.0 : 0.0;
      }
      if (prob < best_prob) {
        best_prob = prob;
        best = i;
      }
    }
    if (best != k) {
      corr.row(k).swap(corr.row(best));
      corr.col(k).swap(corr.col(best));
      L.row(k).swap(L.row(best));
    }
    double s = 0.0;
    double v = corr(k, k);
    for (int j = 0; j < k; ++j) {
      s += L(k, j) * y[j];
      v -= L(k, j) * L(k, j);
    }
    if (v > 1e-14) {
      double sd = std::sqrt(v);
      L(k, k) = sd;
      for (int i = k + 1; i < d; ++i) {
        double dot = corr(i, k);
        for (int j = 0; j < k; ++j) dot -= L(i, j) * L(k, j);
        L(i, k) = dot / sd;
      }
      double lo = (-z - s) / sd;
      double hi = (z - s) / sd;
      double prob = normal_cdf(hi) - normal_cdf(lo);
      y[k] = prob > 1e-300 ? (normal_pdf(lo) - normal_pdf(hi)) / prob : 0.0;
    } else {
      L(k, k) = 0.0;
      y[k] = 0.0;
    }
  }
  ConditioningFactor f;
  f.chol = std::move(L);
  f.limits.assign(d, z);
  return f;
}

double clamp_unit(double u) { return std::min(std::max(u, 1e-16), 1.0 - 1e-16); }

}  // namespace

RectProb mvn_rect_prob(const Matrix& sigma, double z, const QmcOptions& opt) {
  require(sigma.rows() == sigma.cols(), Errc::dimension_mismatch, "mvn_rect_prob: matrix not square");
  require(z > 0.0, Errc::invalid_argument, "mvn_rect_prob: z must be positive");
  int d = static_cast<int>(sigma.rows());
  require(d >= 1, Errc::invalid_argument, "mvn_rect_prob: empty matrix");
  for (int i = 0; i < d; ++i) {
    require(sigma(i, i) > 0.0, Errc::invalid_argument,
            "mvn_rect_prob: nonpositive variance at coordinate " + std::to_string(i));
  }
  if (d == 1) return RectProb{2.0 * normal_cdf(z) - 1.0, 0.0, true};

  // Standardize to a correlation matrix; the limits become +-z everywhere.
  Matrix corr(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      corr(i, j) = sigma(i, j) / std::sqrt(sigma(i, i) * sigma(j, j));
      corr(i, j) = std::clamp(corr(i, j), -1.0, 1.0);
    }
    corr(i, i) = 1.0;
  }
  ConditioningFactor factor = reorder_and_factor(corr, z);
  const Matrix& L = factor.chol;

  const int n_points = 1 << opt.points_log2;
  const int n_shifts = std::max(opt.shifts, 2);
  const std::vector<double> gens = qmc_generators(d - 1);

  Rng shift_rng(sub_seed(opt.seed, 0x514d43 /* "QMC" */));
  std::vector<double> shift(static_cast<std::size_t>(d) - 1);
  std::vector<double> y(static_cast<std::size_t>(d) - 1);
  std::vector<double> shift_means(n_shifts, 0.0);

  for (int s = 0; s < n_shifts; ++s) {
    for (double& sh : shift) sh = shift_rng.uniform01();
    double mean = 0.0;
    for (int k = 1; k <= n_points; ++k) {
      double f;
      {
        double hi = normal_cdf(z / L(0, 0));
        double lo = normal_cdf(-z / L(0, 0));
        f = hi - lo;
        double w = std::abs(2.0 * std::fmod(k * gens[0] + shift[0], 1.0) - 1.0);
        y[0] = normal_quantile(clamp_unit(lo + w * (hi - lo)));
      }
      for (int i = 1; i < d; ++i) {
        double t = 0.0;
        for (int j = 0; j < i; ++j) t += L(i, j) * y[static_cast<std::size_t>(j)];
        double lo, hi;
        if (L(i, i) > 0.0) {
          lo = normal_cdf((-z - t) / L(i, i));
          hi = normal_cdf((z - t) / L(i, i));
        } else {
          // Degenerate coordinate: it equals t exactly.
          lo = (-z - t) > 0.0 ? 1.0 : 0.0;
          hi = (z - t) >= 0.0 ? 1.0 : 0.0;
        }
        f *= hi - lo;
        if (i < d - 1) {
          double w = std::abs(2.0 * std::fmod(k * gens[static_cast<std::size_t>(i)] +
                                                  shift[static_cast<std::size_t>(i)],
                                              1.0) -
                              1.0);
          y[static_cast<std::size_t>(i)] = normal_quantile(clamp_unit(lo + w * (hi - lo)));
        }
      }
      mean += (f - mean) / static_cast<double>(k);
    }
    shift_means[static_cast<std::size_t>(s)] = mean;
  }

  double prob = 0.0;
  for (double m : shift_means) prob += m;
  prob /= static_cast<double>(n_shifts);
  double var = 0.0;
  for (double m : shift_means) var += (m - prob) * (m - prob);
  double se = std::sqrt(var / (static_cast<double>(n_shifts) * (n_shifts - 1)));
  prob = std::clamp(prob, 0.0, 1.0);
  return RectProb{prob, se, se <= opt.accuracy};
}

SimultaneousZ simultaneous_z(const Matrix& sigma, double p, double tol, const QmcOptions& opt) {
  require(p > 0.0 && p < 1.0, Errc::invalid_argument, "simultaneous_z: p must be in (0,1)");
  require(tol > 0.0, Errc::invalid_argument, "simultaneous_z: tol must be positive");
  int d = static_cast<int>(sigma.rows());
  double target = 1.0 - p;
  double z_lo = normal_quantile(1.0 - p / 2.0);
  double z_hi = normal_quantile(1.0 - p / (2.0 * d));
  if (d == 1) return SimultaneousZ{z_lo, target, 0.0, false};

  // Common seed across evaluations so the estimated probability is a fixed,
  // effectively monotone function of z during the bisection.
  RectProb at_hi = mvn_rect_prob(sigma, z_hi, opt);
  if (at_hi.prob < target) {
    // Possible only through QMC noise; the Bonferroni endpoint is conservative.
    return SimultaneousZ{z_hi, at_hi.prob, at_hi.se, true};
  }
  RectProb at_lo = mvn_rect_prob(sigma, z_lo, opt);
  if (at_lo.prob >= target) {
    return SimultaneousZ{z_lo, at_lo.prob, at_lo.se, false};
  }
  double lo = z_lo, hi = z_hi;
  RectProb last = at_hi;
  double z_mid = hi;
  while (hi - lo > tol) {
    z_mid = 0.5 * (lo + hi);
    last = mvn_rect_prob(sigma, z_mid, opt);
    if (std::abs(last.prob - target) <= tol) {
      return SimultaneousZ{z_mid, last.prob, last.se, false};
    }
    if (last.prob < target) {
      lo = z_mid;
    } else {
      hi = z_mid;
    }
  }
  z_mid = 0.5 * (lo + hi);
  last = mvn_rect_prob(sigma, z_mid, opt);
  return SimultaneousZ{z_mid, last.prob, last.se, false};
}

RectRegion simultaneous_region(const Vector& theta_hat, const Matrix& sigma, std::int64_t n,
                               double p, double tol, const QmcOptions& opt) {
  SimultaneousZ res = simultaneous_z(sigma, p, tol, opt);
  RectRegion region = rect_from_z(theta_hat, sigma, n, p, res.z_star, RectKind::Simultaneous);
  region.achieved_prob = res.achieved_prob;
  region.qmc_se = res.qmc_se;
  region.endpoint_warning = res.endpoint_warning;
  return region;
}

double volume_ratio(const RectRegion& rect, const EllipsoidRegion& ell) {
  int d = static_cast<int>(rect.center.size());
  require(d == ell.center.size(), Errc::dimension_mismatch, "volume_ratio: dimension mismatch");
  double log_vol_rect = 0.0;
  for (int i = 0; i < d; ++i) log_vol_rect += std::log(2.0 * rect.halfwidths(i));
  Eigen::LLT<Matrix> llt(ell.shape / static_cast<double>(ell.n));
  require(llt.info() == Eigen::Success, Errc::singular_matrix,
          "volume_ratio: singular covariance");
  double half_logdet = 0.0;
  for (int i = 0; i < d; ++i) half_logdet += std::log(llt.matrixL()(i, i));
  double dd = static_cast<double>(d);
  // boost::math::lgamma is thread-safe; std::lgamma writes the signgam global
  double log_vol_ell = 0.5 * dd * std::log(std::numbers::pi) -
                       boost::math::lgamma(dd / 2.0 + 1.0) + 0.5 * dd * std::log(ell.chi2) +
                       half_logdet;
  return std::exp((log_vol_rect - log_vol_ell) / dd);
}

PredictionInterval predict_prob_interval(const Vector& x, const Vector& theta_hat,
                                         const Matrix& sigma, std::int64_t n, double level) {
  require(x.size() == theta_hat.size() && sigma.rows() == x.size(), Errc::dimension_mismatch,
          "predict_prob_interval: dimension mismatch");
  require(level > 0.0 && level < 1.0, Errc::invalid_argument,
          "predict_prob_interval: level must be in (0,1)");
  double s = x.dot(theta_hat);
  double p_hat = s >= 0.0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
  double quad = std::max(x.dot(sigma * x), 0.0);
  double se = p_hat * (1.0 - p_hat) * std::sqrt(quad / static_cast<double>(n));
  double z = normal_quantile(0.5 + level / 2.0);
  PredictionInterval pi;
  pi.p_hat = p_hat;
  pi.se = se;
  pi.lower = std::max(0.0, p_hat - z * se);
  pi.upper = std::min(1.0, p_hat + z * se);
  pi.level = level;
  return pi;
}

Classification classify_conservative(double p_hat, double se, double cutoff, double z) {
  require(cutoff >= 0.0 && cutoff <= 1.0, Errc::invalid_argument,
          "classify_conservative: cutoff must be in [0,1]");
  Classification c;
  c.plain = p_hat > cutoff;
  c.conservative = p_hat - z * se > cutoff;
  return c;
}

std::string regions_report_json(const Vector& theta_hat, const CovEstimate& sigma, std::int64_t n,
                                double p, double tol, const QmcOptions& opt) {
  CovEstimate usable = sigma.indefinite ? psd_project(sigma) : sigma;
  json report;
  report["n"] = n;
  report["p"] = p;
  report["level"] = 1.0 - p;
  report["center"] = std::vector<double>(theta_hat.data(), theta_hat.data() + theta_hat.size());
  report["estimator_kind"] = cov_kind_name(sigma.kind);
  report["psd_projected"] = sigma.indefinite;

  EllipsoidRegion ell = ellipsoid_region(theta_hat, usable.matrix, n, p);
  json je;
  je["kind"] = "ELLIPSOID";
  je["chi2"] = ell.chi2;
  je["threshold"] = ell.chi2 / static_cast<double>(n);
  std::vector<double> flat;
  for (int i = 0; i < ell.shape.rows(); ++i) {
    for (int j = 0; j < ell.shape.cols(); ++j) flat.push_back(ell.shape(i, j));
  }
  je["shape"] = flat;
  report["ellipsoid"] = std::move(je);

  auto rect_json = [](const RectRegion& r) {
    json jr;
    jr["kind"] = rect_kind_name(r.kind);
    jr["z"] = r.z;
    jr["halfwidths"] = std::vector<double>(r.halfwidths.data(), r.halfwidths.data() + r.halfwidths.size());
    if (r.kind == RectKind::Simultaneous) {
      jr["achieved_prob"] = r.achieved_prob;
      jr["qmc_se"] = r.qmc_se;
      jr["endpoint_warning"] = r.endpoint_warning;
    }
    return jr;
  };
  report["uncorrected"] = rect_json(marginal_cis(theta_hat, usable.matrix, n, p));
  report["bonferroni"] = rect_json(bonferroni_region(theta_hat, usable.matrix, n, p));
  RectRegion simul = simultaneous_region(theta_hat, usable.matrix, n, p, tol, opt);
  report["simultaneous"] = rect_json(simul);
  report["volume_ratio"] = volume_ratio(simul, ell);
  return report.dump(2);
}

}  // namespace sgdinfer
