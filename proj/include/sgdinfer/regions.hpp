#pragma once

#include <cstdint>
#include <string>

#include "sgdinfer/common.hpp"
#include "sgdinfer/covariance.hpp"

namespace sgdinfer {

/// Confidence ellipsoid {theta : n (c-theta)' Sigma^{-1} (c-theta) <= chi2}.
struct EllipsoidRegion {
  Vector center;
  Matrix shape;      // Sigma-hat
  Matrix shape_inv;  // cached inverse for membership tests
  double chi2 = 0.0;
  std::int64_t n = 0;
  double level = 0.0;  // 1 - p

  bool contains(const Vector& theta) const;
};

enum class RectKind { Uncorrected, Bonferroni, Simultaneous };

const char* rect_kind_name(RectKind kind);

/// Axis-aligned rectangle center_i +- z * sqrt(sigma_ii / n).
struct RectRegion {
  Vector center;
  Vector halfwidths;
  double z = 0.0;
  RectKind kind = RectKind::Uncorrected;
  std::int64_t n = 0;
  double level = 0.0;
  // Filled for SIMULTANEOUS regions only.
  double achieved_prob = -1.0;
  double qmc_se = -1.0;
  bool endpoint_warning = false;

  bool contains(const Vector& theta) const;
};

struct PredictionInterval {
  double p_hat = 0.0;
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.0;
};

EllipsoidRegion ellipsoid_region(const Vector& theta_hat, const Matrix& sigma, std::int64_t n,
                                 double p);

RectRegion marginal_cis(const Vector& theta_hat, const Matrix& sigma, std::int64_t n, double p);

RectRegion bonferroni_region(const Vector& theta_hat, const Matrix& sigma, std::int64_t n, double p);

/// Budget and determinism knobs for the quasi-Monte Carlo rectangle
/// probability. All estimates are deterministic given the seed.
struct QmcOptions {
  int points_log2 = 13;
  int shifts = 8;
  double accuracy = 5e-4;
  std::uint64_t seed = 0;
};

struct RectProb {
  double prob = 0.0;
  double se = 0.0;
  bool converged = true;  // false when the reported se exceeds the accuracy target
};

/// P(|X_i| <= z * sqrt(sigma_ii) for all i), X ~ N(0, sigma), by randomized QMC
/// over the sequential-conditioning (separation-of-variables) representation
/// with a reordered Cholesky factor of the correlation matrix.
RectProb mvn_rect_prob(const Matrix& sigma, double z, const QmcOptions& opt = {});

struct SimultaneousZ {
  double z_star = 0.0;
  double achieved_prob = 0.0;
  double qmc_se = 0.0;
  bool endpoint_warning = false;
};

/// Bisection on [z_{1-p/2}, z_{1-p/(2d)}] until the rectangle probability is
/// within tol of 1-p or the bracket width drops below tol.
SimultaneousZ simultaneous_z(const Matrix& sigma, double p, double tol = 1e-3,
                             const QmcOptions& opt = {});

RectRegion simultaneous_region(const Vector& theta_hat, const Matrix& sigma, std::int64_t n,
                               double p, double tol = 1e-3, const QmcOptions& opt = {});

/// (Vol(rect)/Vol(ellipsoid))^(1/d); both regions must come from the same
/// (theta_hat, Sigma, n).
double volume_ratio(const RectRegion& rect, const EllipsoidRegion& ell);

/// Delta-method interval for a fitted logistic probability at covariate x.
PredictionInterval predict_prob_interval(const Vector& x, const Vector& theta_hat,
                                         const Matrix& sigma, std::int64_t n, double level);

struct Classification {
  bool plain = false;         // p_hat > q
  bool conservative = false;  // p_hat - z*se > q
};

Classification classify_conservative(double p_hat, double se, double cutoff, double z);

/// All four regions plus the volume ratio, serialized for the CLI.
std::string regions_report_json(const Vector& theta_hat, const CovEstimate& sigma, std::int64_t n,
                                double p, double tol, const QmcOptions& opt);

}  // namespace sgdinfer
