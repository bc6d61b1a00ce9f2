#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgdinfer/batching.hpp"
#include "sgdinfer/common.hpp"
#include "sgdinfer/covariance.hpp"
#include "sgdinfer/models.hpp"
#include "sgdinfer/regions.hpp"

namespace sgdinfer {

/// ||sigma_hat - sigma_true||_F / ||sigma_true||_F.
double rel_frobenius(const Matrix& sigma_hat, const Matrix& sigma_true);

/// Replication-study configuration. beta defaults to (1+alpha)/2 and c to 0.1;
/// Assumption-style validation requires alpha in (0.5,1) and beta in (alpha,1).
struct ExperimentConfig {
  ModelKind model = ModelKind::Linear;
  DesignKind design = DesignKind::Identity;
  int d = 5;
  double rho = 0.5;
  double eta0 = 0.5;
  double alpha = 0.51;
  double beta = 0.0;  // 0 = use (1+alpha)/2
  double c = 0.1;
  std::int64_t burn_in = 1000;
  std::int64_t n_max = 0;  // 0 = last checkpoint
  std::vector<std::int64_t> checkpoints;
  int replications = 100;
  std::uint64_t seed = 1;
  std::vector<CovKind> estimators = {CovKind::Ebs, CovKind::Lugsail};
  double p = 0.05;
  bool region_metrics = true;
  double region_tol = 1e-3;
  int qmc_points_log2 = 13;
  int qmc_shifts = 8;
  double qmc_accuracy = 5e-4;
  double ibs_scale = 64.0;
  std::optional<Vector> beta_star;  // default: interior grid k/(d+1)
  double label_offset = 0.0;        // logistic class-imbalance control
  int threads = 0;                  // 0 = SGDINFER_THREADS env or hardware

  double resolved_beta() const { return beta > 0.0 ? beta : (1.0 + alpha) / 2.0; }
  std::int64_t resolved_n_max() const;
  Vector resolved_beta_star() const;
  void validate() const;

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
};

struct StatCell {
  double mean = 0.0;
  double se = 0.0;
  std::int64_t reps = 0;
};

/// Aggregated metrics for one (checkpoint, estimator) pair. Missing optionals
/// mean the metric does not apply (e.g. rel_frobenius without a known truth);
/// a row whose metrics are all empty carries the ABSENT reason in `note`.
struct MetricsRow {
  std::int64_t n = 0;
  std::string estimator;
  std::optional<StatCell> rel_frobenius;
  std::optional<StatCell> ellipsoid_coverage;
  std::optional<StatCell> rect_coverage;
  std::optional<StatCell> volume_ratio;
  std::optional<StatCell> min_eigenvalue;
  std::optional<StatCell> indefinite_fraction;
  std::string note;
};

/// Runs seeded replications of the configured model, evaluating every
/// requested estimator at every checkpoint. Replications are independent
/// (per-rep sub-seeds) and may run on several threads; aggregates do not
/// depend on the schedule. When the true covariance is known an ORACLE row
/// per checkpoint reports ellipsoid coverage under the true Sigma.
std::vector<MetricsRow> run_replications(const ExperimentConfig& config);

/// Long-form CSV: one row per (n, estimator, metric).
std::string metrics_csv(const std::vector<MetricsRow>& rows);

/// Reproducibility manifest (canonical config, config hash, library version).
std::string run_manifest_json(const ExperimentConfig& config,
                              const std::vector<std::string>& outputs);

struct BiasOracleResult {
  double ebs = 0.0;
  double lugsail = 0.0;
  std::int64_t b = 0;
  std::int64_t a = 0;
};

/// Closed-form bias approximation for the mean model:
/// -2*C1/n * sum_{j<k} sum_{p in batch j} sum_{q in batch k} q^-a (1-q^-a)^(q-p),
/// with the inner geometric sums collapsed so the cost is O(n); the lugsail
/// value is 2*bias(2b) - bias(b).
BiasOracleResult mean_model_bias_oracle(std::int64_t n, double alpha, double c, double beta,
                                        double c1);

/// The raw triple sum at an explicit batch size (C1 = 1, no -2/n prefactor).
double mean_model_bias_sum(std::int64_t n, std::int64_t b, double alpha);

struct QqTable {
  std::vector<double> empirical;
  std::vector<double> theoretical;
};

/// Pools all d*a components of sqrt(b)*(mean_k - center) (center = theta_star
/// when given), standardizes by the pooled SD, sorts, and pairs with normal
/// quantiles at (i - 0.5)/(d a).
QqTable qq_data(const BatchMeans& bm, const std::optional<Vector>& theta_star);

std::string qq_csv(const QqTable& table);

struct ClassifyConfig {
  double eta0 = 0.05;
  double alpha = 0.51;
  double beta = 0.0;  // 0 = (1+alpha)/2
  double c = 0.1;
  std::int64_t warmstart_n = 10000;  // observations consumed by the Newton MLE warm start
  std::int64_t burn_in = 5000;
  double level = 0.95;  // z_{0.975} in the conservative rule
};

struct ClassificationRow {
  double cutoff = 0.0;
  double plain_rate = 0.0;
  double conservative_rate = 0.0;
};

struct ClassificationResult {
  std::vector<ClassificationRow> rows;
  Vector theta_hat;
  CovEstimate sigma;
  std::int64_t n_averaged = 0;
};

/// Fits by ASGD with a warm start, builds the lugsail-EBS estimate, and
/// reports plain vs. conservative misclassification rates per cutoff.
ClassificationResult classification_experiment(DataSource& train, std::span<const Datum> test,
                                               const ClassifyConfig& config,
                                               const std::vector<double>& cutoffs);

/// Thread-count resolution: explicit > SGDINFER_THREADS > hardware.
int resolve_threads(int requested);

}  // namespace sgdinfer
