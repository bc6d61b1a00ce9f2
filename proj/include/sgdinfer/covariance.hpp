#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgdinfer/batching.hpp"
#include "sgdinfer/common.hpp"

namespace sgdinfer {

enum class CovKind { Ebs, Ebs2b, Lugsail, Ibs };

const char* cov_kind_name(CovKind kind);
CovKind cov_kind_from_name(const std::string& name);

/// A batch-means covariance estimate with its batching metadata. EBS/EBS2B/IBS
/// estimates are positive semidefinite by construction; the lugsail
/// combination can be indefinite at finite n, which is flagged rather than
/// repaired.
struct CovEstimate {
  Matrix matrix;
  CovKind kind = CovKind::Ebs;
  std::int64_t b_n = 0;  // batch size (0 for IBS)
  std::int64_t a_n = 0;  // number of batches
  std::int64_t n = 0;    // iterates used
  double min_eigenvalue = 0.0;
  bool indefinite = false;

  int dim() const { return static_cast<int>(matrix.rows()); }
};

/// Equal-batch-size estimator: (1/a) * sum_k b (mean_k - center)(mean_k - center)^T.
CovEstimate ebs_estimate(const BatchMeans& bm);

/// Halves the batch count by averaging adjacent batch means (batch size
/// doubles); an odd trailing mean is dropped and the center recomputed.
/// Requires at least 4 batches since this exists to feed the lugsail estimate.
BatchMeans pair_merge(const BatchMeans& bm);

/// The doubled-batch estimator: ebs_estimate after one adjacent-pair merge.
CovEstimate ebs2b_estimate(const BatchMeans& bm);

/// Bias-corrected combination 2 * Sigma_{2b} - Sigma_b.
CovEstimate lugsail_estimate(const BatchMeans& bm);

/// General weighted batch-means estimator over unequal batches:
/// (1/K) * sum_k b_k (mean_k - theta_hat)(mean_k - theta_hat)^T with theta_hat
/// the mean over all covered iterates.
CovEstimate ibs_estimate(const std::vector<Vector>& means, const std::vector<std::int64_t>& sizes);

/// Convenience: batch a stored chain by an IBS partition and estimate.
CovEstimate ibs_estimate_chain(const std::vector<Vector>& chain, const IbsPartition& partition);

/// Clips eigenvalues below at eps = 1e-10 * trace/d so downstream regions get
/// an invertible PSD matrix; the original estimate should be kept for
/// reporting.
CovEstimate psd_project(const CovEstimate& est);

std::string cov_to_json(const CovEstimate& est);
CovEstimate cov_from_json(const std::string& text);

/// Upper triangle as "i,j,value" rows.
std::string cov_upper_triangle_csv(const CovEstimate& est);

}  // namespace sgdinfer
