#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgdinfer/common.hpp"
#include "sgdinfer/sgd.hpp"

namespace sgdinfer {

/// Smallest power of two >= c * n^beta (gamma ranges over {0,1,2,...}, so the
/// result can be 1 at small n).
std::int64_t ebs_batch_size(std::int64_t n, double c, double beta);

/// Completed equal-size batches of a chain: the per-batch mean vectors, the
/// common batch size, and their average (the centering vector for Eq-style
/// batch-means covariance estimates).
struct BatchMeans {
  std::vector<Vector> means;
  std::int64_t batch_size = 0;
  Vector center;

  std::int64_t count() const { return static_cast<std::int64_t>(means.size()); }
  int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }
};

/// Online equal-batch-size partition of an iterate stream with doubling,
/// power-of-two batch sizes. Stores batch SUMS (division deferred to
/// finalize) plus one in-progress partial sum, so memory is O(n^(1-beta))
/// vectors. When the target batch size doubles, adjacent sums are merged
/// pairwise from the front; an unpaired trailing sum becomes the prefix of the
/// new partial batch. The held partition is always identical to what offline
/// batching at the current batch size would produce.
class EbsTracker {
 public:
  EbsTracker(int d, double c, double beta);

  /// Tracker with the batch size pinned (no doubling); used for forced-b
  /// estimation and for reproducing hand examples.
  static EbsTracker fixed(int d, std::int64_t batch_size);

  void push(const Vector& theta);

  /// Means of the completed batches; the incomplete tail is discarded.
  /// Requires at least 2 complete batches.
  BatchMeans finalize() const;

  int dim() const { return d_; }
  double c() const { return c_; }
  double beta() const { return beta_; }
  std::int64_t n_seen() const { return n_seen_; }
  std::int64_t batch_size() const { return b_star_; }
  std::int64_t complete_batches() const { return static_cast<std::int64_t>(batch_sums_.size()); }
  std::int64_t partial_count() const { return partial_count_; }
  const std::vector<Vector>& batch_sums() const { return batch_sums_; }
  const Vector& partial_sum() const { return partial_sum_; }
  bool fixed_batch() const { return fixed_; }

  /// Version-tagged snapshot for checkpoint/resume.
  std::string to_json() const;
  static EbsTracker from_json(const std::string& text);

 private:
  void double_batch_size();

  int d_;
  double c_ = 0.0;
  double beta_ = 0.0;
  bool fixed_ = false;
  std::int64_t b_star_ = 1;
  std::int64_t n_seen_ = 0;
  std::int64_t partial_count_ = 0;
  Vector partial_sum_;
  std::vector<Vector> batch_sums_;
};

/// Increasing-batch-size partition with boundaries tau_k = floor(scale * k^e),
/// e = (1+alpha)/(1-alpha), clipped to n. The final batch always ends at n.
struct IbsPartition {
  std::vector<std::int64_t> boundaries;  // tau_1 < ... < tau_K = n (tau_0 = 0 implicit)
  double exponent = 0.0;
  double scale = 0.0;
  bool scale_adjusted = false;  // set when scale was shrunk to reach enough batches

  std::int64_t count() const { return static_cast<std::int64_t>(boundaries.size()); }
  std::int64_t n() const { return boundaries.empty() ? 0 : boundaries.back(); }
  std::vector<std::int64_t> sizes() const;
};

/// Builds the IBS partition, shrinking scale (and flagging the adjustment)
/// until there are at least max(min_batches, 2) batches. min_batches is
/// typically d+1 to keep the resulting estimator away from singularity.
IbsPartition ibs_boundaries(std::int64_t n, double alpha, double scale, std::int64_t min_batches = 2);

/// Accumulates per-batch sums for a fixed IBS partition while a chain runs.
class IbsAccumulator {
 public:
  IbsAccumulator(IbsPartition partition, int d);

  void push(const Vector& theta);
  bool complete() const { return n_pushed_ == partition_.n(); }
  const IbsPartition& partition() const { return partition_; }

  /// Batch means and sizes; requires the partition to be fully covered.
  std::pair<std::vector<Vector>, std::vector<std::int64_t>> batches() const;

 private:
  IbsPartition partition_;
  int d_;
  std::int64_t n_pushed_ = 0;
  std::size_t current_ = 0;
  std::vector<Vector> sums_;
};

/// Upper bound exp(-lambda_min * sum_{i=j}^{k-1} eta_{i+1}) on the correlation
/// strength between iterates j and k (j < k).
double decorrelation_bound(std::int64_t j, std::int64_t k, const LearningRateSchedule& schedule,
                           double lambda_min);

}  // namespace sgdinfer
