#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgdinfer/common.hpp"
#include "sgdinfer/rng.hpp"
#include "sgdinfer/sgd.hpp"

namespace sgdinfer {

enum class ModelKind { Mean, Linear, Lad, Logistic };
enum class DesignKind { Identity, Toeplitz, Equicorr };

const char* model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);
const char* design_kind_name(DesignKind kind);
DesignKind design_kind_from_name(const std::string& name);

/// Covariate distribution N(0, A) with A identity, Toeplitz rho^|i-j| or
/// equicorrelation. The Cholesky factor of A is cached for sampling.
struct CovariateDesign {
  DesignKind kind = DesignKind::Identity;
  int d = 0;
  double rho = 0.0;
  Matrix a;
  Matrix chol_lower;
};

CovariateDesign make_design(DesignKind kind, int d, double rho);

/// Draws x = L z with z standard normal.
void sample_covariate(const CovariateDesign& design, Rng& rng, Vector& out);

/// A^{-1}: the asymptotic covariance of ASGD for the linear model with unit
/// Gaussian errors and for LAD with DE(0,1) errors.
Matrix true_sigma(const CovariateDesign& design);

/// Equidistant interior grid points (1/(d+1), ..., d/(d+1)).
Vector default_beta_star(int d);

// Loss gradients. Each matches central finite differences of its loss.

class LinearGradient final : public GradientOracle {
 public:
  explicit LinearGradient(int d) : d_(d) {}
  int dimension() const override { return d_; }
  void gradient(const Vector& theta, const Datum& datum, Vector& grad) const override;

 private:
  int d_;
};

class LadGradient final : public GradientOracle {
 public:
  explicit LadGradient(int d) : d_(d) {}
  int dimension() const override { return d_; }
  void gradient(const Vector& theta, const Datum& datum, Vector& grad) const override;

 private:
  int d_;
};

class LogisticGradient final : public GradientOracle {
 public:
  explicit LogisticGradient(int d) : d_(d) {}
  int dimension() const override { return d_; }
  void gradient(const Vector& theta, const Datum& datum, Vector& grad) const override;

 private:
  int d_;
};

/// Scalar location model: gradient theta - y (the d=1, x=1 linear special case).
class MeanGradient final : public GradientOracle {
 public:
  int dimension() const override { return 1; }
  void gradient(const Vector& theta, const Datum& datum, Vector& grad) const override;
};

std::unique_ptr<GradientOracle> make_oracle(ModelKind kind, int d);

/// Overflow-safe logistic function.
double logistic_sigmoid(double t);

struct StreamSpec {
  ModelKind model = ModelKind::Linear;
  CovariateDesign design;
  Vector beta_star;
  /// Added to x'beta before the Bernoulli draw for LOGISTIC streams; controls
  /// class imbalance and defaults to 0.
  double label_offset = 0.0;
};

/// Unbounded synthetic data source. LINEAR adds N(0,1) noise, LAD adds DE(0,1)
/// noise, LOGISTIC draws y ~ Bernoulli(sigmoid(label_offset + x'beta)), MEAN
/// emits y = theta* + N(0,1) with x = (1).
class SyntheticStream final : public DataSource {
 public:
  SyntheticStream(StreamSpec spec, std::uint64_t seed);
  bool next(Datum& out) override;
  const StreamSpec& spec() const { return spec_; }

 private:
  StreamSpec spec_;
  Rng rng_;
};

std::unique_ptr<SyntheticStream> gen_stream(ModelKind model, const CovariateDesign& design,
                                            const Vector& beta_star, std::uint64_t seed,
                                            double label_offset = 0.0);

/// Replays an in-memory dataset once.
class VectorSource final : public DataSource {
 public:
  explicit VectorSource(std::vector<Datum> data) : data_(std::move(data)) {}
  bool next(Datum& out) override {
    if (pos_ >= data_.size()) return false;
    out = data_[pos_++];
    return true;
  }
  const std::vector<Datum>& data() const { return data_; }
  void reset() { pos_ = 0; }

 private:
  std::vector<Datum> data_;
  std::size_t pos_ = 0;
};

struct CsvSplit {
  std::vector<Datum> train;
  std::vector<Datum> test;
  std::vector<std::int64_t> train_indices;  // row numbers (0-based among parsed rows)
  std::vector<std::int64_t> test_indices;
  std::int64_t skipped_rows = 0;
  std::vector<std::string> feature_names;
  std::string response_name;
};

/// Reads a headered CSV, shuffles rows with the seed, and splits them into
/// train/test. Malformed rows are counted and skipped. The response must be
/// binary 0/1; feature_columns empty means "all columns except the response".
CsvSplit csv_stream(const std::string& path, const std::string& response_column,
                    const std::vector<std::string>& feature_columns, double train_fraction,
                    std::uint64_t seed);

/// Damped-Newton logistic MLE used as the ASGD warm start.
Vector logistic_mle(std::span<const Datum> data, int max_iterations = 100,
                    double grad_tolerance = 1e-8);

}  // namespace sgdinfer
