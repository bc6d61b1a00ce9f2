#include "sgdinfer/models.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <fstream>
#include <sstream>

namespace sgdinfer {

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Mean: return "mean";
    case ModelKind::Linear: return "linear";
    case ModelKind::Lad: return "lad";
    case ModelKind::Logistic: return "logistic";
  }
  return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "mean") return ModelKind::Mean;
  if (name == "linear") return ModelKind::Linear;
  if (name == "lad") return ModelKind::Lad;
  if (name == "logistic") return ModelKind::Logistic;
  fail(Errc::invalid_argument, "unknown model '" + name + "' (mean|linear|lad|logistic)");
}

const char* design_kind_name(DesignKind kind) {
  switch (kind) {
    case DesignKind::Identity: return "identity";
    case DesignKind::Toeplitz: return "toeplitz";
    case DesignKind::Equicorr: return "equicorr";
  }
  return "?";
}

DesignKind design_kind_from_name(const std::string& name) {
  if (name == "identity") return DesignKind::Identity;
  if (name == "toeplitz") return DesignKind::Toeplitz;
  if (name == "equicorr") return DesignKind::Equicorr;
  fail(Errc::invalid_argument, "unknown design '" + name + "' (identity|toeplitz|equicorr)");
}

CovariateDesign make_design(DesignKind kind, int d, double rho) {
  require(d >= 1, Errc::invalid_argument, "design: dimension must be >= 1");
  if (kind != DesignKind::Identity) {
    require(rho >= 0.0 && rho < 1.0, Errc::invalid_argument, "design: rho must lie in [0,1)");
  }
  CovariateDesign design;
  design.kind = kind;
  design.d = d;
  design.rho = kind == DesignKind::Identity ? 0.0 : rho;
  design.a = Matrix::Identity(d, d);
  switch (kind) {
    case DesignKind::Identity:
      break;
    case DesignKind::Toeplitz:
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) design.a(i, j) = std::pow(rho, std::abs(i - j));
      }
      break;
    case DesignKind::Equicorr:
      design.a.setConstant(rho);
      design.a.diagonal().setOnes();
      break;
  }
  Eigen::LLT<Matrix> llt(design.a);
  require(llt.info() == Eigen::Success, Errc::singular_matrix,
          "design: covariate covariance is not positive definite");
  design.chol_lower = llt.matrixL();
  return design;
}

void sample_covariate(const CovariateDesign& design, Rng& rng, Vector& out) {
  out.resize(design.d);
  for (int i = 0; i < design.d; ++i) out(i) = rng.normal();
  if (design.kind != DesignKind::Identity) {
    out = design.chol_lower.triangularView<Eigen::Lower>() * out;
  }
}

Matrix true_sigma(const CovariateDesign& design) {
  int d = design.d;
  switch (design.kind) {
    case DesignKind::Identity:
      return Matrix::Identity(d, d);
    case DesignKind::Equicorr: {
      // (1/(1-rho)) [I - rho/(1+(d-1)rho) J]
      double rho = design.rho;
      double off = rho / (1.0 + (d - 1) * rho);
      Matrix out = Matrix::Constant(d, d, -off);
      out.diagonal().array() += 1.0;
      return out / (1.0 - rho);
    }
    case DesignKind::Toeplitz: {
      Eigen::LLT<Matrix> llt(design.a);
      return llt.solve(Matrix::Identity(d, d));
    }
  }
  fail(Errc::invalid_argument, "true_sigma: unknown design");
}

Vector default_beta_star(int d) {
  Vector beta(d);
  for (int k = 1; k <= d; ++k) beta(k - 1) = static_cast<double>(k) / (d + 1);
  return beta;
}

void LinearGradient::gradient(const Vector& theta, const Datum& datum, Vector& grad) const {
  double residual = datum.y - datum.x.dot(theta);
  grad = -residual * datum.x;
}

void LadGradient::gradient(const Vector& theta, const Datum& datum, Vector& grad) const {
  double residual = datum.y - datum.x.dot(theta);
  // sign(0) := 0 — subgradient choice at the kink.
  double s = residual > 0.0 ? 1.0 : (residual < 0.0 ? -1.0 : 0.0);
  grad = -s * datum.x;
}

double logistic_sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  double e = std::exp(t);
  return e / (1.0 + e);
}

void LogisticGradient::gradient(const Vector& theta, const Datum& datum, Vector& grad) const {
  grad = (logistic_sigmoid(datum.x.dot(theta)) - datum.y) * datum.x;
}

void MeanGradient::gradient(const Vector& theta, const Datum& datum, Vector& grad) const {
  grad.resize(1);
  grad(0) = theta(0) - datum.y;
}

std::unique_ptr<GradientOracle> make_oracle(ModelKind kind, int d) {
  switch (kind) {
    case ModelKind::Mean:
      require(d == 1, Errc::invalid_argument, "mean model is one-dimensional");
      return std::make_unique<MeanGradient>();
    case ModelKind::Linear: return std::make_unique<LinearGradient>(d);
    case ModelKind::Lad: return std::make_unique<LadGradient>(d);
    case ModelKind::Logistic: return std::make_unique<LogisticGradient>(d);
  }
  fail(Errc::invalid_argument, "make_oracle: unknown model");
}

SyntheticStream::SyntheticStream(StreamSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), rng_(seed) {
  require(spec_.beta_star.size() == spec_.design.d, Errc::dimension_mismatch,
          "stream: beta_star length does not match design dimension");
  if (spec_.model == ModelKind::Mean) {
    require(spec_.design.d == 1, Errc::invalid_argument, "stream: mean model needs d = 1");
  }
}

bool SyntheticStream::next(Datum& out) {
  switch (spec_.model) {
    case ModelKind::Mean:
      out.x.resize(1);
      out.x(0) = 1.0;
      out.y = spec_.beta_star(0) + rng_.normal();
      return true;
    case ModelKind::Linear:
      sample_covariate(spec_.design, rng_, out.x);
      out.y = out.x.dot(spec_.beta_star) + rng_.normal();
      return true;
    case ModelKind::Lad:
      sample_covariate(spec_.design, rng_, out.x);
      out.y = out.x.dot(spec_.beta_star) + rng_.laplace();
      return true;
    case ModelKind::Logistic:
      sample_covariate(spec_.design, rng_, out.x);
      out.y = rng_.bernoulli(logistic_sigmoid(spec_.label_offset + out.x.dot(spec_.beta_star)))
                  ? 1.0
                  : 0.0;
      return true;
  }
  return false;
}

std::unique_ptr<SyntheticStream> gen_stream(ModelKind model, const CovariateDesign& design,
                                            const Vector& beta_star, std::uint64_t seed,
                                            double label_offset) {
  StreamSpec spec;
  spec.model = model;
  spec.design = design;
  spec.beta_star = beta_star;
  spec.label_offset = label_offset;
  return std::make_unique<SyntheticStream>(std::move(spec), seed);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim whitespace
    std::size_t b = field.find_first_not_of(" \t\r");
    std::size_t e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  try {
    std::size_t used = 0;
    out = std::stod(s, &used);
    return used == s.size();
  } catch (...) {
    return false;
  }
}

}  // namespace

CsvSplit csv_stream(const std::string& path, const std::string& response_column,
                    const std::vector<std::string>& feature_columns, double train_fraction,
                    std::uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0, Errc::invalid_argument,
          "csv_stream: train fraction must be in (0,1)");
  std::ifstream in(path);
  if (!in) fail(Errc::io, "csv_stream: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) fail(Errc::data, "csv_stream: '" + path + "' is empty");
  std::vector<std::string> header = split_csv_line(line);

  auto column_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    fail(Errc::data, "csv_stream: column '" + name + "' not found in header of '" + path + "'");
  };

  int response_idx = column_index(response_column);
  std::vector<int> feature_idx;
  CsvSplit split;
  split.response_name = response_column;
  if (feature_columns.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (static_cast<int>(i) != response_idx) {
        feature_idx.push_back(static_cast<int>(i));
        split.feature_names.push_back(header[i]);
      }
    }
  } else {
    for (const std::string& name : feature_columns) {
      feature_idx.push_back(column_index(name));
      split.feature_names.push_back(name);
    }
  }
  require(!feature_idx.empty(), Errc::data, "csv_stream: no feature columns selected");

  std::vector<Datum> rows;
  std::int64_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      ++split.skipped_rows;
      continue;
    }
    Datum datum;
    datum.x.resize(static_cast<int>(feature_idx.size()));
    bool ok = true;
    for (std::size_t j = 0; j < feature_idx.size(); ++j) {
      double v;
      if (!parse_double(fields[static_cast<std::size_t>(feature_idx[j])], v) || !std::isfinite(v)) {
        ok = false;
        break;
      }
      datum.x(static_cast<int>(j)) = v;
    }
    double y = 0.0;
    if (ok && parse_double(fields[static_cast<std::size_t>(response_idx)], y)) {
      if (y != 0.0 && y != 1.0) {
        fail(Errc::data, "csv_stream: non-binary response '" +
                             fields[static_cast<std::size_t>(response_idx)] + "' at line " +
                             std::to_string(line_no));
      }
      datum.y = y;
    } else {
      ok = false;
    }
    if (!ok) {
      ++split.skipped_rows;
      continue;
    }
    rows.push_back(std::move(datum));
  }
  require(rows.size() >= 2, Errc::data, "csv_stream: need at least 2 usable rows");

  // Seeded Fisher-Yates; std::shuffle is implementation-defined.
  std::vector<std::int64_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int64_t>(i);
  Rng rng(sub_seed(seed, 0x435356 /* "CSV" */));
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i + 1));
    std::swap(order[i], order[j]);
  }
  std::size_t n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(rows.size())));
  n_train = std::min(std::max<std::size_t>(n_train, 1), rows.size() - 1);
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::size_t src = static_cast<std::size_t>(order[i]);
    if (i < n_train) {
      split.train.push_back(rows[src]);
      split.train_indices.push_back(order[i]);
    } else {
      split.test.push_back(rows[src]);
      split.test_indices.push_back(order[i]);
    }
  }
  return split;
}

Vector logistic_mle(std::span<const Datum> data, int max_iterations, double grad_tolerance) {
  require(!data.empty(), Errc::insufficient_data, "logistic_mle: empty data");
  int d = static_cast<int>(data.front().x.size());
  bool saw0 = false, saw1 = false;
  for (const Datum& datum : data) {
    if (datum.y == 0.0) saw0 = true;
    if (datum.y == 1.0) saw1 = true;
  }
  require(saw0 && saw1, Errc::data, "logistic_mle: training data contains a single class");

  auto nll = [&](const Vector& theta) {
    double total = 0.0;
    for (const Datum& datum : data) {
      double s = datum.x.dot(theta);
      // -[y log p + (1-y) log(1-p)] = log(1+exp(s)) - y s, computed stably
      double lse = s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
      total += lse - datum.y * s;
    }
    return total;
  };

  Vector theta = Vector::Zero(d);
  double current = nll(theta);
  for (int it = 0; it < max_iterations; ++it) {
    Vector grad = Vector::Zero(d);
    Matrix hess = Matrix::Zero(d, d);
    for (const Datum& datum : data) {
      double p = logistic_sigmoid(datum.x.dot(theta));
      grad.noalias() += (p - datum.y) * datum.x;
      hess.noalias() += (p * (1.0 - p)) * (datum.x * datum.x.transpose());
    }
    if (grad.lpNorm<Eigen::Infinity>() < grad_tolerance * static_cast<double>(data.size())) break;
    hess.diagonal().array() += 1e-10;
    Vector step = hess.ldlt().solve(grad);
    double scale = 1.0;
    for (int half = 0; half < 30; ++half) {
      Vector candidate = theta - scale * step;
      double value = nll(candidate);
      if (value <= current) {
        theta = std::move(candidate);
        current = value;
        break;
      }
      scale /= 2.0;
    }
  }
  return theta;
}

}  // namespace sgdinfer
