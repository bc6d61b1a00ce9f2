#include "sgdinfer/covariance.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Eigenvalues>

#include <cstdio>

namespace sgdinfer {

using nlohmann::json;

const char* cov_kind_name(CovKind kind) {
  switch (kind) {
    case CovKind::Ebs: return "EBS";
    case CovKind::Ebs2b: return "EBS2B";
    case CovKind::Lugsail: return "LUGSAIL";
    case CovKind::Ibs: return "IBS";
  }
  return "?";
}

CovKind cov_kind_from_name(const std::string& name) {
  if (name == "EBS") return CovKind::Ebs;
  if (name == "EBS2B") return CovKind::Ebs2b;
  if (name == "LUGSAIL") return CovKind::Lugsail;
  if (name == "IBS") return CovKind::Ibs;
  fail(Errc::parse, "unknown covariance kind '" + name + "'");
}

namespace {

void finish(CovEstimate& est) {
  est.matrix = ((est.matrix + est.matrix.transpose()) / 2.0).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(est.matrix, Eigen::EigenvaluesOnly);
  est.min_eigenvalue = eig.eigenvalues().minCoeff();
  est.indefinite = est.min_eigenvalue < 0.0;
}

}  // namespace

CovEstimate ebs_estimate(const BatchMeans& bm) {
  require(bm.count() >= 2, Errc::insufficient_data,
          "ebs_estimate: need at least 2 batches, have " + std::to_string(bm.count()));
  int d = bm.dim();
  double a = static_cast<double>(bm.count());
  double b = static_cast<double>(bm.batch_size);
  CovEstimate est;
  est.matrix = Matrix::Zero(d, d);
  for (const Vector& m : bm.means) {
    Vector dev = m - bm.center;
    est.matrix.noalias() += dev * dev.transpose();
  }
  est.matrix *= b / a;
  est.kind = CovKind::Ebs;
  est.b_n = bm.batch_size;
  est.a_n = bm.count();
  est.n = bm.count() * bm.batch_size;
  finish(est);
  return est;
}

BatchMeans pair_merge(const BatchMeans& bm) {
  require(bm.count() >= 4, Errc::insufficient_data, "lugsail needs >= 4 batches");
  BatchMeans merged;
  merged.batch_size = 2 * bm.batch_size;
  std::int64_t pairs = bm.count() / 2;
  merged.means.reserve(pairs);
  Vector center = Vector::Zero(bm.dim());
  for (std::int64_t j = 0; j < pairs; ++j) {
    merged.means.push_back((bm.means[2 * j] + bm.means[2 * j + 1]) / 2.0);
    center += merged.means.back();
  }
  merged.center = center / static_cast<double>(pairs);
  return merged;
}

CovEstimate ebs2b_estimate(const BatchMeans& bm) {
  CovEstimate est = ebs_estimate(pair_merge(bm));
  est.kind = CovKind::Ebs2b;
  return est;
}

CovEstimate lugsail_estimate(const BatchMeans& bm) {
  CovEstimate doubled = ebs_estimate(pair_merge(bm));
  CovEstimate base = ebs_estimate(bm);
  CovEstimate est;
  est.matrix = 2.0 * doubled.matrix - base.matrix;
  est.kind = CovKind::Lugsail;
  est.b_n = bm.batch_size;
  est.a_n = bm.count();
  est.n = base.n;
  finish(est);
  return est;
}

CovEstimate ibs_estimate(const std::vector<Vector>& means, const std::vector<std::int64_t>& sizes) {
  require(means.size() == sizes.size(), Errc::dimension_mismatch,
          "ibs_estimate: means/sizes length mismatch");
  require(means.size() >= 2, Errc::insufficient_data,
          "ibs_estimate: need at least 2 batches, have " + std::to_string(means.size()));
  int d = static_cast<int>(means.front().size());
  std::int64_t total = 0;
  Vector theta_hat = Vector::Zero(d);
  for (std::size_t k = 0; k < means.size(); ++k) {
    require(sizes[k] >= 1, Errc::invalid_argument, "ibs_estimate: empty batch");
    theta_hat += static_cast<double>(sizes[k]) * means[k];
    total += sizes[k];
  }
  theta_hat /= static_cast<double>(total);
  CovEstimate est;
  est.matrix = Matrix::Zero(d, d);
  for (std::size_t k = 0; k < means.size(); ++k) {
    Vector dev = means[k] - theta_hat;
    est.matrix.noalias() += static_cast<double>(sizes[k]) * (dev * dev.transpose());
  }
  est.matrix /= static_cast<double>(means.size());
  est.kind = CovKind::Ibs;
  est.b_n = 0;
  est.a_n = static_cast<std::int64_t>(means.size());
  est.n = total;
  finish(est);
  return est;
}

CovEstimate ibs_estimate_chain(const std::vector<Vector>& chain, const IbsPartition& partition) {
  require(static_cast<std::int64_t>(chain.size()) >= partition.n(), Errc::insufficient_data,
          "ibs_estimate_chain: chain shorter than partition");
  IbsAccumulator acc(partition, static_cast<int>(chain.front().size()));
  for (std::int64_t i = 0; i < partition.n(); ++i) acc.push(chain[static_cast<std::size_t>(i)]);
  auto [means, sizes] = acc.batches();
  return ibs_estimate(means, sizes);
}

CovEstimate psd_project(const CovEstimate& est) {
  int d = est.dim();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(est.matrix);
  double floor = 1e-10 * std::max(est.matrix.trace(), 0.0) / static_cast<double>(d);
  if (floor <= 0.0) floor = 1e-12;
  if (eig.eigenvalues().minCoeff() >= floor) return est;
  Vector clipped = eig.eigenvalues().cwiseMax(floor);
  CovEstimate out = est;
  out.matrix = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
  out.matrix = ((out.matrix + out.matrix.transpose()) / 2.0).eval();
  out.min_eigenvalue = clipped.minCoeff();
  out.indefinite = false;
  return out;
}

std::string cov_to_json(const CovEstimate& est) {
  json j;
  j["format"] = "sgdinfer.cov";
  j["version"] = 1;
  j["kind"] = cov_kind_name(est.kind);
  j["d"] = est.dim();
  j["b_n"] = est.b_n;
  j["a_n"] = est.a_n;
  j["n"] = est.n;
  j["min_eigenvalue"] = est.min_eigenvalue;
  j["indefinite"] = est.indefinite;
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(est.dim()) * est.dim());
  for (int i = 0; i < est.dim(); ++i) {
    for (int k = 0; k < est.dim(); ++k) flat.push_back(est.matrix(i, k));
  }
  j["matrix"] = std::move(flat);  // row-major
  return j.dump();
}

CovEstimate cov_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(Errc::parse, std::string("covariance json: ") + e.what());
  }
  try {
    require(j.at("format") == "sgdinfer.cov", Errc::parse, "covariance json: wrong format tag");
    require(j.at("version") == 1, Errc::parse, "covariance json: unsupported version");
    CovEstimate est;
    int d = j.at("d").get<int>();
    auto flat = j.at("matrix").get<std::vector<double>>();
    require(static_cast<int>(flat.size()) == d * d, Errc::parse, "covariance json: bad matrix size");
    est.matrix = Matrix(d, d);
    for (int i = 0; i < d; ++i) {
      for (int k = 0; k < d; ++k) est.matrix(i, k) = flat[static_cast<std::size_t>(i) * d + k];
    }
    est.kind = cov_kind_from_name(j.at("kind").get<std::string>());
    est.b_n = j.at("b_n").get<std::int64_t>();
    est.a_n = j.at("a_n").get<std::int64_t>();
    est.n = j.at("n").get<std::int64_t>();
    est.min_eigenvalue = j.at("min_eigenvalue").get<double>();
    est.indefinite = j.at("indefinite").get<bool>();
    return est;
  } catch (const json::exception& e) {
    fail(Errc::parse, std::string("covariance json: ") + e.what());
  }
}

std::string cov_upper_triangle_csv(const CovEstimate& est) {
  std::string out = "i,j,value\n";
  char buf[64];
  for (int i = 0; i < est.dim(); ++i) {
    for (int k = i; k < est.dim(); ++k) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", i, k, est.matrix(i, k));
      out += buf;
    }
  }
  return out;
}

}  // namespace sgdinfer
