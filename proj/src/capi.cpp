#include "sgdinfer/sgdinfer.h"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sgdinfer/batching.hpp"
#include "sgdinfer/common.hpp"
#include "sgdinfer/covariance.hpp"
#include "sgdinfer/experiments.hpp"
#include "sgdinfer/models.hpp"
#include "sgdinfer/regions.hpp"
#include "sgdinfer/rng.hpp"
#include "sgdinfer/stats.hpp"

using nlohmann::json;
using namespace sgdinfer;

namespace {

thread_local std::string g_last_error;

int map_errc(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return SI_EINVAL;
    case Errc::dimension_mismatch: return SI_EDIM;
    case Errc::insufficient_data: return SI_EINSUFFICIENT;
    case Errc::singular_matrix: return SI_ESINGULAR;
    case Errc::parse: return SI_EPARSE;
    case Errc::io: return SI_EIO;
    case Errc::data: return SI_EDATA;
  }
  return SI_EINTERNAL;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    return SI_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return map_errc(e.code());
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return SI_EPARSE;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SI_EINTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), Errc::io, "cannot open '" + path + "' for writing");
  out << content;
  require(static_cast<bool>(out), Errc::io, "failed writing '" + path + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Matrix matrix_from_rowmajor(const double* data, int d) {
  require(data != nullptr, Errc::invalid_argument, "null matrix pointer");
  require(d >= 1, Errc::invalid_argument, "dimension must be >= 1");
  Matrix m(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) m(i, j) = data[static_cast<std::size_t>(i) * d + j];
  }
  return m;
}

/// Iterate chain CSV: one row per iterate, d numeric columns, optional header.
std::vector<Vector> read_chain_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::io, "cannot open '" + path + "'");
  std::vector<Vector> chain;
  std::string line;
  std::int64_t line_no = 0;
  int width = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string field;
    bool numeric = true;
    while (std::getline(ss, field, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(field, &used));
        if (used != field.find_last_not_of(" \t\r") + 1) numeric = false;
      } catch (...) {
        numeric = false;
      }
      if (!numeric) break;
    }
    if (!numeric) {
      if (line_no == 1) continue;  // header row
      fail(Errc::data, "non-numeric cell at line " + std::to_string(line_no) + " of '" + path + "'");
    }
    if (width < 0) width = static_cast<int>(values.size());
    require(static_cast<int>(values.size()) == width, Errc::data,
            "inconsistent column count at line " + std::to_string(line_no));
    chain.push_back(Eigen::Map<const Vector>(values.data(), width));
  }
  require(!chain.empty(), Errc::data, "'" + path + "' contains no iterate rows");
  return chain;
}

json parse_config(const char* text) {
  require(text != nullptr, Errc::invalid_argument, "null config");
  try {
    json j = json::parse(text);
    require(j.is_object(), Errc::invalid_argument, "config must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    fail(Errc::parse, std::string("config: ") + e.what());
  }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* key : allowed) {
      if (it.key() == key) {
        ok = true;
        break;
      }
    }
    require(ok, Errc::invalid_argument, "config: unknown key '" + it.key() + "'");
  }
}

}  // namespace

struct si_tracker {
  EbsTracker impl;
};

struct si_batch_means {
  BatchMeans impl;
};

struct si_cov {
  CovEstimate impl;
};

extern "C" {

const char* si_strerror(int code) {
  switch (code) {
    case SI_OK: return "ok";
    case SI_EINVAL: return "invalid argument or configuration";
    case SI_EDIM: return "dimension mismatch";
    case SI_EINSUFFICIENT: return "insufficient data or batches";
    case SI_ESINGULAR: return "singular or non-positive-definite matrix";
    case SI_EPARSE: return "parse error";
    case SI_EIO: return "I/O error";
    case SI_EDATA: return "invalid data";
    case SI_EINTERNAL: return "internal error";
  }
  return "unknown error code";
}

const char* si_last_error(void) { return g_last_error.c_str(); }

const char* si_version(void) { return "0.1.0"; }

void si_string_free(char* s) { delete[] s; }

int si_tracker_new(int d, double c, double beta, si_tracker** out) {
  return guarded([&] {
    require(out != nullptr, Errc::invalid_argument, "null output pointer");
    *out = new si_tracker{EbsTracker(d, c, beta)};
  });
}

int si_tracker_new_fixed(int d, int64_t batch_size, si_tracker** out) {
  return guarded([&] {
    require(out != nullptr, Errc::invalid_argument, "null output pointer");
    *out = new si_tracker{EbsTracker::fixed(d, batch_size)};
  });
}

int si_tracker_push(si_tracker* tracker, const double* theta, int d) {
  return guarded([&] {
    require(tracker != nullptr && theta != nullptr, Errc::invalid_argument, "null argument");
    tracker->impl.push(Eigen::Map<const Vector>(theta, d));
  });
}

int si_tracker_push_chain(si_tracker* tracker, const double* thetas, int64_t n, int d) {
  return guarded([&] {
    require(tracker != nullptr && thetas != nullptr, Errc::invalid_argument, "null argument");
    for (int64_t i = 0; i < n; ++i) {
      tracker->impl.push(Eigen::Map<const Vector>(thetas + i * d, d));
    }
  });
}

int si_tracker_stats(const si_tracker* tracker, int64_t* n_seen, int64_t* batch_size,
                     int64_t* complete_batches) {
  return guarded([&] {
    require(tracker != nullptr, Errc::invalid_argument, "null tracker");
    if (n_seen) *n_seen = tracker->impl.n_seen();
    if (batch_size) *batch_size = tracker->impl.batch_size();
    if (complete_batches) *complete_batches = tracker->impl.complete_batches();
  });
}

int si_tracker_to_json(const si_tracker* tracker, char** json_out) {
  return guarded([&] {
    require(tracker != nullptr && json_out != nullptr, Errc::invalid_argument, "null argument");
    *json_out = dup_string(tracker->impl.to_json());
  });
}

int si_tracker_from_json(const char* text, si_tracker** out) {
  return guarded([&] {
    require(text != nullptr && out != nullptr, Errc::invalid_argument, "null argument");
    *out = new si_tracker{EbsTracker::from_json(text)};
  });
}

void si_tracker_free(si_tracker* tracker) { delete tracker; }

int si_tracker_finalize(const si_tracker* tracker, si_batch_means** out) {
  return guarded([&] {
    require(tracker != nullptr && out != nullptr, Errc::invalid_argument, "null argument");
    *out = new si_batch_means{tracker->impl.finalize()};
  });
}

int si_batch_means_info(const si_batch_means* bm, int* d, int64_t* count, int64_t* batch_size) {
  return guarded([&] {
    require(bm != nullptr, Errc::invalid_argument, "null batch means");
    if (d) *d = bm->impl.dim();
    if (count) *count = bm->impl.count();
    if (batch_size) *batch_size = bm->impl.batch_size;
  });
}

int si_batch_means_center(const si_batch_means* bm, double* out) {
  return guarded([&] {
    require(bm != nullptr && out != nullptr, Errc::invalid_argument, "null argument");
    Eigen::Map<Vector>(out, bm->impl.center.size()) = bm->impl.center;
  });
}

void si_batch_means_free(si_batch_means* bm) { delete bm; }

int si_cov_ebs(const si_batch_means* bm, si_cov** out) {
  return guarded([&] {
    require(bm != nullptr && out != nullptr, Errc::invalid_argument, "null argument");
    *out = new si_cov{ebs_estimate(bm->impl)};
  });
}

int si_cov_lugsail(const si_batch_means* bm, si_cov** out) {
  return guarded([&] {
    require(bm != nullptr && out != nullptr, Errc::invalid_argument, "null argument");
    *out = new si_cov{lugsail_estimate(bm->impl)};
  });
}

int si_cov_ibs(const double* chain, int64_t n, int d, double alpha, double scale,
               int64_t min_batches, si_cov** out) {
  return guarded([&] {
    require(chain != nullptr && out != nullptr, Errc::invalid_argument, "null argument");
    std::vector<Vector> iterates;
    iterates.reserve(static_cast<std::size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      iterates.push_back(Eigen::Map<const Vector>(chain + i * d, d));
    }
    IbsPartition part = ibs_boundaries(n, alpha, scale, min_batches);
    *out = new si_cov{ibs_estimate_chain(iterates, part)};
  });
}

int si_cov_psd_project(const si_cov* cov, si_cov** out) {
  return guarded([&] {
    require(cov != nullptr && out != nullptr, Errc::invalid_argument, "null argument");
    *out = new si_cov{psd_project(cov->impl)};
  });
}

int si_cov_info(const si_cov* cov, int* d, int* kind, int64_t* b_n, int64_t* a_n, int64_t* n,
                double* min_eigenvalue, int* indefinite) {
  return guarded([&] {
    require(cov != nullptr, Errc::invalid_argument, "null covariance");
    if (d) *d = cov->impl.dim();
    if (kind) *kind = static_cast<int>(cov->impl.kind);
    if (b_n) *b_n = cov->impl.b_n;
    if (a_n) *a_n = cov->impl.a_n;
    if (n) *n = cov->impl.n;
    if (min_eigenvalue) *min_eigenvalue = cov->impl.min_eigenvalue;
    if (indefinite) *indefinite = cov->impl.indefinite ? 1 : 0;
  });
}

int si_cov_matrix(const si_cov* cov, double* out) {
  return guarded([&] {
    require(cov != nullptr && out != nullptr, Errc::invalid_argument, "null argument");
    int d = cov->impl.dim();
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(i) * d + j] = cov->impl.matrix(i, j);
    }
  });
}

int si_cov_to_json(const si_cov* cov, char** json_out) {
  return guarded([&] {
    require(cov != nullptr && json_out != nullptr, Errc::invalid_argument, "null argument");
    *json_out = dup_string(cov_to_json(cov->impl));
  });
}

int si_cov_from_json(const char* text, si_cov** out) {
  return guarded([&] {
    require(text != nullptr && out != nullptr, Errc::invalid_argument, "null argument");
    *out = new si_cov{cov_from_json(text)};
  });
}

int si_cov_to_csv(const si_cov* cov, char** csv_out) {
  return guarded([&] {
    require(cov != nullptr && csv_out != nullptr, Errc::invalid_argument, "null argument");
    *csv_out = dup_string(cov_upper_triangle_csv(cov->impl));
  });
}

void si_cov_free(si_cov* cov) { delete cov; }

int si_mvn_rect_prob(const double* sigma, int d, double z, double accuracy, int points_log2,
                     int shifts, uint64_t seed, double* prob, double* se) {
  return guarded([&] {
    require(prob != nullptr, Errc::invalid_argument, "null output pointer");
    QmcOptions opt;
    if (points_log2 > 0) opt.points_log2 = points_log2;
    if (shifts > 0) opt.shifts = shifts;
    if (accuracy > 0.0) opt.accuracy = accuracy;
    opt.seed = seed;
    RectProb res = mvn_rect_prob(matrix_from_rowmajor(sigma, d), z, opt);
    *prob = res.prob;
    if (se) *se = res.se;
  });
}

int si_simultaneous_z(const double* sigma, int d, double p, double tol, int points_log2,
                      int shifts, uint64_t seed, double* z_star, double* achieved_prob,
                      double* qmc_se) {
  return guarded([&] {
    require(z_star != nullptr, Errc::invalid_argument, "null output pointer");
    QmcOptions opt;
    if (points_log2 > 0) opt.points_log2 = points_log2;
    if (shifts > 0) opt.shifts = shifts;
    opt.seed = seed;
    SimultaneousZ res =
        simultaneous_z(matrix_from_rowmajor(sigma, d), p, tol > 0.0 ? tol : 1e-3, opt);
    *z_star = res.z_star;
    if (achieved_prob) *achieved_prob = res.achieved_prob;
    if (qmc_se) *qmc_se = res.qmc_se;
  });
}

int si_regions_json(const double* theta_hat, const double* sigma, int d, int64_t n, double p,
                    double tol, uint64_t seed, char** json_out) {
  return guarded([&] {
    require(theta_hat != nullptr && json_out != nullptr, Errc::invalid_argument, "null argument");
    CovEstimate est;
    est.matrix = matrix_from_rowmajor(sigma, d);
    est.kind = CovKind::Ebs;
    est.n = n;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(est.matrix, Eigen::EigenvaluesOnly);
    est.min_eigenvalue = eig.eigenvalues().minCoeff();
    est.indefinite = est.min_eigenvalue < 0.0;
    QmcOptions opt;
    opt.seed = seed;
    *json_out = dup_string(regions_report_json(Eigen::Map<const Vector>(theta_hat, d), est, n, p,
                                               tol > 0.0 ? tol : 1e-3, opt));
  });
}

int si_predict_interval(const double* x, const double* theta_hat, const double* sigma, int d,
                        int64_t n, double level, double* p_hat, double* se, double* lower,
                        double* upper) {
  return guarded([&] {
    require(x != nullptr && theta_hat != nullptr && sigma != nullptr, Errc::invalid_argument,
            "null argument");
    PredictionInterval pi =
        predict_prob_interval(Eigen::Map<const Vector>(x, d), Eigen::Map<const Vector>(theta_hat, d),
                              matrix_from_rowmajor(sigma, d), n, level);
    if (p_hat) *p_hat = pi.p_hat;
    if (se) *se = pi.se;
    if (lower) *lower = pi.lower;
    if (upper) *upper = pi.upper;
  });
}

int si_run_simulate(const char* config_json, const char* out_prefix, char** metrics_csv_out) {
  return guarded([&] {
    require(config_json != nullptr, Errc::invalid_argument, "null config");
    ExperimentConfig cfg = ExperimentConfig::from_json(config_json);
    std::vector<MetricsRow> rows = run_replications(cfg);
    std::string csv = metrics_csv(rows);
    if (out_prefix != nullptr && out_prefix[0] != '\0') {
      std::string prefix(out_prefix);
      std::string csv_path = prefix + "_metrics.csv";
      std::string manifest_path = prefix + "_manifest.json";
      write_file(csv_path, csv);
      write_file(manifest_path, run_manifest_json(cfg, {csv_path, manifest_path}) + "\n");
    }
    if (metrics_csv_out) *metrics_csv_out = dup_string(csv);
  });
}

int si_run_estimate(const char* config_json, char** result_json_out) {
  return guarded([&] {
    json cfg = parse_config(config_json);
    check_keys(cfg, {"input", "kind", "c", "beta", "batch_size", "alpha", "ibs_scale",
                     "min_batches"});
    require(cfg.contains("input"), Errc::invalid_argument, "estimate config: 'input' is required");
    std::string input = cfg["input"].get<std::string>();
    std::string kind = cfg.value("kind", std::string("EBS"));
    double c = cfg.value("c", 0.1);
    double beta = cfg.value("beta", 0.755);
    double alpha = cfg.value("alpha", 0.51);
    double ibs_scale = cfg.value("ibs_scale", 64.0);

    std::vector<Vector> chain = read_chain_csv(input);
    int d = static_cast<int>(chain.front().size());
    std::int64_t n = static_cast<std::int64_t>(chain.size());
    Vector center = Vector::Zero(d);
    for (const Vector& v : chain) center += v;
    center /= static_cast<double>(n);

    CovEstimate est;
    if (kind == "IBS") {
      std::int64_t min_batches = cfg.value("min_batches", static_cast<std::int64_t>(d + 1));
      est = ibs_estimate_chain(chain, ibs_boundaries(n, alpha, ibs_scale, min_batches));
    } else {
      EbsTracker tracker = cfg.contains("batch_size")
                               ? EbsTracker::fixed(d, cfg["batch_size"].get<std::int64_t>())
                               : EbsTracker(d, c, beta);
      for (const Vector& v : chain) tracker.push(v);
      BatchMeans bm = tracker.finalize();
      if (kind == "EBS") {
        est = ebs_estimate(bm);
      } else if (kind == "EBS2B") {
        est = ebs2b_estimate(bm);
      } else if (kind == "LUGSAIL") {
        est = lugsail_estimate(bm);
      } else {
        fail(Errc::invalid_argument, "estimate config: kind must be EBS, EBS2B, LUGSAIL or IBS");
      }
    }
    json out = json::parse(cov_to_json(est));
    out["center"] = std::vector<double>(center.data(), center.data() + d);
    out["n_total"] = n;
    if (result_json_out) *result_json_out = dup_string(out.dump());
  });
}

int si_run_regions(const char* config_json, char** regions_json_out) {
  return guarded([&] {
    json cfg = parse_config(config_json);
    check_keys(cfg, {"estimate", "center", "n", "p", "tol", "seed", "qmc_points_log2",
                     "qmc_shifts"});
    require(cfg.contains("estimate"), Errc::invalid_argument,
            "regions config: 'estimate' is required");
    json est_json;
    if (cfg["estimate"].is_string()) {
      est_json = json::parse(read_file(cfg["estimate"].get<std::string>()));
    } else {
      est_json = cfg["estimate"];
    }
    CovEstimate est = cov_from_json(est_json.dump());
    int d = est.dim();
    Vector center = Vector::Zero(d);
    if (cfg.contains("center")) {
      auto v = cfg["center"].get<std::vector<double>>();
      require(static_cast<int>(v.size()) == d, Errc::dimension_mismatch,
              "regions config: center length does not match estimate dimension");
      center = Eigen::Map<const Vector>(v.data(), d);
    } else if (est_json.contains("center")) {
      auto v = est_json["center"].get<std::vector<double>>();
      center = Eigen::Map<const Vector>(v.data(), d);
    }
    std::int64_t n = cfg.value("n", est.n);
    require(n >= 1, Errc::invalid_argument, "regions config: n must be positive");
    double p = cfg.value("p", 0.05);
    double tol = cfg.value("tol", 1e-3);
    QmcOptions opt;
    opt.seed = cfg.value("seed", 0ULL);
    if (cfg.contains("qmc_points_log2")) opt.points_log2 = cfg["qmc_points_log2"].get<int>();
    if (cfg.contains("qmc_shifts")) opt.shifts = cfg["qmc_shifts"].get<int>();
    if (regions_json_out) {
      *regions_json_out = dup_string(regions_report_json(center, est, n, p, tol, opt));
    }
  });
}

int si_run_predict(const char* config_json, char** summary_json_out) {
  return guarded([&] {
    json cfg = parse_config(config_json);
    check_keys(cfg, {"input", "response", "features", "split", "seed", "eta0", "alpha", "c",
                     "beta", "warmstart_n", "burn_in", "level", "cutoffs", "out", "intervals_out",
                     "manifest_out"});
    require(cfg.contains("input"), Errc::invalid_argument, "predict config: 'input' is required");
    require(cfg.contains("response"), Errc::invalid_argument,
            "predict config: 'response' is required");
    std::vector<std::string> features;
    if (cfg.contains("features")) features = cfg["features"].get<std::vector<std::string>>();
    double split = cfg.value("split", 0.5);
    std::uint64_t seed = cfg.value("seed", 1ULL);

    CsvSplit data = csv_stream(cfg["input"].get<std::string>(),
                               cfg["response"].get<std::string>(), features, split, seed);

    ClassifyConfig cc;
    cc.eta0 = cfg.value("eta0", 0.05);
    cc.alpha = cfg.value("alpha", 0.51);
    cc.c = cfg.value("c", 0.1);
    cc.beta = cfg.value("beta", 0.0);
    cc.warmstart_n = cfg.value("warmstart_n", static_cast<std::int64_t>(10000));
    cc.burn_in = cfg.value("burn_in", static_cast<std::int64_t>(5000));
    cc.level = cfg.value("level", 0.95);
    std::vector<double> cutoffs;
    if (cfg.contains("cutoffs")) {
      cutoffs = cfg["cutoffs"].get<std::vector<double>>();
    } else {
      for (int i = 1; i <= 19; ++i) cutoffs.push_back(0.05 * i);
    }

    VectorSource train(data.train);
    ClassificationResult result = classification_experiment(train, data.test, cc, cutoffs);

    std::string table = "cutoff,plain_misclassification,conservative_misclassification\n";
    char buf[128];
    for (const ClassificationRow& row : result.rows) {
      std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g\n", row.cutoff, row.plain_rate,
                    row.conservative_rate);
      table += buf;
    }
    std::vector<std::string> outputs;
    if (cfg.contains("out")) {
      write_file(cfg["out"].get<std::string>(), table);
      outputs.push_back(cfg["out"].get<std::string>());
      // the split manifest is written alongside the table unless redirected
      if (!cfg.contains("manifest_out")) {
        cfg["manifest_out"] = cfg["out"].get<std::string>() + ".split.json";
      }
    }
    if (cfg.contains("intervals_out")) {
      const CovEstimate usable =
          result.sigma.indefinite ? psd_project(result.sigma) : result.sigma;
      std::string rows = "p_hat,se,lower,upper,y\n";
      for (const Datum& obs : data.test) {
        PredictionInterval pi = predict_prob_interval(obs.x, result.theta_hat, usable.matrix,
                                                      result.n_averaged, cc.level);
        std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g,%.12g,%g\n", pi.p_hat, pi.se, pi.lower,
                      pi.upper, obs.y);
        rows += buf;
      }
      write_file(cfg["intervals_out"].get<std::string>(), rows);
      outputs.push_back(cfg["intervals_out"].get<std::string>());
    }
    if (cfg.contains("manifest_out")) {
      json manifest;
      manifest["format"] = "sgdinfer.split";
      manifest["version"] = 1;
      manifest["seed"] = seed;
      manifest["train_indices"] = data.train_indices;
      manifest["test_indices"] = data.test_indices;
      manifest["skipped_rows"] = data.skipped_rows;
      write_file(cfg["manifest_out"].get<std::string>(), manifest.dump(2) + "\n");
      outputs.push_back(cfg["manifest_out"].get<std::string>());
    }

    json summary;
    summary["n_train"] = data.train.size();
    summary["n_test"] = data.test.size();
    summary["skipped_rows"] = data.skipped_rows;
    summary["n_averaged"] = result.n_averaged;
    summary["sigma_kind"] = cov_kind_name(result.sigma.kind);
    summary["sigma_indefinite"] = result.sigma.indefinite;
    summary["theta_hat"] = std::vector<double>(result.theta_hat.data(),
                                               result.theta_hat.data() + result.theta_hat.size());
    summary["table_csv"] = table;
    summary["outputs"] = outputs;
    if (summary_json_out) *summary_json_out = dup_string(summary.dump());
  });
}

int si_run_bias_oracle(const char* config_json, char** table_csv_out) {
  return guarded([&] {
    json cfg = parse_config(config_json);
    check_keys(cfg, {"n", "alpha", "c", "beta", "c1"});
    require(cfg.contains("n"), Errc::invalid_argument, "bias-oracle config: 'n' is required");
    std::vector<std::int64_t> ns = cfg["n"].is_array()
                                       ? cfg["n"].get<std::vector<std::int64_t>>()
                                       : std::vector<std::int64_t>{cfg["n"].get<std::int64_t>()};
    double alpha = cfg.value("alpha", 0.51);
    double beta = cfg.value("beta", (1.0 + alpha) / 2.0);
    double c = cfg.value("c", 0.1);
    double c1 = cfg.value("c1", 1.0);
    std::string table = "n,b,a,bias_ebs,bias_lugsail\n";
    char buf[160];
    for (std::int64_t n : ns) {
      BiasOracleResult res = mean_model_bias_oracle(n, alpha, c, beta, c1);
      std::snprintf(buf, sizeof(buf), "%lld,%lld,%lld,%.12g,%.12g\n", static_cast<long long>(n),
                    static_cast<long long>(res.b), static_cast<long long>(res.a), res.ebs,
                    res.lugsail);
      table += buf;
    }
    if (table_csv_out) *table_csv_out = dup_string(table);
  });
}

int si_run_qq(const char* config_json, char** summary_json_out) {
  return guarded([&] {
    json cfg = parse_config(config_json);
    check_keys(cfg, {"model", "design", "d", "rho", "eta0", "alpha", "beta", "c", "burn_in", "n",
                     "seed", "center_at_truth", "out"});
    require(cfg.contains("n"), Errc::invalid_argument, "qq config: 'n' is required");
    ModelKind model = model_kind_from_name(cfg.value("model", std::string("linear")));
    DesignKind design_kind = design_kind_from_name(cfg.value("design", std::string("identity")));
    int d = cfg.value("d", 5);
    double rho = cfg.value("rho", 0.5);
    double eta0 = cfg.value("eta0", 0.5);
    double alpha = cfg.value("alpha", 0.51);
    double beta = cfg.value("beta", (1.0 + alpha) / 2.0);
    double c = cfg.value("c", 0.1);
    std::int64_t burn_in = cfg.value("burn_in", static_cast<std::int64_t>(1000));
    std::int64_t n = cfg["n"].get<std::int64_t>();
    std::uint64_t seed = cfg.value("seed", 1ULL);
    if (model == ModelKind::Mean) d = 1;

    CovariateDesign design = make_design(design_kind, d, rho);
    Vector beta_star = default_beta_star(d);
    auto stream = gen_stream(model, design, beta_star, sub_seed(seed, 0, 1));
    auto oracle = make_oracle(model, d);
    LearningRateSchedule schedule(eta0, alpha);
    EbsTracker tracker(d, c, beta);
    run_asgd(*oracle, *stream, schedule, Vector::Zero(d), burn_in, n, &tracker);
    BatchMeans bm = tracker.finalize();
    std::optional<Vector> center;
    if (cfg.value("center_at_truth", false)) center = beta_star;
    QqTable table = qq_data(bm, center);
    std::string csv = qq_csv(table);
    json summary;
    summary["rows"] = table.empirical.size();
    summary["batch_size"] = bm.batch_size;
    summary["batches"] = bm.count();
    summary["csv"] = csv;
    if (cfg.contains("out")) {
      write_file(cfg["out"].get<std::string>(), csv);
      summary["outputs"] = std::vector<std::string>{cfg["out"].get<std::string>()};
    }
    if (summary_json_out) *summary_json_out = dup_string(summary.dump());
  });
}

}  // extern "C"
