#include "sgdinfer/experiments.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <thread>

#include "sgdinfer/rng.hpp"
#include "sgdinfer/stats.hpp"

namespace sgdinfer {

using nlohmann::json;

double rel_frobenius(const Matrix& sigma_hat, const Matrix& sigma_true) {
  require(sigma_hat.rows() == sigma_true.rows() && sigma_hat.cols() == sigma_true.cols(),
          Errc::dimension_mismatch, "rel_frobenius: dimension mismatch");
  double denom = sigma_true.norm();
  require(denom > 0.0, Errc::invalid_argument, "rel_frobenius: true matrix has zero norm");
  return (sigma_hat - sigma_true).norm() / denom;
}

std::int64_t ExperimentConfig::resolved_n_max() const {
  if (n_max > 0) return n_max;
  require(!checkpoints.empty(), Errc::invalid_argument,
          "config: n_max or checkpoints must be given");
  return checkpoints.back();
}

Vector ExperimentConfig::resolved_beta_star() const {
  if (beta_star) return *beta_star;
  return default_beta_star(d);
}

void ExperimentConfig::validate() const {
  require(d >= 1, Errc::invalid_argument, "config: d must be >= 1");
  require(eta0 > 0.0, Errc::invalid_argument, "config: eta0 must be positive");
  require(alpha > 0.5 && alpha < 1.0, Errc::invalid_argument, "config: alpha must lie in (0.5,1)");
  double b = resolved_beta();
  require(b > alpha && b < 1.0, Errc::invalid_argument,
          "config: beta must lie in (alpha,1), got " + std::to_string(b));
  require(c > 0.0, Errc::invalid_argument, "config: c must be positive");
  require(burn_in >= 0, Errc::invalid_argument, "config: burn_in must be nonnegative");
  require(replications >= 1, Errc::invalid_argument, "config: replications must be >= 1");
  require(p > 0.0 && p < 1.0, Errc::invalid_argument, "config: p must lie in (0,1)");
  require(ibs_scale > 0.0, Errc::invalid_argument, "config: ibs_scale must be positive");
  require(qmc_points_log2 >= 4 && qmc_points_log2 <= 24, Errc::invalid_argument,
          "config: qmc_points_log2 must lie in [4,24]");
  require(qmc_shifts >= 2, Errc::invalid_argument, "config: qmc_shifts must be >= 2");
  std::int64_t nmax = resolved_n_max();
  require(nmax >= 1, Errc::invalid_argument, "config: n_max must be positive");
  std::int64_t prev = 0;
  for (std::int64_t ck : checkpoints) {
    require(ck > prev, Errc::invalid_argument, "config: checkpoints must be strictly increasing");
    require(ck <= nmax, Errc::invalid_argument, "config: checkpoints must not exceed n_max");
    prev = ck;
  }
  require(!estimators.empty(), Errc::invalid_argument, "config: estimators must not be empty");
  for (CovKind k : estimators) {
    require(k == CovKind::Ebs || k == CovKind::Lugsail || k == CovKind::Ibs,
            Errc::invalid_argument, "config: estimators must be a subset of {EBS, LUGSAIL, IBS}");
  }
  if (model == ModelKind::Mean) {
    require(d == 1, Errc::invalid_argument, "config: mean model needs d = 1");
  }
  if (beta_star) {
    require(beta_star->size() == d, Errc::dimension_mismatch,
            "config: beta_star length does not match d");
  }
  if (design != DesignKind::Identity) {
    require(rho >= 0.0 && rho < 1.0, Errc::invalid_argument, "config: rho must lie in [0,1)");
  }
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["model"] = model_kind_name(model);
  j["design"] = design_kind_name(design);
  j["d"] = d;
  j["rho"] = rho;
  j["eta0"] = eta0;
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["c"] = c;
  j["burn_in"] = burn_in;
  j["n_max"] = n_max;
  j["checkpoints"] = checkpoints;
  j["replications"] = replications;
  j["seed"] = seed;
  std::vector<std::string> est;
  for (CovKind k : estimators) est.push_back(cov_kind_name(k));
  j["estimators"] = est;
  j["p"] = p;
  j["region_metrics"] = region_metrics;
  j["region_tol"] = region_tol;
  j["qmc_points_log2"] = qmc_points_log2;
  j["qmc_shifts"] = qmc_shifts;
  j["qmc_accuracy"] = qmc_accuracy;
  j["ibs_scale"] = ibs_scale;
  if (beta_star) {
    j["beta_star"] = std::vector<double>(beta_star->data(), beta_star->data() + beta_star->size());
  }
  j["label_offset"] = label_offset;
  j["threads"] = threads;
  return j.dump();
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(Errc::parse, std::string("config: ") + e.what());
  }
  static const std::vector<std::string> known = {
      "model",       "design",        "d",          "rho",        "eta0",
      "alpha",       "beta",          "c",          "burn_in",    "n_max",
      "checkpoints", "replications",  "seed",       "estimators", "p",
      "region_metrics", "region_tol", "qmc_points_log2", "qmc_shifts", "qmc_accuracy",
      "ibs_scale",   "beta_star",     "label_offset", "threads"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    require(std::find(known.begin(), known.end(), it.key()) != known.end(), Errc::invalid_argument,
            "config: unknown key '" + it.key() + "'");
  }
  ExperimentConfig cfg;
  try {
    if (j.contains("model")) cfg.model = model_kind_from_name(j["model"].get<std::string>());
    if (j.contains("design")) cfg.design = design_kind_from_name(j["design"].get<std::string>());
    if (j.contains("d")) cfg.d = j["d"].get<int>();
    if (j.contains("rho")) cfg.rho = j["rho"].get<double>();
    if (j.contains("eta0")) cfg.eta0 = j["eta0"].get<double>();
    if (j.contains("alpha")) cfg.alpha = j["alpha"].get<double>();
    if (j.contains("beta")) cfg.beta = j["beta"].get<double>();
    if (j.contains("c")) cfg.c = j["c"].get<double>();
    if (j.contains("burn_in")) cfg.burn_in = j["burn_in"].get<std::int64_t>();
    if (j.contains("n_max")) cfg.n_max = j["n_max"].get<std::int64_t>();
    if (j.contains("checkpoints")) cfg.checkpoints = j["checkpoints"].get<std::vector<std::int64_t>>();
    if (j.contains("replications")) cfg.replications = j["replications"].get<int>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("estimators")) {
      cfg.estimators.clear();
      for (const auto& name : j["estimators"]) {
        cfg.estimators.push_back(cov_kind_from_name(name.get<std::string>()));
      }
    }
    if (j.contains("p")) cfg.p = j["p"].get<double>();
    if (j.contains("region_metrics")) cfg.region_metrics = j["region_metrics"].get<bool>();
    if (j.contains("region_tol")) cfg.region_tol = j["region_tol"].get<double>();
    if (j.contains("qmc_points_log2")) cfg.qmc_points_log2 = j["qmc_points_log2"].get<int>();
    if (j.contains("qmc_shifts")) cfg.qmc_shifts = j["qmc_shifts"].get<int>();
    if (j.contains("qmc_accuracy")) cfg.qmc_accuracy = j["qmc_accuracy"].get<double>();
    if (j.contains("ibs_scale")) cfg.ibs_scale = j["ibs_scale"].get<double>();
    if (j.contains("beta_star")) {
      auto v = j["beta_star"].get<std::vector<double>>();
      cfg.beta_star = Eigen::Map<const Vector>(v.data(), static_cast<int>(v.size()));
    }
    if (j.contains("label_offset")) cfg.label_offset = j["label_offset"].get<double>();
    if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
  } catch (const json::exception& e) {
    fail(Errc::parse, std::string("config: ") + e.what());
  }
  if (cfg.checkpoints.empty() && cfg.n_max > 0) cfg.checkpoints = {cfg.n_max};
  return cfg;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SGDINFER_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace {

// Per-(checkpoint, estimator, replication) outcome.
struct Cell {
  bool present = false;
  std::string absent_reason;
  double rel_f = std::numeric_limits<double>::quiet_NaN();
  int ell_cov = -1;   // -1 = not evaluated
  int rect_cov = -1;
  double volume = std::numeric_limits<double>::quiet_NaN();
  double min_eig = std::numeric_limits<double>::quiet_NaN();
  int indefinite = -1;
};

struct RepOutcome {
  // [checkpoint][estimator]; the last "estimator" slot is the oracle when present.
  std::vector<std::vector<Cell>> cells;
};

struct HarnessShared {
  ExperimentConfig cfg;
  double beta_resolved = 0.0;
  std::int64_t n_max = 0;
  CovariateDesign design;
  Vector beta_star;
  std::optional<Matrix> sigma_true;
  std::vector<IbsPartition> ibs_partitions;  // per checkpoint, when IBS requested
  bool want_ibs = false;
  bool oracle_row = false;
  double chi2 = 0.0;
};

Cell evaluate_estimate(const HarnessShared& sh, const CovEstimate& est, const Vector& theta_hat,
                       std::int64_t n_ck, std::uint64_t qmc_seed) {
  Cell cell;
  cell.present = true;
  cell.min_eig = est.min_eigenvalue;
  cell.indefinite = est.indefinite ? 1 : 0;
  if (sh.sigma_true) cell.rel_f = rel_frobenius(est.matrix, *sh.sigma_true);
  const CovEstimate usable = est.indefinite ? psd_project(est) : est;
  EllipsoidRegion ell = ellipsoid_region(theta_hat, usable.matrix, n_ck, sh.cfg.p);
  cell.ell_cov = ell.contains(sh.beta_star) ? 1 : 0;
  if (sh.cfg.region_metrics) {
    QmcOptions opt;
    opt.points_log2 = sh.cfg.qmc_points_log2;
    opt.shifts = sh.cfg.qmc_shifts;
    opt.accuracy = sh.cfg.qmc_accuracy;
    opt.seed = qmc_seed;
    RectRegion rect =
        simultaneous_region(theta_hat, usable.matrix, n_ck, sh.cfg.p, sh.cfg.region_tol, opt);
    cell.rect_cov = rect.contains(sh.beta_star) ? 1 : 0;
    cell.volume = volume_ratio(rect, ell);
  }
  return cell;
}

RepOutcome run_one_rep(const HarnessShared& sh, int rep) {
  const ExperimentConfig& cfg = sh.cfg;
  std::size_t n_kinds = cfg.estimators.size() + (sh.oracle_row ? 1 : 0);
  RepOutcome out;
  out.cells.assign(cfg.checkpoints.size(), std::vector<Cell>(n_kinds));

  auto stream = gen_stream(cfg.model, sh.design, sh.beta_star,
                           sub_seed(cfg.seed, static_cast<std::uint64_t>(rep), 1), cfg.label_offset);
  auto oracle = make_oracle(cfg.model, cfg.d);
  LearningRateSchedule schedule(cfg.eta0, cfg.alpha);
  EbsTracker tracker(cfg.d, cfg.c, sh.beta_resolved);
  std::vector<IbsAccumulator> ibs_accs;
  if (sh.want_ibs) {
    ibs_accs.reserve(sh.ibs_partitions.size());
    for (const IbsPartition& part : sh.ibs_partitions) ibs_accs.emplace_back(part, cfg.d);
  }

  IterateState state = IterateState::start(Vector::Zero(cfg.d), cfg.burn_in);
  Datum datum;
  Vector grad(cfg.d);
  std::size_t next_ck = 0;
  std::int64_t total = cfg.burn_in + sh.n_max;
  for (std::int64_t i = 0; i < total; ++i) {
    stream->next(datum);
    oracle->gradient(state.theta, datum, grad);
    sgd_step(state, grad, schedule.at(state.index + 1));
    if (state.index <= cfg.burn_in) continue;
    std::int64_t t = state.averaged();
    tracker.push(state.theta);
    for (std::size_t k = 0; k < ibs_accs.size(); ++k) {
      if (t <= ibs_accs[k].partition().n()) ibs_accs[k].push(state.theta);
    }
    if (next_ck < cfg.checkpoints.size() && t == cfg.checkpoints[next_ck]) {
      const Vector& theta_hat = state.running_mean;
      std::optional<BatchMeans> bm;
      std::string bm_error;
      try {
        bm = tracker.finalize();
      } catch (const Error& e) {
        bm_error = e.what();
      }
      for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
        Cell& cell = out.cells[next_ck][e];
        std::uint64_t qmc_seed =
            sub_seed({cfg.seed, static_cast<std::uint64_t>(rep), next_ck, e, 2});
        try {
          CovEstimate est;
          switch (cfg.estimators[e]) {
            case CovKind::Ebs:
              if (!bm) fail(Errc::insufficient_data, bm_error);
              est = ebs_estimate(*bm);
              break;
            case CovKind::Lugsail:
              if (!bm) fail(Errc::insufficient_data, bm_error);
              est = lugsail_estimate(*bm);
              break;
            case CovKind::Ibs: {
              auto [means, sizes] = ibs_accs[next_ck].batches();
              est = ibs_estimate(means, sizes);
              break;
            }
            default:
              fail(Errc::invalid_argument, "unsupported estimator in harness");
          }
          cell = evaluate_estimate(sh, est, theta_hat, t, qmc_seed);
        } catch (const Error& err) {
          cell.present = false;
          cell.absent_reason = err.what();
        }
      }
      if (sh.oracle_row) {
        Cell& cell = out.cells[next_ck].back();
        try {
          EllipsoidRegion ell = ellipsoid_region(theta_hat, *sh.sigma_true, t, cfg.p);
          cell.present = true;
          cell.ell_cov = ell.contains(sh.beta_star) ? 1 : 0;
        } catch (const Error& err) {
          cell.present = false;
          cell.absent_reason = err.what();
        }
      }
      ++next_ck;
    }
  }
  return out;
}

StatCell aggregate_mean(const std::vector<double>& values) {
  StatCell s;
  s.reps = static_cast<std::int64_t>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  s.mean = mean;
  s.se = values.size() > 1
             ? std::sqrt(var / (static_cast<double>(values.size()) * (values.size() - 1.0)))
             : 0.0;
  return s;
}

StatCell aggregate_binary(const std::vector<int>& values) {
  StatCell s;
  s.reps = static_cast<std::int64_t>(values.size());
  double mean = 0.0;
  for (int v : values) mean += v;
  mean /= static_cast<double>(values.size());
  s.mean = mean;
  s.se = std::sqrt(mean * (1.0 - mean) / static_cast<double>(values.size()));
  return s;
}

}  // namespace

std::vector<MetricsRow> run_replications(const ExperimentConfig& config) {
  config.validate();
  HarnessShared sh;
  sh.cfg = config;
  if (sh.cfg.checkpoints.empty()) sh.cfg.checkpoints = {config.resolved_n_max()};
  sh.beta_resolved = config.resolved_beta();
  sh.n_max = config.resolved_n_max();
  sh.design = make_design(config.design, config.d, config.rho);
  sh.beta_star = config.resolved_beta_star();
  if (config.model == ModelKind::Linear || config.model == ModelKind::Lad) {
    sh.sigma_true = true_sigma(sh.design);
  } else if (config.model == ModelKind::Mean) {
    sh.sigma_true = Matrix::Identity(1, 1);
  }
  sh.oracle_row = sh.sigma_true.has_value();
  sh.want_ibs =
      std::find(sh.cfg.estimators.begin(), sh.cfg.estimators.end(), CovKind::Ibs) !=
      sh.cfg.estimators.end();
  if (sh.want_ibs) {
    for (std::int64_t ck : sh.cfg.checkpoints) {
      sh.ibs_partitions.push_back(
          ibs_boundaries(ck, config.alpha, config.ibs_scale, config.d + 1));
    }
  }

  int reps = config.replications;
  std::vector<RepOutcome> outcomes(static_cast<std::size_t>(reps));
  int n_threads = std::min(resolve_threads(config.threads), reps);
  if (n_threads <= 1) {
    for (int r = 0; r < reps; ++r) outcomes[static_cast<std::size_t>(r)] = run_one_rep(sh, r);
  } else {
    std::atomic<int> counter{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
      for (;;) {
        int r = counter.fetch_add(1);
        if (r >= reps) return;
        try {
          outcomes[static_cast<std::size_t>(r)] = run_one_rep(sh, r);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  std::vector<std::string> kind_names;
  for (CovKind k : sh.cfg.estimators) kind_names.push_back(cov_kind_name(k));
  if (sh.oracle_row) kind_names.push_back("ORACLE");

  std::vector<MetricsRow> rows;
  for (std::size_t ck = 0; ck < sh.cfg.checkpoints.size(); ++ck) {
    for (std::size_t e = 0; e < kind_names.size(); ++e) {
      MetricsRow row;
      row.n = sh.cfg.checkpoints[ck];
      row.estimator = kind_names[e];
      std::vector<double> rel_f, volume, min_eig;
      std::vector<int> ell, rect, indef;
      std::string reason;
      for (int r = 0; r < reps; ++r) {
        const Cell& cell = outcomes[static_cast<std::size_t>(r)].cells[ck][e];
        if (!cell.present) {
          if (reason.empty()) reason = cell.absent_reason;
          continue;
        }
        if (!std::isnan(cell.rel_f)) rel_f.push_back(cell.rel_f);
        if (cell.ell_cov >= 0) ell.push_back(cell.ell_cov);
        if (cell.rect_cov >= 0) rect.push_back(cell.rect_cov);
        if (!std::isnan(cell.volume)) volume.push_back(cell.volume);
        if (!std::isnan(cell.min_eig)) min_eig.push_back(cell.min_eig);
        if (cell.indefinite >= 0) indef.push_back(cell.indefinite);
      }
      if (!rel_f.empty()) row.rel_frobenius = aggregate_mean(rel_f);
      if (!ell.empty()) row.ellipsoid_coverage = aggregate_binary(ell);
      if (!rect.empty()) row.rect_coverage = aggregate_binary(rect);
      if (!volume.empty()) row.volume_ratio = aggregate_mean(volume);
      if (!min_eig.empty()) row.min_eigenvalue = aggregate_mean(min_eig);
      if (!indef.empty()) row.indefinite_fraction = aggregate_binary(indef);
      if (ell.empty() && !reason.empty()) row.note = "ABSENT: " + reason;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

namespace {

void append_metric(std::string& out, std::int64_t n, const std::string& estimator,
                   const char* metric, const std::optional<StatCell>& stat,
                   const std::string& note) {
  char buf[256];
  if (stat) {
    std::snprintf(buf, sizeof(buf), "%lld,%s,%s,%.12g,%.12g,%lld,%s\n",
                  static_cast<long long>(n), estimator.c_str(), metric, stat->mean, stat->se,
                  static_cast<long long>(stat->reps), note.c_str());
  } else {
    std::snprintf(buf, sizeof(buf), "%lld,%s,%s,,,0,%s\n", static_cast<long long>(n),
                  estimator.c_str(), metric, note.c_str());
  }
  out += buf;
}

}  // namespace

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "n,estimator,metric,mean,mc_se,reps,note\n";
  for (const MetricsRow& row : rows) {
    bool oracle = row.estimator == "ORACLE";
    if (!oracle) append_metric(out, row.n, row.estimator, "rel_frobenius", row.rel_frobenius, row.note);
    append_metric(out, row.n, row.estimator, "ellipsoid_coverage", row.ellipsoid_coverage, row.note);
    if (!oracle) {
      append_metric(out, row.n, row.estimator, "rect_coverage", row.rect_coverage, row.note);
      append_metric(out, row.n, row.estimator, "volume_ratio", row.volume_ratio, row.note);
      append_metric(out, row.n, row.estimator, "min_eigenvalue", row.min_eigenvalue, row.note);
      append_metric(out, row.n, row.estimator, "indefinite_fraction", row.indefinite_fraction, row.note);
    }
  }
  return out;
}

std::string run_manifest_json(const ExperimentConfig& config,
                              const std::vector<std::string>& outputs) {
  std::string canonical = config.to_json();
  // FNV-1a over the canonical config
  std::uint64_t hash = 1469598103934665603ULL;
  for (char ch : canonical) {
    hash ^= static_cast<unsigned char>(ch);
    hash *= 1099511628211ULL;
  }
  char hash_hex[32];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx", static_cast<unsigned long long>(hash));
  json j;
  j["format"] = "sgdinfer.manifest";
  j["version"] = 1;
  j["library_version"] = "0.1.0";
  j["config"] = json::parse(canonical);
  j["config_hash"] = hash_hex;
  j["outputs"] = outputs;
  return j.dump(2);
}

double mean_model_bias_sum(std::int64_t n, std::int64_t b, double alpha) {
  std::int64_t a = n / b;
  if (a < 2) return 0.0;
  // sum over batches k >= 2 and iterates q inside: r^(q - tau_{k-1}) (1 - r^((k-1)b)),
  // r = 1 - q^-alpha; the sums over p and j < k collapsed as geometric series.
  double total = 0.0;
  for (std::int64_t k = 2; k <= a; ++k) {
    std::int64_t t0 = (k - 1) * b;
    for (std::int64_t q = t0 + 1; q <= k * b; ++q) {
      double r = 1.0 - std::pow(static_cast<double>(q), -alpha);
      total += std::pow(r, static_cast<double>(q - t0)) *
               (1.0 - std::pow(r, static_cast<double>(t0)));
    }
  }
  return total;
}

BiasOracleResult mean_model_bias_oracle(std::int64_t n, double alpha, double c, double beta,
                                        double c1) {
  require(n >= 1, Errc::invalid_argument, "bias oracle: n must be positive");
  require(alpha > 0.5 && alpha < 1.0, Errc::invalid_argument,
          "bias oracle: alpha must lie in (0.5,1)");
  BiasOracleResult res;
  res.b = ebs_batch_size(n, c, beta);
  res.a = n / res.b;
  double scale = -2.0 * c1 / static_cast<double>(n);
  res.ebs = scale * mean_model_bias_sum(n, res.b, alpha);
  double bias_2b = scale * mean_model_bias_sum(n, 2 * res.b, alpha);
  res.lugsail = 2.0 * bias_2b - res.ebs;
  return res;
}

QqTable qq_data(const BatchMeans& bm, const std::optional<Vector>& theta_star) {
  require(bm.count() >= 2, Errc::insufficient_data, "qq_data: need at least 2 batches");
  const Vector& center = theta_star ? *theta_star : bm.center;
  require(center.size() == bm.dim(), Errc::dimension_mismatch,
          "qq_data: theta_star length does not match batch means");
  double scale = std::sqrt(static_cast<double>(bm.batch_size));
  QqTable table;
  table.empirical.reserve(static_cast<std::size_t>(bm.count()) * bm.dim());
  for (const Vector& m : bm.means) {
    for (int j = 0; j < bm.dim(); ++j) table.empirical.push_back(scale * (m(j) - center(j)));
  }
  std::size_t total = table.empirical.size();
  double ss = 0.0;
  for (double v : table.empirical) ss += v * v;
  // Centering at the batch-means average removes one degree of freedom.
  double denom = static_cast<double>(total) - (theta_star ? 0.0 : 1.0);
  double sd = std::sqrt(ss / denom);
  require(sd > 0.0, Errc::data, "qq_data: degenerate batch means (zero variance)");
  for (double& v : table.empirical) v /= sd;
  std::sort(table.empirical.begin(), table.empirical.end());
  table.theoretical.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    table.theoretical.push_back(
        normal_quantile((static_cast<double>(i) + 0.5) / static_cast<double>(total)));
  }
  return table;
}

std::string qq_csv(const QqTable& table) {
  std::string out = "empirical,theoretical\n";
  char buf[80];
  for (std::size_t i = 0; i < table.empirical.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.12g,%.12g\n", table.empirical[i], table.theoretical[i]);
    out += buf;
  }
  return out;
}

ClassificationResult classification_experiment(DataSource& train, std::span<const Datum> test,
                                               const ClassifyConfig& config,
                                               const std::vector<double>& cutoffs) {
  require(!test.empty(), Errc::insufficient_data, "classification: empty test set");
  for (const Datum& datum : test) {
    require(datum.y == 0.0 || datum.y == 1.0, Errc::data,
            "classification: test responses must be binary 0/1");
  }
  int d = static_cast<int>(test.front().x.size());
  double beta = config.beta > 0.0 ? config.beta : (1.0 + config.alpha) / 2.0;

  Vector theta0 = Vector::Zero(d);
  if (config.warmstart_n > 0) {
    std::vector<Datum> warm;
    warm.reserve(static_cast<std::size_t>(config.warmstart_n));
    Datum datum;
    for (std::int64_t i = 0; i < config.warmstart_n; ++i) {
      require(train.next(datum), Errc::insufficient_data,
              "classification: train source exhausted during warm start");
      require(datum.y == 0.0 || datum.y == 1.0, Errc::data,
              "classification: train responses must be binary 0/1");
      warm.push_back(datum);
    }
    theta0 = logistic_mle(warm);
  }

  LogisticGradient oracle(d);
  LearningRateSchedule schedule(config.eta0, config.alpha);
  EbsTracker tracker(d, config.c, beta);
  IterateState state = IterateState::start(theta0, config.burn_in);
  Datum datum;
  Vector grad(d);
  while (train.next(datum)) {
    oracle.gradient(state.theta, datum, grad);
    sgd_step(state, grad, schedule.at(state.index + 1));
    if (state.index > config.burn_in) tracker.push(state.theta);
  }
  std::int64_t n_avg = state.averaged();
  require(n_avg >= 1, Errc::insufficient_data,
          "classification: no post-burn-in iterates (train too short)");

  ClassificationResult result;
  result.theta_hat = state.running_mean;
  result.sigma = lugsail_estimate(tracker.finalize());
  result.n_averaged = n_avg;
  const CovEstimate usable = result.sigma.indefinite ? psd_project(result.sigma) : result.sigma;

  double z = normal_quantile(0.5 + config.level / 2.0);
  std::vector<std::int64_t> plain_errors(cutoffs.size(), 0), cons_errors(cutoffs.size(), 0);
  for (const Datum& obs : test) {
    PredictionInterval pi =
        predict_prob_interval(obs.x, result.theta_hat, usable.matrix, n_avg, config.level);
    for (std::size_t qi = 0; qi < cutoffs.size(); ++qi) {
      Classification cls = classify_conservative(pi.p_hat, pi.se, cutoffs[qi], z);
      if (static_cast<double>(cls.plain) != obs.y) ++plain_errors[qi];
      if (static_cast<double>(cls.conservative) != obs.y) ++cons_errors[qi];
    }
  }
  double n_test = static_cast<double>(test.size());
  for (std::size_t qi = 0; qi < cutoffs.size(); ++qi) {
    result.rows.push_back(ClassificationRow{cutoffs[qi],
                                            static_cast<double>(plain_errors[qi]) / n_test,
                                            static_cast<double>(cons_errors[qi]) / n_test});
  }
  return result;
}

}  // namespace sgdinfer
