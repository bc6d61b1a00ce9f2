// Command-line front end. All computation goes through the C API in
// sgdinfer/sgdinfer.h; this file only parses flags, assembles config JSON and
// formats output.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "sgdinfer/sgdinfer.h"

using nlohmann::json;

namespace {

int exit_code_for(int status) {
  switch (status) {
    case SI_OK: return 0;
    case SI_EINVAL:
    case SI_EPARSE: return 2;
    case SI_EDIM:
    case SI_EINSUFFICIENT:
    case SI_ESINGULAR:
    case SI_EIO:
    case SI_EDATA: return 3;
    default: return 1;
  }
}

int report_failure(int status) {
  std::cerr << "error: " << si_last_error() << " (" << si_strerror(status) << ")\n";
  return exit_code_for(status);
}

struct OwnedString {
  char* ptr = nullptr;
  ~OwnedString() { si_string_free(ptr); }
  std::string str() const { return ptr ? std::string(ptr) : std::string(); }
};

bool write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    std::cerr << "error: cannot open '" << path << "' for writing\n";
    return false;
  }
  out << content;
  return static_cast<bool>(out);
}

json load_base_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CLI::ValidationError("--config", e.what());
  }
  if (!j.is_object()) throw CLI::ValidationError("--config", "config file must hold a JSON object");
  return j;
}

std::vector<long long> parse_int_list(const std::string& text) {
  std::vector<long long> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoll(item));
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

std::vector<std::string> parse_string_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void print_aligned(const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return;
  std::vector<std::size_t> widths(rows.front().size(), 0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
  }
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::cout << row[i];
      if (i + 1 < row.size()) std::cout << std::string(widths[i] - row[i].size() + 2, ' ');
    }
    std::cout << "\n";
  }
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// ---- simulate -------------------------------------------------------------

struct SimulateArgs {
  std::string config_file, out = "simulate", model, design, estimators, checkpoints;
  long long d = -1, burn_in = -1, n = -1, reps = -1, seed = -1, threads = -1;
  double rho = -1, eta0 = -1, alpha = -1, beta = -1, c = -1, p = -1, tol = -1, ibs_scale = -1,
         label_offset = 0;
  long long qmc_points_log2 = -1, qmc_shifts = -1;
  bool no_regions = false;
  bool label_offset_set = false;
};

int run_simulate(const SimulateArgs& a) {
  json cfg = load_base_config(a.config_file);
  if (!a.model.empty()) cfg["model"] = a.model;
  if (!a.design.empty()) cfg["design"] = a.design;
  if (a.d >= 0) cfg["d"] = a.d;
  if (a.rho >= 0) cfg["rho"] = a.rho;
  if (a.eta0 >= 0) cfg["eta0"] = a.eta0;
  if (a.alpha >= 0) cfg["alpha"] = a.alpha;
  if (a.beta >= 0) cfg["beta"] = a.beta;
  if (a.c >= 0) cfg["c"] = a.c;
  if (a.burn_in >= 0) cfg["burn_in"] = a.burn_in;
  if (a.n >= 0) cfg["n_max"] = a.n;
  if (!a.checkpoints.empty()) cfg["checkpoints"] = parse_int_list(a.checkpoints);
  if (a.reps >= 0) cfg["replications"] = a.reps;
  if (a.seed >= 0) cfg["seed"] = a.seed;
  if (!a.estimators.empty()) {
    std::vector<std::string> names;
    for (std::string e : parse_string_list(a.estimators)) {
      for (char& ch : e) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
      names.push_back(e);
    }
    cfg["estimators"] = names;
  }
  if (a.p >= 0) cfg["p"] = a.p;
  if (a.no_regions) cfg["region_metrics"] = false;
  if (a.tol >= 0) cfg["region_tol"] = a.tol;
  if (a.qmc_points_log2 >= 0) cfg["qmc_points_log2"] = a.qmc_points_log2;
  if (a.qmc_shifts >= 0) cfg["qmc_shifts"] = a.qmc_shifts;
  if (a.ibs_scale >= 0) cfg["ibs_scale"] = a.ibs_scale;
  if (a.label_offset_set) cfg["label_offset"] = a.label_offset;
  if (a.threads >= 0) cfg["threads"] = a.threads;

  OwnedString csv;
  int status = si_run_simulate(cfg.dump().c_str(), a.out.c_str(), &csv.ptr);
  if (status != SI_OK) return report_failure(status);

  // Echo the long-form CSV as an aligned table.
  std::vector<std::vector<std::string>> rows;
  std::stringstream ss(csv.str());
  std::string line;
  while (std::getline(ss, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  print_aligned(rows);
  std::cout << "wrote " << a.out << "_metrics.csv and " << a.out << "_manifest.json\n";
  return 0;
}

// ---- estimate ---------------------------------------------------------------

int run_estimate(const std::string& config_file, const std::string& input,
                 const std::string& kind, double c, double beta, long long batch_size,
                 double alpha, double ibs_scale, const std::string& out,
                 const std::string& csv_out) {
  json cfg = load_base_config(config_file);
  if (!input.empty()) cfg["input"] = input;
  if (!kind.empty()) {
    std::string upper = kind;
    for (char& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    cfg["kind"] = upper;
  }
  if (c >= 0) cfg["c"] = c;
  if (beta >= 0) cfg["beta"] = beta;
  if (batch_size >= 0) cfg["batch_size"] = batch_size;
  if (alpha >= 0) cfg["alpha"] = alpha;
  if (ibs_scale >= 0) cfg["ibs_scale"] = ibs_scale;

  OwnedString result;
  int status = si_run_estimate(cfg.dump().c_str(), &result.ptr);
  if (status != SI_OK) return report_failure(status);
  std::cout << result.str() << "\n";
  if (!out.empty() && !write_text(out, result.str() + "\n")) return 3;
  if (!csv_out.empty()) {
    si_cov* cov = nullptr;
    status = si_cov_from_json(result.ptr, &cov);
    if (status != SI_OK) return report_failure(status);
    OwnedString tri;
    status = si_cov_to_csv(cov, &tri.ptr);
    si_cov_free(cov);
    if (status != SI_OK) return report_failure(status);
    if (!write_text(csv_out, tri.str())) return 3;
  }
  return 0;
}

// ---- regions ----------------------------------------------------------------

int run_regions(const std::string& config_file, const std::string& estimate,
                const std::string& center, long long n, double p, double tol, long long seed,
                const std::string& out) {
  json cfg = load_base_config(config_file);
  if (!estimate.empty()) cfg["estimate"] = estimate;
  if (!center.empty()) cfg["center"] = parse_double_list(center);
  if (n >= 0) cfg["n"] = n;
  if (p >= 0) cfg["p"] = p;
  if (tol >= 0) cfg["tol"] = tol;
  if (seed >= 0) cfg["seed"] = seed;

  OwnedString result;
  int status = si_run_regions(cfg.dump().c_str(), &result.ptr);
  if (status != SI_OK) return report_failure(status);

  json report = json::parse(result.str());
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"coord", "center", "uncorrected", "bonferroni", "simultaneous"});
  auto hw = [&](const char* key, std::size_t i) {
    return report[key]["halfwidths"][i].get<double>();
  };
  std::size_t d = report["center"].size();
  for (std::size_t i = 0; i < d; ++i) {
    double ctr = report["center"][i].get<double>();
    rows.push_back({std::to_string(i), fmt(ctr), "+-" + fmt(hw("uncorrected", i)),
                    "+-" + fmt(hw("bonferroni", i)), "+-" + fmt(hw("simultaneous", i))});
  }
  print_aligned(rows);
  std::cout << "z_uncorrected=" << fmt(report["uncorrected"]["z"].get<double>())
            << "  z_bonferroni=" << fmt(report["bonferroni"]["z"].get<double>())
            << "  z_star=" << fmt(report["simultaneous"]["z"].get<double>())
            << "  achieved=" << fmt(report["simultaneous"]["achieved_prob"].get<double>())
            << " (qmc se " << fmt(report["simultaneous"]["qmc_se"].get<double>()) << ")\n";
  std::cout << "chi2=" << fmt(report["ellipsoid"]["chi2"].get<double>())
            << "  volume_ratio=" << fmt(report["volume_ratio"].get<double>()) << "\n";
  if (!out.empty() && !write_text(out, result.str() + "\n")) return 3;
  return 0;
}

// ---- predict ----------------------------------------------------------------

struct PredictArgs {
  std::string config_file, input, response, features, cutoffs, out, intervals_out, manifest_out;
  double split = -1, eta0 = -1, alpha = -1, c = -1, beta = -1, level = -1;
  long long seed = -1, warmstart = -1, burn_in = -1;
};

int run_predict(const PredictArgs& a) {
  json cfg = load_base_config(a.config_file);
  if (!a.input.empty()) cfg["input"] = a.input;
  if (!a.response.empty()) cfg["response"] = a.response;
  if (!a.features.empty()) cfg["features"] = parse_string_list(a.features);
  if (a.split >= 0) cfg["split"] = a.split;
  if (a.seed >= 0) cfg["seed"] = a.seed;
  if (a.eta0 >= 0) cfg["eta0"] = a.eta0;
  if (a.alpha >= 0) cfg["alpha"] = a.alpha;
  if (a.c >= 0) cfg["c"] = a.c;
  if (a.beta >= 0) cfg["beta"] = a.beta;
  if (a.warmstart >= 0) cfg["warmstart_n"] = a.warmstart;
  if (a.burn_in >= 0) cfg["burn_in"] = a.burn_in;
  if (a.level >= 0) cfg["level"] = a.level;
  if (!a.cutoffs.empty()) cfg["cutoffs"] = parse_double_list(a.cutoffs);
  if (!a.out.empty()) cfg["out"] = a.out;
  if (!a.intervals_out.empty()) cfg["intervals_out"] = a.intervals_out;
  if (!a.manifest_out.empty()) cfg["manifest_out"] = a.manifest_out;

  OwnedString summary;
  int status = si_run_predict(cfg.dump().c_str(), &summary.ptr);
  if (status != SI_OK) return report_failure(status);
  json s = json::parse(summary.str());
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"cutoff", "plain", "conservative"});
  std::stringstream ss(s["table_csv"].get<std::string>());
  std::string line;
  std::getline(ss, line);  // header
  while (std::getline(ss, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  print_aligned(rows);
  std::cout << "n_train=" << s["n_train"] << " n_test=" << s["n_test"]
            << " skipped=" << s["skipped_rows"] << " n_averaged=" << s["n_averaged"] << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SGD inference: averaged SGD with online batch-means covariance estimation,\n"
               "confidence regions and replication studies"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(si_version()));

  // simulate
  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand("simulate", "replication study with metrics CSV output");
  simulate->add_option("--config", sim.config_file, "JSON config file (flags override)");
  simulate->add_option("--model", sim.model, "mean|linear|lad|logistic");
  simulate->add_option("--design", sim.design, "identity|toeplitz|equicorr");
  simulate->add_option("--d", sim.d, "parameter dimension");
  simulate->add_option("--rho", sim.rho, "design correlation");
  simulate->add_option("--eta0", sim.eta0, "learning rate scale");
  simulate->add_option("--alpha", sim.alpha, "learning rate exponent in (0.5,1)");
  simulate->add_option("--beta", sim.beta, "batch size exponent (default (1+alpha)/2)");
  simulate->add_option("--c", sim.c, "batch size scale (default 0.1)");
  simulate->add_option("--burn-in", sim.burn_in, "discarded initial iterates (default 1000)");
  simulate->add_option("--n", sim.n, "post-burn-in iterates per replication");
  simulate->add_option("--checkpoints", sim.checkpoints, "comma-separated evaluation points");
  simulate->add_option("--reps", sim.reps, "replications");
  simulate->add_option("--seed", sim.seed, "master seed");
  simulate->add_option("--estimators", sim.estimators, "comma list of ebs,lugsail,ibs");
  simulate->add_option("--p", sim.p, "region miscoverage level (default 0.05)");
  simulate->add_flag("--no-regions", sim.no_regions, "skip rectangle coverage / volume metrics");
  simulate->add_option("--tol", sim.tol, "bisection tolerance for z*");
  simulate->add_option("--qmc-points-log2", sim.qmc_points_log2, "QMC points per shift (log2)");
  simulate->add_option("--qmc-shifts", sim.qmc_shifts, "QMC randomizations");
  simulate->add_option("--ibs-scale", sim.ibs_scale, "IBS first-batch scale (default 64)");
  simulate->add_option("--label-offset", sim.label_offset, "logistic class-imbalance offset")
      ->each([&](const std::string&) { sim.label_offset_set = true; });
  simulate->add_option("--threads", sim.threads, "worker threads (default SGDINFER_THREADS)");
  simulate->add_option("--out", sim.out, "output prefix (default 'simulate')");

  // estimate
  std::string est_config, est_input, est_kind, est_out, est_csv_out;
  double est_c = -1, est_beta = -1, est_alpha = -1, est_ibs_scale = -1;
  long long est_b = -1, est_seed = -1;
  CLI::App* estimate = app.add_subcommand("estimate", "covariance estimate from an iterate CSV");
  estimate->add_option("--config", est_config, "JSON config file (flags override)");
  estimate->add_option("--seed", est_seed, "accepted for uniformity; estimation is deterministic");
  estimate->add_option("--input", est_input, "iterate chain CSV (one row per iterate)");
  estimate->add_option("--kind", est_kind, "ebs|ebs2b|lugsail|ibs (default ebs)");
  estimate->add_option("--c", est_c, "batch size scale");
  estimate->add_option("--beta", est_beta, "batch size exponent");
  estimate->add_option("--batch-size", est_b, "force a fixed batch size");
  estimate->add_option("--alpha", est_alpha, "IBS exponent parameter");
  estimate->add_option("--ibs-scale", est_ibs_scale, "IBS first-batch scale");
  estimate->add_option("--out", est_out, "write estimate JSON here");
  estimate->add_option("--csv-out", est_csv_out, "write the upper triangle CSV here");

  // regions
  std::string reg_config, reg_estimate, reg_center, reg_out;
  long long reg_n = -1, reg_seed = -1;
  double reg_p = -1, reg_tol = -1;
  CLI::App* regions = app.add_subcommand("regions", "confidence regions from a saved estimate");
  regions->add_option("--config", reg_config, "JSON config file (flags override)");
  regions->add_option("--estimate", reg_estimate, "estimate JSON file from 'estimate'");
  regions->add_option("--center", reg_center, "comma-separated center override");
  regions->add_option("--n", reg_n, "sample size override");
  regions->add_option("--p", reg_p, "miscoverage level (default 0.05)");
  regions->add_option("--tol", reg_tol, "bisection tolerance (default 1e-3)");
  regions->add_option("--seed", reg_seed, "QMC seed");
  regions->add_option("--out", reg_out, "write regions JSON here");

  // predict
  PredictArgs pred;
  CLI::App* predict =
      app.add_subcommand("predict", "CSV classification with confidence-adjusted thresholds");
  predict->add_option("--config", pred.config_file, "JSON config file (flags override)");
  predict->add_option("--input", pred.input, "CSV with header row");
  predict->add_option("--response", pred.response, "binary response column name");
  predict->add_option("--features", pred.features, "comma list (default: all other columns)");
  predict->add_option("--split", pred.split, "train fraction (default 0.5)");
  predict->add_option("--seed", pred.seed, "shuffle/split seed");
  predict->add_option("--eta0", pred.eta0, "learning rate scale (default 0.05)");
  predict->add_option("--alpha", pred.alpha, "learning rate exponent");
  predict->add_option("--c", pred.c, "batch size scale");
  predict->add_option("--beta", pred.beta, "batch size exponent");
  predict->add_option("--warmstart", pred.warmstart, "observations for the Newton warm start");
  predict->add_option("--burn-in", pred.burn_in, "SGD burn-in after the warm start");
  predict->add_option("--level", pred.level, "confidence level (default 0.95)");
  predict->add_option("--cutoffs", pred.cutoffs, "comma list of thresholds q");
  predict->add_option("--out", pred.out, "misclassification table CSV");
  predict->add_option("--intervals-out", pred.intervals_out, "per-row prediction interval CSV");
  predict->add_option("--manifest-out", pred.manifest_out, "split manifest JSON");

  // bias-oracle
  std::string bias_config, bias_n, bias_out;
  double bias_alpha = -1, bias_c = -1, bias_beta = -1, bias_c1 = -1;
  long long bias_seed = -1;
  CLI::App* bias = app.add_subcommand("bias-oracle", "mean-model batch-means bias approximation");
  bias->add_option("--config", bias_config, "JSON config file (flags override)");
  bias->add_option("--seed", bias_seed, "accepted for uniformity; the oracle is deterministic");
  bias->add_option("--n", bias_n, "comma-separated sample sizes");
  bias->add_option("--alpha", bias_alpha, "learning rate exponent (default 0.51)");
  bias->add_option("--c", bias_c, "batch size scale (default 0.1)");
  bias->add_option("--beta", bias_beta, "batch size exponent (default (1+alpha)/2)");
  bias->add_option("--c1", bias_c1, "bias constant C1 (default 1)");
  bias->add_option("--out", bias_out, "write the table CSV here");

  // qq
  std::string qq_config, qq_model, qq_design, qq_out;
  long long qq_d = -1, qq_burn = -1, qq_n = -1, qq_seed = -1;
  double qq_rho = -1, qq_eta0 = -1, qq_alpha = -1, qq_beta = -1, qq_c = -1;
  bool qq_truth = false;
  CLI::App* qq = app.add_subcommand("qq", "QQ table of standardized batch-mean components");
  qq->add_option("--config", qq_config, "JSON config file (flags override)");
  qq->add_option("--model", qq_model, "mean|linear|lad|logistic");
  qq->add_option("--design", qq_design, "identity|toeplitz|equicorr");
  qq->add_option("--d", qq_d, "parameter dimension");
  qq->add_option("--rho", qq_rho, "design correlation");
  qq->add_option("--eta0", qq_eta0, "learning rate scale");
  qq->add_option("--alpha", qq_alpha, "learning rate exponent");
  qq->add_option("--beta", qq_beta, "batch size exponent");
  qq->add_option("--c", qq_c, "batch size scale");
  qq->add_option("--burn-in", qq_burn, "burn-in iterates");
  qq->add_option("--n", qq_n, "post-burn-in iterates");
  qq->add_option("--seed", qq_seed, "stream seed");
  qq->add_flag("--center-at-truth", qq_truth, "center batch means at the true parameter");
  qq->add_option("--out", qq_out, "write the QQ CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (simulate->parsed()) return run_simulate(sim);
    if (estimate->parsed()) {
      return run_estimate(est_config, est_input, est_kind, est_c, est_beta, est_b, est_alpha,
                          est_ibs_scale, est_out, est_csv_out);
    }
    if (regions->parsed()) {
      return run_regions(reg_config, reg_estimate, reg_center, reg_n, reg_p, reg_tol, reg_seed,
                         reg_out);
    }
    if (predict->parsed()) return run_predict(pred);
    if (bias->parsed()) {
      json cfg = load_base_config(bias_config);
      if (!bias_n.empty()) cfg["n"] = parse_int_list(bias_n);
      if (bias_alpha >= 0) cfg["alpha"] = bias_alpha;
      if (bias_c >= 0) cfg["c"] = bias_c;
      if (bias_beta >= 0) cfg["beta"] = bias_beta;
      if (bias_c1 >= 0) cfg["c1"] = bias_c1;
      OwnedString table;
      int status = si_run_bias_oracle(cfg.dump().c_str(), &table.ptr);
      if (status != SI_OK) return report_failure(status);
      std::cout << table.str();
      if (!bias_out.empty() && !write_text(bias_out, table.str())) return 3;
      return 0;
    }
    if (qq->parsed()) {
      json cfg = load_base_config(qq_config);
      if (!qq_model.empty()) cfg["model"] = qq_model;
      if (!qq_design.empty()) cfg["design"] = qq_design;
      if (qq_d >= 0) cfg["d"] = qq_d;
      if (qq_rho >= 0) cfg["rho"] = qq_rho;
      if (qq_eta0 >= 0) cfg["eta0"] = qq_eta0;
      if (qq_alpha >= 0) cfg["alpha"] = qq_alpha;
      if (qq_beta >= 0) cfg["beta"] = qq_beta;
      if (qq_c >= 0) cfg["c"] = qq_c;
      if (qq_burn >= 0) cfg["burn_in"] = qq_burn;
      if (qq_n >= 0) cfg["n"] = qq_n;
      if (qq_seed >= 0) cfg["seed"] = qq_seed;
      if (qq_truth) cfg["center_at_truth"] = true;
      if (!qq_out.empty()) cfg["out"] = qq_out;
      OwnedString summary;
      int status = si_run_qq(cfg.dump().c_str(), &summary.ptr);
      if (status != SI_OK) return report_failure(status);
      json s = json::parse(summary.str());
      std::cout << "rows=" << s["rows"] << " batch_size=" << s["batch_size"]
                << " batches=" << s["batches"] << "\n";
      if (!qq_out.empty()) std::cout << "wrote " << qq_out << "\n";
      return 0;
    }
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
