/* C API for the sgdinfer shared library.
 *
 * All functions return a status code (SI_OK on success); results come back
 * through out-parameters. Objects are opaque handles freed with the matching
 * si_*_free call. Strings returned through char** are heap-allocated and must
 * be released with si_string_free. Handles are not thread-safe; use one owner
 * per handle. si_last_error() describes the most recent failure on the
 * calling thread.
 */
#ifndef SGDINFER_H
#define SGDINFER_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

enum {
  SI_OK = 0,
  SI_EINVAL = 1,        /* invalid argument / configuration */
  SI_EDIM = 2,          /* dimension mismatch */
  SI_EINSUFFICIENT = 3, /* not enough data or batches */
  SI_ESINGULAR = 4,     /* singular / non-PD matrix */
  SI_EPARSE = 5,        /* malformed JSON or CSV */
  SI_EIO = 6,           /* file I/O failure */
  SI_EDATA = 7,         /* invalid data values */
  SI_EINTERNAL = 8
};

const char* si_strerror(int code);
const char* si_last_error(void); /* thread-local message for the last failure */
const char* si_version(void);
void si_string_free(char* s);

/* ---- Online equal-batch-size tracker ---------------------------------- */

typedef struct si_tracker si_tracker;

int si_tracker_new(int d, double c, double beta, si_tracker** out);
int si_tracker_new_fixed(int d, int64_t batch_size, si_tracker** out);
int si_tracker_push(si_tracker* tracker, const double* theta, int d);
/* thetas: n rows of d values, row-major */
int si_tracker_push_chain(si_tracker* tracker, const double* thetas, int64_t n, int d);
int si_tracker_stats(const si_tracker* tracker, int64_t* n_seen, int64_t* batch_size,
                     int64_t* complete_batches);
int si_tracker_to_json(const si_tracker* tracker, char** json_out);
int si_tracker_from_json(const char* json, si_tracker** out);
void si_tracker_free(si_tracker* tracker);

/* ---- Batch means ------------------------------------------------------- */

typedef struct si_batch_means si_batch_means;

int si_tracker_finalize(const si_tracker* tracker, si_batch_means** out);
int si_batch_means_info(const si_batch_means* bm, int* d, int64_t* count, int64_t* batch_size);
int si_batch_means_center(const si_batch_means* bm, double* out /* d */);
void si_batch_means_free(si_batch_means* bm);

/* ---- Covariance estimates ---------------------------------------------- */

typedef struct si_cov si_cov;

enum { SI_COV_EBS = 0, SI_COV_EBS2B = 1, SI_COV_LUGSAIL = 2, SI_COV_IBS = 3 };

int si_cov_ebs(const si_batch_means* bm, si_cov** out);
int si_cov_lugsail(const si_batch_means* bm, si_cov** out);
/* chain: n rows of d values, row-major; batched by the IBS partition for the
 * given alpha/scale (at least min_batches batches, scale shrunk if needed). */
int si_cov_ibs(const double* chain, int64_t n, int d, double alpha, double scale,
               int64_t min_batches, si_cov** out);
int si_cov_psd_project(const si_cov* cov, si_cov** out);
int si_cov_info(const si_cov* cov, int* d, int* kind, int64_t* b_n, int64_t* a_n, int64_t* n,
                double* min_eigenvalue, int* indefinite);
int si_cov_matrix(const si_cov* cov, double* out /* d*d row-major */);
int si_cov_to_json(const si_cov* cov, char** json_out);
int si_cov_from_json(const char* json, si_cov** out);
/* Upper triangle as "i,j,value" CSV rows. */
int si_cov_to_csv(const si_cov* cov, char** csv_out);
void si_cov_free(si_cov* cov);

/* ---- Confidence regions ------------------------------------------------ */

/* P(|X_i| <= z sqrt(sigma_ii) for all i), X ~ N(0, sigma); randomized QMC with
 * its standard error. points_log2/shifts <= 0 pick the defaults (2^13, 8). */
int si_mvn_rect_prob(const double* sigma, int d, double z, double accuracy, int points_log2,
                     int shifts, uint64_t seed, double* prob, double* se);

/* Critical value z* with P(rectangle) ~= 1-p, by bisection between the
 * uncorrected and Bonferroni quantiles. */
int si_simultaneous_z(const double* sigma, int d, double p, double tol, int points_log2,
                      int shifts, uint64_t seed, double* z_star, double* achieved_prob,
                      double* qmc_se);

/* JSON report of the ellipsoid, uncorrected, Bonferroni and simultaneous
 * regions plus the volume ratio for (theta_hat, sigma, n). */
int si_regions_json(const double* theta_hat, const double* sigma, int d, int64_t n, double p,
                    double tol, uint64_t seed, char** json_out);

/* Delta-method interval for the fitted logistic probability at covariate x. */
int si_predict_interval(const double* x, const double* theta_hat, const double* sigma, int d,
                        int64_t n, double level, double* p_hat, double* se, double* lower,
                        double* upper);

/* ---- High-level runs (JSON config in, JSON/CSV text out) ---------------- */

/* Replication study. Writes <out_prefix>_metrics.csv and
 * <out_prefix>_manifest.json when out_prefix is non-NULL; always returns the
 * metrics CSV text. */
int si_run_simulate(const char* config_json, const char* out_prefix, char** metrics_csv_out);

/* Covariance estimate from an iterate CSV.
 * config: {"input": path, "kind": "EBS"|"LUGSAIL"|"IBS", "c":, "beta":,
 *          "batch_size": (forces a fixed b), "alpha":, "ibs_scale":}
 * Returns the estimate JSON with the chain mean embedded as "center". */
int si_run_estimate(const char* config_json, char** result_json_out);

/* Regions from a saved estimate: {"estimate": <estimate JSON object or path>,
 * "p":, "tol":, "seed":, "center": optional override, "n": optional override} */
int si_run_regions(const char* config_json, char** regions_json_out);

/* CSV classification pipeline (shuffle/split, warm start, ASGD, lugsail
 * standard errors): {"input": path, "response": col, "features": [cols],
 * "split":, "seed":, "eta0":, "alpha":, "c":, "beta":, "warmstart_n":,
 * "burn_in":, "level":, "cutoffs": [..], "out": csv path,
 * "intervals_out": optional per-row csv, "manifest_out": optional split manifest} */
int si_run_predict(const char* config_json, char** summary_json_out);

/* Mean-model bias oracle table: {"n": [..], "alpha":, "c":, "beta":, "c1":}
 * Returns CSV rows n,b,a,bias_ebs,bias_lugsail. */
int si_run_bias_oracle(const char* config_json, char** table_csv_out);

/* QQ table of pooled standardized batch-mean components for one synthetic run:
 * {"model":, "design":, "d":, "rho":, "eta0":, "alpha":, "beta":, "c":,
 *  "burn_in":, "n":, "seed":, "center_at_truth": bool, "out": csv path} */
int si_run_qq(const char* config_json, char** summary_json_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SGDINFER_H */
