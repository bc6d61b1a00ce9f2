#pragma once

namespace sgdinfer {

double normal_cdf(double x);
double normal_pdf(double x);

/// Quantile of N(0,1) at probability p in (0,1).
double normal_quantile(double p);

/// Quantile of chi-squared with df degrees of freedom at probability p in (0,1).
double chi2_quantile(int df, double p);

}  // namespace sgdinfer
