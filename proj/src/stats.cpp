#include "sgdinfer/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include <cmath>

#include "sgdinfer/common.hpp"

namespace sgdinfer {

double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

double normal_pdf(double x) { return 0.3989422804014326779 * std::exp(-0.5 * x * x); }

double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, Errc::invalid_argument, "normal_quantile: p must be in (0,1)");
  static const boost::math::normal dist;
  return boost::math::quantile(dist, p);
}

double chi2_quantile(int df, double p) {
  require(df >= 1, Errc::invalid_argument, "chi2_quantile: df must be >= 1");
  require(p > 0.0 && p < 1.0, Errc::invalid_argument, "chi2_quantile: p must be in (0,1)");
  boost::math::chi_squared dist(df);
  return boost::math::quantile(dist, p);
}

}  // namespace sgdinfer
