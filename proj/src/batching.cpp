#include "sgdinfer/batching.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <utility>

namespace sgdinfer {

using nlohmann::json;

std::int64_t ebs_batch_size(std::int64_t n, double c, double beta) {
  require(n >= 1, Errc::invalid_argument, "ebs_batch_size: n must be positive");
  require(c > 0.0, Errc::invalid_argument, "ebs_batch_size: c must be positive");
  require(beta > 0.0 && beta <= 1.0, Errc::invalid_argument,
          "ebs_batch_size: beta must be in (0,1]");
  double target = c * std::pow(static_cast<double>(n), beta);
  require(target < 9.0e18, Errc::invalid_argument,
          "ebs_batch_size: c*n^beta exceeds the representable range");
  std::int64_t b = 1;
  while (static_cast<double>(b) < target) {
    require(b <= (std::int64_t{1} << 62), Errc::invalid_argument,
            "ebs_batch_size: batch size overflow");
    b <<= 1;
  }
  return b;
}

EbsTracker::EbsTracker(int d, double c, double beta) : d_(d), c_(c), beta_(beta) {
  require(d >= 1, Errc::invalid_argument, "tracker: dimension must be >= 1");
  require(c > 0.0, Errc::invalid_argument, "tracker: c must be positive");
  require(beta > 0.0 && beta < 1.0, Errc::invalid_argument, "tracker: beta must be in (0,1)");
  b_star_ = ebs_batch_size(1, c, beta);
  partial_sum_ = Vector::Zero(d);
}

EbsTracker EbsTracker::fixed(int d, std::int64_t batch_size) {
  require(batch_size >= 1, Errc::invalid_argument, "tracker: fixed batch size must be >= 1");
  EbsTracker t(d, 1.0, 0.5);
  t.fixed_ = true;
  t.b_star_ = batch_size;
  return t;
}

void EbsTracker::push(const Vector& theta) {
  require(theta.size() == d_, Errc::dimension_mismatch,
          "tracker: iterate length " + std::to_string(theta.size()) +
              " does not match dimension " + std::to_string(d_));
  ++n_seen_;
  partial_sum_ += theta;
  ++partial_count_;
  if (partial_count_ == b_star_) {
    batch_sums_.push_back(partial_sum_);
    partial_sum_.setZero();
    partial_count_ = 0;
  }
  if (!fixed_) {
    while (b_star_ < ebs_batch_size(n_seen_, c_, beta_)) double_batch_size();
  }
}

void EbsTracker::double_batch_size() {
  std::size_t complete = batch_sums_.size();
  std::size_t pairs = complete / 2;
  std::vector<Vector> merged;
  merged.reserve(pairs);
  for (std::size_t j = 0; j < pairs; ++j) merged.push_back(batch_sums_[2 * j] + batch_sums_[2 * j + 1]);
  if (complete % 2 == 1) {
    // The unpaired trailing sum covers the first b_star iterates of what is
    // now an incomplete batch at size 2*b_star.
    partial_sum_ += batch_sums_.back();
    partial_count_ += b_star_;
  }
  batch_sums_ = std::move(merged);
  b_star_ *= 2;
}

BatchMeans EbsTracker::finalize() const {
  require(batch_sums_.size() >= 2, Errc::insufficient_data,
          "tracker: insufficient batches (" + std::to_string(batch_sums_.size()) +
              " complete, need at least 2)");
  BatchMeans bm;
  bm.batch_size = b_star_;
  bm.means.reserve(batch_sums_.size());
  Vector center = Vector::Zero(d_);
  for (const Vector& s : batch_sums_) {
    bm.means.push_back(s / static_cast<double>(b_star_));
    center += bm.means.back();
  }
  bm.center = center / static_cast<double>(bm.means.size());
  return bm;
}

std::string EbsTracker::to_json() const {
  json j;
  j["format"] = "sgdinfer.tracker";
  j["version"] = 1;
  j["d"] = d_;
  j["c"] = c_;
  j["beta"] = beta_;
  j["fixed"] = fixed_;
  j["batch_size"] = b_star_;
  j["n_seen"] = n_seen_;
  j["partial_count"] = partial_count_;
  j["partial_sum"] = std::vector<double>(partial_sum_.data(), partial_sum_.data() + d_);
  json sums = json::array();
  for (const Vector& s : batch_sums_) {
    sums.push_back(std::vector<double>(s.data(), s.data() + d_));
  }
  j["batch_sums"] = std::move(sums);
  return j.dump();
}

EbsTracker EbsTracker::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(Errc::parse, std::string("tracker snapshot: ") + e.what());
  }
  try {
    require(j.at("format") == "sgdinfer.tracker", Errc::parse, "tracker snapshot: wrong format tag");
    require(j.at("version") == 1, Errc::parse, "tracker snapshot: unsupported version");
    int d = j.at("d").get<int>();
    EbsTracker t(d, j.at("c").get<double>(), j.at("beta").get<double>());
    t.fixed_ = j.at("fixed").get<bool>();
    t.b_star_ = j.at("batch_size").get<std::int64_t>();
    t.n_seen_ = j.at("n_seen").get<std::int64_t>();
    t.partial_count_ = j.at("partial_count").get<std::int64_t>();
    auto partial = j.at("partial_sum").get<std::vector<double>>();
    require(static_cast<int>(partial.size()) == d, Errc::parse, "tracker snapshot: bad partial_sum");
    t.partial_sum_ = Eigen::Map<const Vector>(partial.data(), d);
    t.batch_sums_.clear();
    for (const auto& row : j.at("batch_sums")) {
      auto v = row.get<std::vector<double>>();
      require(static_cast<int>(v.size()) == d, Errc::parse, "tracker snapshot: bad batch sum");
      t.batch_sums_.push_back(Eigen::Map<const Vector>(v.data(), d));
    }
    return t;
  } catch (const json::exception& e) {
    fail(Errc::parse, std::string("tracker snapshot: ") + e.what());
  }
}

std::vector<std::int64_t> IbsPartition::sizes() const {
  std::vector<std::int64_t> out;
  out.reserve(boundaries.size());
  std::int64_t prev = 0;
  for (std::int64_t tau : boundaries) {
    out.push_back(tau - prev);
    prev = tau;
  }
  return out;
}

namespace {

std::vector<std::int64_t> ibs_boundaries_at_scale(std::int64_t n, double exponent, double scale) {
  std::vector<std::int64_t> taus;
  std::int64_t prev = 0;
  for (std::int64_t k = 1;; ++k) {
    double raw = scale * std::pow(static_cast<double>(k), exponent);
    std::int64_t tau = raw >= static_cast<double>(n) ? n : static_cast<std::int64_t>(std::floor(raw));
    if (tau > n) tau = n;
    if (tau > prev) {
      taus.push_back(tau);
      prev = tau;
    }
    if (tau >= n) break;
  }
  return taus;
}

}  // namespace

IbsPartition ibs_boundaries(std::int64_t n, double alpha, double scale, std::int64_t min_batches) {
  require(n >= 1, Errc::invalid_argument, "ibs_boundaries: n must be positive");
  require(alpha > 0.5 && alpha < 1.0, Errc::invalid_argument,
          "ibs_boundaries: alpha must lie in (0.5, 1)");
  require(scale > 0.0, Errc::invalid_argument, "ibs_boundaries: scale must be positive");
  IbsPartition part;
  part.exponent = (1.0 + alpha) / (1.0 - alpha);
  part.scale = scale;
  std::int64_t need = std::max<std::int64_t>(min_batches, 2);
  part.boundaries = ibs_boundaries_at_scale(n, part.exponent, part.scale);
  // Too few batches risks a singular estimator; shrink the scale until the
  // partition is fine enough.
  while (part.count() < need && part.scale > 1e-12) {
    part.scale /= 2.0;
    part.scale_adjusted = true;
    part.boundaries = ibs_boundaries_at_scale(n, part.exponent, part.scale);
  }
  if (part.count() < need) {
    fail(Errc::insufficient_data, "ibs_boundaries: cannot form " + std::to_string(need) +
                                      " batches from n=" + std::to_string(n) + " iterates");
  }
  return part;
}

IbsAccumulator::IbsAccumulator(IbsPartition partition, int d)
    : partition_(std::move(partition)), d_(d) {
  require(d >= 1, Errc::invalid_argument, "ibs accumulator: dimension must be >= 1");
  sums_.assign(partition_.boundaries.size(), Vector::Zero(d));
}

void IbsAccumulator::push(const Vector& theta) {
  require(theta.size() == d_, Errc::dimension_mismatch, "ibs accumulator: dimension mismatch");
  require(n_pushed_ < partition_.n(), Errc::invalid_argument,
          "ibs accumulator: partition already covered");
  ++n_pushed_;
  if (n_pushed_ > partition_.boundaries[current_]) ++current_;
  sums_[current_] += theta;
}

std::pair<std::vector<Vector>, std::vector<std::int64_t>> IbsAccumulator::batches() const {
  require(complete(), Errc::insufficient_data,
          "ibs accumulator: partition not fully covered (" + std::to_string(n_pushed_) + " of " +
              std::to_string(partition_.n()) + " iterates)");
  std::vector<std::int64_t> sizes = partition_.sizes();
  std::vector<Vector> means;
  means.reserve(sums_.size());
  for (std::size_t k = 0; k < sums_.size(); ++k) {
    means.push_back(sums_[k] / static_cast<double>(sizes[k]));
  }
  return {means, sizes};
}

double decorrelation_bound(std::int64_t j, std::int64_t k, const LearningRateSchedule& schedule,
                           double lambda_min) {
  require(j < k, Errc::invalid_argument, "decorrelation_bound: requires j < k");
  require(lambda_min > 0.0, Errc::invalid_argument, "decorrelation_bound: lambda_min must be positive");
  double acc = 0.0;
  for (std::int64_t i = j; i < k; ++i) acc += schedule.at(i + 1);
  return std::exp(-lambda_min * acc);
}

}  // namespace sgdinfer
