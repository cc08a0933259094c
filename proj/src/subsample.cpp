#include "bpm/subsample.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>

#include "bpm/io.hpp"
#include "bpm/normal.hpp"

namespace bpm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double sq_dist(const Point2& a, const Point2& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1];
  return dx * dx + dy * dy;
}

std::size_t nearest(const Point2& p, const std::vector<Point2>& centroids) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = sq_dist(p, centroids[c]);
    if (d < bd) {
      bd = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

Ar1Model parse_ar1_model(const std::string& text) {
  if (text == "M1" || text == "m1") return Ar1Model::m1;
  if (text == "M2" || text == "m2") return Ar1Model::m2;
  throw ConfigError("unknown AR(1) model '" + text + "' (M1 or M2)");
}

std::string to_string(Ar1Model model) { return model == Ar1Model::m1 ? "M1" : "M2"; }

std::vector<double> simulate_ar1_student_t(Ar1Model model, double theta0, double theta1,
                                           double nu, std::size_t length, std::uint64_t seed,
                                           std::size_t warmup) {
  if (!(std::abs(theta1) < 1.0)) throw ConfigError("AR(1) coefficient must satisfy |c| < 1");
  if (!(nu > 0.0)) throw ConfigError("degrees of freedom must be positive");
  if (length < 2) throw ConfigError("series needs at least 2 points");
  Rng rng(StreamKey{seed, 0, 0, 0, kSimulationTag});
  std::student_t_distribution<double> t(nu);
  auto step = [&](double prev) {
    const double e = t(rng);
    return model == Ar1Model::m1 ? theta0 + theta1 * prev + e
                                 : theta0 + theta1 * (prev - theta0) + e;
  };
  // Start at the stationary mean and run in.
  double y = model == Ar1Model::m1 ? theta0 / (1.0 - theta1) : theta0;
  for (std::size_t i = 0; i < warmup; ++i) y = step(y);
  std::vector<double> out(length);
  out[0] = y;
  for (std::size_t i = 1; i < length; ++i) out[i] = step(out[i - 1]);
  return out;
}

void write_series_csv(std::span<const double> y, std::ostream& out) {
  out << "t,y\n";
  for (std::size_t i = 0; i < y.size(); ++i) out << i << ',' << format_double(y[i]) << '\n';
}

std::vector<double> read_series_csv(std::istream& in) {
  CsvReader reader(in);
  const auto header = reader.header();
  if (header.size() != 2 || header[0] != "t" || header[1] != "y") {
    throw ParseError(1, "series CSV header must be t,y");
  }
  std::vector<double> y;
  std::vector<std::string> row;
  while (reader.next(row)) y.push_back(reader.number(row, 1));
  if (y.size() < 2) throw ParseError(reader.line(), "series needs at least 2 rows");
  return y;
}

std::vector<Point2> lagged_pairs(std::span<const double> series) {
  std::vector<Point2> out;
  for (std::size_t t = 1; t < series.size(); ++t) out.push_back({series[t - 1], series[t]});
  return out;
}

void refresh_cluster_statistics(std::span<const Point2> points, ClusterSet& set) {
  const std::size_t C = set.centroids.size();
  set.count.assign(C, 0);
  set.sum_delta.assign(C, Point2{0.0, 0.0});
  set.sum_outer.assign(C, {0.0, 0.0, 0.0});
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::size_t c = set.assignment[i];
    const double dx = points[i][0] - set.centroids[c][0];
    const double dy = points[i][1] - set.centroids[c][1];
    ++set.count[c];
    set.sum_delta[c][0] += dx;
    set.sum_delta[c][1] += dy;
    set.sum_outer[c][0] += dx * dx;
    set.sum_outer[c][1] += dx * dy;
    set.sum_outer[c][2] += dy * dy;
  }
}

ClusterSet build_clusters(std::span<const Point2> points, std::size_t clusters,
                          std::uint64_t seed, std::size_t max_iterations) {
  const std::size_t n = points.size();
  if (clusters == 0 || clusters > n) {
    throw ConfigError("need 1 <= clusters <= number of points (" + std::to_string(n) + ")");
  }
  Rng rng(StreamKey{seed, 0, 0, 0, kSimulationTag});
  ClusterSet set;

  // k-means++ seeding.
  std::vector<bool> chosen(n, false);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = rng.below(n);
  set.centroids.push_back(points[first]);
  chosen[first] = true;
  while (set.centroids.size() < clusters) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(points[i], set.centroids.back()));
      total += chosen[i] ? 0.0 : d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        r -= d2[i];
        pick = i;
        if (r < 0.0) break;
      }
    } else {
      // Remaining points all coincide with centroids: take the next unused one.
      for (std::size_t i = 0; i < n && pick == n; ++i) {
        if (!chosen[i]) pick = i;
      }
    }
    chosen[pick] = true;
    set.centroids.push_back(points[pick]);
  }

  set.assignment.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) set.assignment[i] = nearest(points[i], set.centroids);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    std::vector<Point2> sums(clusters, Point2{0.0, 0.0});
    std::vector<std::size_t> counts(clusters, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[set.assignment[i]][0] += points[i][0];
      sums[set.assignment[i]][1] += points[i][1];
      ++counts[set.assignment[i]];
    }
    for (std::size_t c = 0; c < clusters; ++c) {
      if (counts[c] > 0) {
        set.centroids[c] = {sums[c][0] / counts[c], sums[c][1] / counts[c]};
        continue;
      }
      std::size_t far = 0;
      double fd = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = sq_dist(points[i], set.centroids[set.assignment[i]]);
        if (d > fd) {
          fd = d;
          far = i;
        }
      }
      set.centroids[c] = points[far];
      set.assignment[far] = c;
    }
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest(points[i], set.centroids);
      if (c != set.assignment[i]) {
        set.assignment[i] = c;
        changed = true;
      }
    }
    if (!changed) break;
  }
  refresh_cluster_statistics(points, set);
  return set;
}

// ---------------------------------------------------------------------------

double Ar1Density::residual(std::span<const double> theta, const Point2& w) const {
  if (model == Ar1Model::m1) return w[1] - theta[0] - theta[1] * w[0];
  return w[1] - theta[0] - theta[1] * (w[0] - theta[0]);
}

double Ar1Density::log_density(std::span<const double> theta, const Point2& w) const {
  const double e = residual(theta, w);
  if (gaussian) return -0.5 * e * e - kLogSqrt2Pi;
  thread_local double cached_nu = std::numeric_limits<double>::quiet_NaN();
  thread_local double log_const = 0.0;
  if (nu != cached_nu) {
    cached_nu = nu;
    log_const = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                0.5 * std::log(nu * std::numbers::pi);
  }
  return log_const - 0.5 * (nu + 1.0) * std::log1p(e * e / nu);
}

DataDerivatives Ar1Density::derivatives(std::span<const double> theta, const Point2& w) const {
  const double e = residual(theta, w);
  // The residual is linear in w with gradient a.
  const Point2 a{-theta[1], 1.0};
  double d1, d2;
  if (gaussian) {
    d1 = -e;
    d2 = -1.0;
  } else {
    const double s = nu + e * e;
    d1 = -(nu + 1.0) * e / s;
    d2 = -(nu + 1.0) * (nu - e * e) / (s * s);
  }
  DataDerivatives out;
  out.value = log_density(theta, w);
  out.gradient = {d1 * a[0], d1 * a[1]};
  out.hessian = {d2 * a[0] * a[0], d2 * a[0] * a[1], d2 * a[1] * a[1]};
  if (!std::isfinite(out.value) || !std::isfinite(d1) || !std::isfinite(d2)) {
    throw EstimatorError("non-finite control-variate derivative");
  }
  return out;
}

ControlVariates::ControlVariates(const Ar1Density& density, std::span<const Point2> points,
                                 const ClusterSet& clusters, std::span<const double> theta)
    : density_(density), points_(points), clusters_(clusters), theta_(theta) {
  at_centroid_.reserve(clusters.centroids.size());
  for (std::size_t c = 0; c < clusters.centroids.size(); ++c) {
    const auto dv = density.derivatives(theta, clusters.centroids[c]);
    at_centroid_.push_back(dv);
    const auto& s = clusters.sum_delta[c];
    const auto& m = clusters.sum_outer[c];
    total_ += static_cast<double>(clusters.count[c]) * dv.value + dv.gradient[0] * s[0] +
              dv.gradient[1] * s[1] +
              0.5 * (dv.hessian[0] * m[0] + 2.0 * dv.hessian[1] * m[1] + dv.hessian[2] * m[2]);
  }
}

double ControlVariates::q(std::size_t i) const {
  const std::size_t c = clusters_.assignment[i];
  const auto& dv = at_centroid_[c];
  const double dx = points_[i][0] - clusters_.centroids[c][0];
  const double dy = points_[i][1] - clusters_.centroids[c][1];
  return dv.value + dv.gradient[0] * dx + dv.gradient[1] * dy +
         0.5 * (dv.hessian[0] * dx * dx + 2.0 * dv.hessian[1] * dx * dy + dv.hessian[2] * dy * dy);
}

double ControlVariates::d(std::size_t i) const {
  return density_.log_density(theta_, points_[i]) - q(i);
}

double subsample_dhat(std::span<const double> d, std::span<const std::size_t> idx) {
  if (idx.empty()) throw ConfigError("empty subsample");
  double s = 0.0;
  for (auto i : idx) s += d[i];
  return static_cast<double>(d.size()) / static_cast<double>(idx.size()) * s;
}

double subsample_sigma2(std::span<const double> d, std::span<const std::size_t> idx) {
  const std::size_t n = idx.size();
  if (n < 2) throw ConfigError("subsample variance needs N >= 2");
  double mean = 0.0;
  for (auto i : idx) mean += d[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (auto i : idx) ss += (d[i] - mean) * (d[i] - mean);
  const double T = static_cast<double>(d.size());
  return T * T / static_cast<double>(n) * ss / static_cast<double>(n - 1);
}

// ---------------------------------------------------------------------------

SubsampleEstimator::SubsampleEstimator(std::vector<double> series, SubsampleOptions options)
    : series_(std::move(series)), options_(std::move(options)) {
  density_.model = options_.model;
  density_.nu = options_.nu;
  density_.gaussian = options_.gaussian;
  if (!(options_.nu > 0.0)) throw ConfigError("degrees of freedom must be positive");
  points_ = lagged_pairs(series_);
  if (points_.size() < 2) throw ConfigError("series too short");
  initial_ = options_.initial_theta;
  if (initial_.empty()) initial_ = {0.0, 0.5};
  if (initial_.size() != 2) throw ConfigError("AR(1) initial theta needs 2 entries");
  if (options_.full_data) return;
  if (options_.groups == 0) throw ConfigError("number of blocks must be positive");
  if (options_.subsample_size < 2) throw ConfigError("subsample size N must be at least 2");
  if (options_.subsample_size % options_.groups != 0) {
    throw ConfigError("subsample size " + std::to_string(options_.subsample_size) +
                      " is not a multiple of G = " + std::to_string(options_.groups));
  }
  std::size_t C = options_.clusters;
  if (C == 0) {
    const double T = static_cast<double>(points_.size());
    C = static_cast<std::size_t>(std::ceil(std::cbrt(T * T)));
  }
  C = std::min(C, points_.size());
  clusters_ = build_clusters(points_, C, options_.cluster_seed);
}

std::vector<std::string> SubsampleEstimator::param_names() const {
  if (options_.model == Ar1Model::m1) return {"beta0", "beta1"};
  return {"mu", "rho"};
}

std::size_t SubsampleEstimator::num_blocks() const {
  return options_.full_data ? 0 : options_.groups;
}

BlockLayout SubsampleEstimator::block_layout(std::size_t) const {
  BlockLayout layout;
  if (options_.copula_indices) {
    layout.kind = BlockKind::standard_normal;
  } else {
    layout.kind = BlockKind::index;
    layout.index_bound = points_.size();
  }
  layout.segments = {SegmentShape{per_block(), 1}};
  return layout;
}

double SubsampleEstimator::log_prior(std::span<const double> theta) const {
  // U(-5, 5) on the level parameter, U(0, 1) on the autoregressive one.
  if (!(theta[0] > -5.0 && theta[0] < 5.0 && theta[1] > 0.0 && theta[1] < 1.0)) return kNegInf;
  return -std::log(10.0);
}

std::optional<double> SubsampleEstimator::exact_loglik(std::span<const double> theta) const {
  double s = 0.0;
  for (const auto& w : points_) s += density_.log_density(theta, w);
  return s;
}

std::vector<std::size_t> SubsampleEstimator::block_indices(const Block& block) const {
  const auto seg = block.segment(0);
  std::vector<std::size_t> idx(seg.size());
  const std::size_t T = points_.size();
  for (std::size_t i = 0; i < seg.size(); ++i) {
    if (options_.copula_indices) {
      const double u = normal_cdf(seg[i]);
      idx[i] = std::min(T - 1, static_cast<std::size_t>(u * static_cast<double>(T)));
    } else {
      idx[i] = static_cast<std::size_t>(seg[i]);
    }
  }
  return idx;
}

double SubsampleEstimator::block_loglik(std::span<const double> theta, std::size_t,
                                        const Block& block) const {
  const ControlVariates cv(density_, points_, clusters_, theta);
  const double scale =
      static_cast<double>(points_.size()) / static_cast<double>(options_.subsample_size);
  double s = 0.0;
  for (auto i : block_indices(block)) s += cv.d(i);
  return scale * s;
}

namespace {

// Correction q - sigma-hat^2 / 2 from all subsampled d values.
LogLikEstimate assemble(double q_total, double T, std::vector<double> per_block,
                        const std::vector<double>& d) {
  const double n = static_cast<double>(d.size());
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sigma2 = T * T / n * ss / (n - 1.0);
  LogLikEstimate out;
  out.correction = q_total - 0.5 * sigma2;
  out.total = out.correction;
  for (double v : per_block) out.total += v;
  out.per_block = std::move(per_block);
  return out;
}

}  // namespace

LogLikEstimate SubsampleEstimator::combine(std::span<const double> theta,
                                           std::vector<double> per_block,
                                           const BlockedRandomness& u) const {
  const ControlVariates cv(density_, points_, clusters_, theta);
  std::vector<double> d;
  d.reserve(options_.subsample_size);
  for (std::size_t k = 0; k < u.num_blocks(); ++k) {
    for (auto i : block_indices(u.block(k))) d.push_back(cv.d(i));
  }
  return assemble(cv.total(), static_cast<double>(points_.size()), std::move(per_block), d);
}

LogLikEstimate SubsampleEstimator::estimate(std::span<const double> theta,
                                            const BlockedRandomness& u) const {
  if (options_.full_data) {
    LogLikEstimate out;
    out.total = *exact_loglik(theta);
    return out;
  }
  const ControlVariates cv(density_, points_, clusters_, theta);
  const double scale =
      static_cast<double>(points_.size()) / static_cast<double>(options_.subsample_size);
  std::vector<double> per_block(u.num_blocks());
  std::vector<double> d;
  d.reserve(options_.subsample_size);
  for (std::size_t k = 0; k < u.num_blocks(); ++k) {
    double s = 0.0;
    for (auto i : block_indices(u.block(k))) {
      const double v = cv.d(i);
      d.push_back(v);
      s += v;
    }
    per_block[k] = scale * s;
  }
  return assemble(cv.total(), static_cast<double>(points_.size()), std::move(per_block), d);
}

}  // namespace bpm
