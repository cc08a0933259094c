#include "bpm/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

#include "bpm/io.hpp"
#include "bpm/normal.hpp"
#include "bpm/panel.hpp"

namespace bpm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_gauss(double y, double mean, double var) {
  const double d = y - mean;
  return -0.5 * d * d / var - 0.5 * std::log(var) - kLogSqrt2Pi;
}

inline double drift(const DiffusionParams& p, double x) { return p.beta * (p.alpha - x); }

inline double diffusion2(const DiffusionParams& p, DiffusionKind kind, double x) {
  return kind == DiffusionKind::cir ? p.sigma * p.sigma * x : p.sigma * p.sigma;
}

DiffusionParams params(std::span<const double> theta) { return {theta[0], theta[1], theta[2]}; }

// Log importance weight of one bridge path, drawing from `normals`
// (M - 1 entries).
double path_log_weight(double x_now, double x_next, const DiffusionParams& p, DiffusionKind kind,
                       double h, std::size_t M, const double* normals) {
  double z = x_now;
  double lw = 0.0;
  for (std::size_t m = 0; m + 1 < M; ++m) {
    const double s2 = diffusion2(p, kind, z);
    const double remaining = static_cast<double>(M - m);
    const double mean = z + (x_next - z) / remaining;
    const double var = h * (remaining - 1.0) / remaining * s2;
    const double eta = normals[m];
    double next = mean + std::sqrt(var) * eta;
    lw -= log_normal_pdf(eta) - 0.5 * std::log(var);
    if (kind == DiffusionKind::cir && next <= 0.0) next = kCirFloor;
    lw += log_gauss(next, z + h * drift(p, z), h * s2);
    z = next;
  }
  lw += log_gauss(x_next, z + h * drift(p, z), h * diffusion2(p, kind, z));
  return lw;
}

}  // namespace

DiffusionKind parse_diffusion_kind(const std::string& text) {
  if (text == "cir" || text == "CIR") return DiffusionKind::cir;
  if (text == "ou" || text == "OU") return DiffusionKind::ou;
  throw ConfigError("unknown diffusion '" + text + "' (cir or ou)");
}

std::string to_string(DiffusionKind kind) { return kind == DiffusionKind::cir ? "cir" : "ou"; }

SimulatedPath simulate_diffusion(DiffusionKind kind, const DiffusionParams& theta,
                                 std::size_t intervals, double delta, double x0,
                                 std::uint64_t seed) {
  if (intervals == 0) throw ConfigError("need at least one interval");
  if (!(delta > 0.0)) throw ConfigError("observation spacing must be positive");
  if (!(theta.sigma >= 0.0) || !(theta.beta > 0.0)) {
    throw ConfigError("need beta > 0 and sigma >= 0");
  }
  if (kind == DiffusionKind::cir && !(x0 > 0.0)) throw ConfigError("CIR start must be positive");
  constexpr std::size_t kFine = 1000;
  SimulatedPath out;
  out.feller_violated =
      kind == DiffusionKind::cir && !(2.0 * theta.beta * theta.alpha > theta.sigma * theta.sigma);
  out.data.delta = delta;
  out.data.x.reserve(intervals + 1);
  out.data.x.push_back(x0);
  Rng rng(StreamKey{seed, 0, 0, 0, kSimulationTag});
  const double h = delta / kFine;
  const double sh = std::sqrt(h);
  double x = x0;
  for (std::size_t i = 0; i < intervals; ++i) {
    for (std::size_t s = 0; s < kFine; ++s) {
      x += h * drift(theta, x) + sh * std::sqrt(diffusion2(theta, kind, x)) * rng.normal();
      if (kind == DiffusionKind::cir && x <= 0.0) {
        x = kCirFloor;
        ++out.reflections;
      }
    }
    out.data.x.push_back(x);
  }
  return out;
}

SimulatedPath simulate_cir(const DiffusionParams& theta, std::size_t intervals, double delta,
                           double x0, std::uint64_t seed) {
  return simulate_diffusion(DiffusionKind::cir, theta, intervals, delta, x0, seed);
}

void write_diffusion_csv(const DiffusionData& data, std::ostream& out) {
  out << "t,x\n";
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    out << format_double(static_cast<double>(i) * data.delta) << ',' << format_double(data.x[i])
        << '\n';
  }
}

DiffusionData read_diffusion_csv(std::istream& in) {
  CsvReader reader(in);
  const auto header = reader.header();
  if (header.size() != 2 || header[0] != "t" || header[1] != "x") {
    throw ParseError(1, "diffusion CSV header must be t,x");
  }
  DiffusionData data;
  std::vector<double> t;
  std::vector<std::string> row;
  while (reader.next(row)) {
    t.push_back(reader.number(row, 0));
    data.x.push_back(reader.number(row, 1));
  }
  if (data.x.size() < 2) throw ParseError(reader.line(), "diffusion CSV needs at least 2 rows");
  data.delta = t[1] - t[0];
  if (!(data.delta > 0.0)) throw ParseError(3, "times must increase");
  for (std::size_t i = 2; i < t.size(); ++i) {
    if (std::abs((t[i] - t[i - 1]) - data.delta) > 1e-9 * std::max(1.0, std::abs(data.delta))) {
      throw ParseError(i + 2, "observation times must be equally spaced");
    }
  }
  return data;
}

BridgeSample bridge_sample_path(double x_now, double x_next, const DiffusionParams& theta,
                                DiffusionKind kind, double delta, std::size_t M,
                                std::span<const double> normals) {
  if (M == 0) throw ConfigError("need at least one Euler step");
  if (normals.size() < M - 1) throw std::invalid_argument("bridge needs M - 1 normals");
  const double h = delta / static_cast<double>(M);
  BridgeSample out;
  out.path.reserve(M - 1);
  double z = x_now;
  for (std::size_t m = 0; m + 1 < M; ++m) {
    const double s2 = diffusion2(theta, kind, z);
    if (!(s2 > 0.0)) throw EstimatorError("non-positive diffusion variance in bridge");
    const double remaining = static_cast<double>(M - m);
    const double mean = z + (x_next - z) / remaining;
    const double var = h * (remaining - 1.0) / remaining * s2;
    double next = mean + std::sqrt(var) * normals[m];
    out.log_g += log_normal_pdf(normals[m]) - 0.5 * std::log(var);
    if (kind == DiffusionKind::cir && next <= 0.0) {
      next = kCirFloor;
      ++out.reflections;
    }
    out.path.push_back(next);
    z = next;
  }
  return out;
}

double euler_path_logdensity(double x_now, std::span<const double> path, double x_next,
                             const DiffusionParams& theta, DiffusionKind kind, double delta,
                             std::size_t M) {
  if (path.size() + 1 != M) throw std::invalid_argument("path must have M - 1 points");
  const double h = delta / static_cast<double>(M);
  double z = x_now, lp = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    const double next = m + 1 < M ? path[m] : x_next;
    lp += log_gauss(next, z + h * drift(theta, z), h * diffusion2(theta, kind, z));
    z = next;
  }
  return lp;
}

double ou_euler_logpdf(double x_now, double x_next, const DiffusionParams& p, double delta,
                       std::size_t M) {
  // x_{m+1} = alpha + a (x_m - alpha) + sigma sqrt(h) e with a = 1 - h beta.
  const double h = delta / static_cast<double>(M);
  const double a = 1.0 - h * p.beta;
  double power = 1.0, var_sum = 0.0;
  for (std::size_t j = 0; j < M; ++j) {
    var_sum += power * power;
    power *= a;
  }
  return log_gauss(x_next, p.alpha + power * (x_now - p.alpha), p.sigma * p.sigma * h * var_sum);
}

double ou_transition_logpdf(double x_now, double x_next, const DiffusionParams& p, double delta) {
  const double e = std::exp(-p.beta * delta);
  const double var = p.sigma * p.sigma * (1.0 - e * e) / (2.0 * p.beta);
  return log_gauss(x_next, p.alpha + e * (x_now - p.alpha), var);
}

// ---------------------------------------------------------------------------

DiffusionEstimator::DiffusionEstimator(DiffusionData data, DiffusionOptions options)
    : data_(std::move(data)), options_(std::move(options)) {
  if (data_.intervals() == 0) throw ConfigError("diffusion data needs at least 2 observations");
  if (options_.euler_steps == 0) throw ConfigError("euler_steps must be at least 1");
  if (options_.paths == 0) throw ConfigError("paths must be at least 1");
  if (options_.kind == DiffusionKind::cir) {
    for (double x : data_.x) {
      if (!(x > 0.0)) throw ConfigError("CIR observations must be positive");
    }
  }
  groups_ = contiguous_groups(data_.intervals(), options_.groups);
  samples_.assign(groups_.size(), options_.paths);
  initial_ = options_.initial_theta;
  if (initial_.empty()) {
    double m = 0.0;
    for (double x : data_.x) m += x;
    m /= static_cast<double>(data_.x.size());
    initial_ = {std::clamp(m, 0.01, 0.99), 0.5, 0.1};
  }
  if (initial_.size() != 3) throw ConfigError("diffusion initial theta needs 3 entries");
}

BlockLayout DiffusionEstimator::block_layout(std::size_t k) const {
  BlockLayout layout;
  layout.kind = BlockKind::standard_normal;
  layout.segments.assign(groups_.at(k).size(),
                         SegmentShape{samples_.at(k), options_.euler_steps - 1});
  return layout;
}

double DiffusionEstimator::log_prior(std::span<const double> theta) const {
  if (!(theta[0] > 0.0 && theta[0] < 1.0 && theta[1] > 0.0 && theta[2] > 0.0)) return kNegInf;
  return -std::log(theta[2]);
}

std::vector<double> DiffusionEstimator::proposal_scales() const { return {0.01, 0.1, 0.01}; }

std::vector<double> DiffusionEstimator::interval_log_weights(std::span<const double> theta,
                                                             std::size_t i,
                                                             std::span<const double> normals,
                                                             std::size_t paths) const {
  const auto p = params(theta);
  const std::size_t M = options_.euler_steps;
  const double h = data_.delta / static_cast<double>(M);
  if (normals.size() < paths * (M - 1)) throw std::invalid_argument("not enough normals");
  std::vector<double> lw(paths);
  for (std::size_t j = 0; j < paths; ++j) {
    lw[j] = path_log_weight(data_.x[i], data_.x[i + 1], p, options_.kind, h, M,
                            normals.data() + j * (M - 1));
  }
  return lw;
}

double DiffusionEstimator::interval_loglik(std::span<const double> theta, std::size_t i,
                                           std::span<const double> normals,
                                           std::size_t paths) const {
  const auto lw = interval_log_weights(theta, i, normals, paths);
  return log_mean_exp(lw);
}

double DiffusionEstimator::block_loglik(std::span<const double> theta, std::size_t k,
                                        const Block& block) const {
  const auto& group = groups_.at(k);
  const std::size_t paths = samples_.at(k);
  double total = 0.0;
  for (std::size_t j = 0; j < group.size(); ++j) {
    const double v = interval_loglik(theta, group[j], block.segment(j), paths);
    if (v == kNegInf) return kNegInf;
    total += v;
  }
  return total;
}

std::optional<double> DiffusionEstimator::exact_loglik(std::span<const double> theta) const {
  const auto p = params(theta);
  const std::size_t M = options_.euler_steps;
  if (options_.kind == DiffusionKind::ou) {
    double s = 0.0;
    for (std::size_t i = 0; i < data_.intervals(); ++i) {
      s += ou_euler_logpdf(data_.x[i], data_.x[i + 1], p, data_.delta, M);
    }
    return s;
  }
  if (M == 1) {
    double s = 0.0;
    for (std::size_t i = 0; i < data_.intervals(); ++i) {
      s += euler_path_logdensity(data_.x[i], {}, data_.x[i + 1], p, options_.kind, data_.delta, 1);
    }
    return s;
  }
  return std::nullopt;
}

double DiffusionEstimator::block_log_variance(std::span<const double> theta, std::size_t k,
                                              std::size_t n, RngKind rng_kind,
                                              std::uint64_t seed) const {
  const auto& group = groups_.at(k);
  const std::size_t dim = options_.euler_steps - 1;
  if (dim == 0) return 0.0;
  double total = 0.0;
  if (rng_kind == RngKind::mc) {
    const std::size_t pilot = std::max<std::size_t>(n, 256);
    for (std::size_t j = 0; j < group.size(); ++j) {
      const auto z = generate_segment(BlockKind::standard_normal, RngKind::mc,
                                      StreamKey{seed, k, 0, j, kCalibrationTag}, pilot, dim, 0);
      const auto lw = interval_log_weights(theta, group[j], z, pilot);
      total += delta_method_log_variance(lw) * static_cast<double>(pilot) / static_cast<double>(n);
    }
    return total;
  }
  constexpr std::size_t kReplications = 20;
  if (!is_power_of_two(n)) throw ConfigError("RQMC sample counts must be powers of 2");
  for (std::size_t j = 0; j < group.size(); ++j) {
    std::vector<double> reps(kReplications);
    for (std::size_t r = 0; r < kReplications; ++r) {
      const auto z = generate_segment(BlockKind::standard_normal, RngKind::rqmc,
                                      StreamKey{seed, k, r, j, kCalibrationTag}, n, dim, 0);
      reps[r] = interval_loglik(theta, group[j], z, n);
    }
    double mean = 0.0;
    for (double v : reps) mean += v;
    mean /= kReplications;
    double ss = 0.0;
    for (double v : reps) ss += (v - mean) * (v - mean);
    total += ss / (kReplications - 1);
  }
  return total;
}

void DiffusionEstimator::set_block_samples(std::size_t k, std::size_t n) {
  if (n == 0) throw ConfigError("sample count must be positive");
  samples_.at(k) = n;
}

}  // namespace bpm
