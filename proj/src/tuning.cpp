#include "bpm/tuning.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "bpm/diagnostics.hpp"
#include "bpm/normal.hpp"
#include "bpm/rng.hpp"

namespace bpm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_sigma_rho(double sigma, double rho) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("sigma must be finite and nonnegative");
  }
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in [0, 1)");
}

// Integral of f(t) phi(t) over the real line, split at `centre`.
template <class F>
double normal_expectation(F f, double centre) {
  using boost::math::quadrature::gauss_kronrod;
  auto g = [&](double t) { return f(t); };
  double err1 = 0.0, err2 = 0.0;
  const double a = gauss_kronrod<double, 61>::integrate(g, -kInf, centre, 15, 1e-11, &err1);
  const double b = gauss_kronrod<double, 61>::integrate(g, centre, kInf, 15, 1e-11, &err2);
  return a + b;
}

}  // namespace

double block_correlation(std::size_t blocks) {
  if (blocks == 0) throw std::invalid_argument("G must be positive");
  return 1.0 - 1.0 / static_cast<double>(blocks);
}

double unconditional_accept(double sigma, double rho) {
  check_sigma_rho(sigma, rho);
  return std::erfc(sigma * std::sqrt(1.0 - rho) / 2.0);
}

double log_conditional_accept(double z_prime, double sigma, double rho) {
  check_sigma_rho(sigma, rho);
  const double x = (z_prime + 0.5 * sigma * sigma) * (1.0 - rho);
  const double tau = sigma * std::sqrt(1.0 - rho * rho);
  if (tau == 0.0) return std::min(0.0, -x);
  const double a = -x + 0.5 * tau * tau + log_normal_cdf(x / tau - tau);
  const double b = log_normal_cdf(-x / tau);
  return std::min(0.0, log_add_exp(a, b));
}

double conditional_accept(double z_prime, double sigma, double rho) {
  return std::exp(log_conditional_accept(z_prime, sigma, rho));
}

double expected_conditional_accept(double sigma, double rho) {
  check_sigma_rho(sigma, rho);
  if (sigma == 0.0) return 1.0;
  return normal_expectation(
      [&](double t) {
        return std::exp(log_normal_pdf(t) +
                        log_conditional_accept(0.5 * sigma * sigma + sigma * t, sigma, rho));
      },
      0.0);
}

double inefficiency(double sigma, double rho) {
  check_sigma_rho(sigma, rho);
  if (sigma == 0.0) return 1.0;
  // z' = sigma^2/2 + sigma t. (1 - k)/k grows like exp(x), so the mass of the
  // integrand sits near t = (1 - rho) sigma.
  const double value = normal_expectation(
      [&](double t) {
        const double lk = log_conditional_accept(0.5 * sigma * sigma + sigma * t, sigma, rho);
        if (lk == 0.0) return 0.0;
        return std::exp(log_normal_pdf(t) + std::log(-std::expm1(lk)) - lk);
      },
      (1.0 - rho) * sigma);
  const double out = 1.0 + 2.0 * value;
  if (!std::isfinite(out)) {
    throw std::runtime_error("inefficiency integral is not finite at sigma = " +
                             std::to_string(sigma) + ", rho = " + std::to_string(rho));
  }
  return out;
}

double computing_time(double sigma, double rho, double varpi) {
  if (!(varpi > 0.0)) throw std::invalid_argument("varpi must be positive");
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  return inefficiency(sigma, rho) / std::pow(sigma, 1.0 / varpi);
}

namespace {

template <class CtOfTau>
CtOptimum minimize_over_tau(CtOfTau ct_of_tau, double rho) {
  constexpr int kGrid = 200;
  const double lo = std::log(0.01), hi = std::log(50.0);
  std::vector<double> log_tau(kGrid), ct(kGrid);
  for (int i = 0; i < kGrid; ++i) {
    log_tau[i] = lo + (hi - lo) * i / (kGrid - 1);
    try {
      ct[i] = ct_of_tau(std::exp(log_tau[i]));
      if (!std::isfinite(ct[i])) ct[i] = kInf;
    } catch (const std::runtime_error&) {
      ct[i] = kInf;
    }
  }
  const auto best = static_cast<int>(std::min_element(ct.begin(), ct.end()) - ct.begin());
  int local_minima = 0;
  for (int i = 0; i < kGrid; ++i) {
    const bool left = i == 0 || ct[i] < ct[i - 1];
    const bool right = i == kGrid - 1 || ct[i] < ct[i + 1];
    if (left && right && std::isfinite(ct[i])) ++local_minima;
  }
  CtOptimum out;
  double tau = std::exp(log_tau[best]);
  if (local_minima > 1) {
    out.warning = true;
    out.note = "computing-time profile is not unimodal; returning the grid minimum";
  } else if (best > 0 && best < kGrid - 1) {
    auto f = [&](double lt) {
      try {
        return ct_of_tau(std::exp(lt));
      } catch (const std::runtime_error&) {
        return kInf;
      }
    };
    const auto r = boost::math::tools::brent_find_minima(f, log_tau[best - 1],
                                                         log_tau[best + 1], 40);
    tau = std::exp(r.first);
  } else {
    out.warning = true;
    out.note = "minimum at the edge of the search range";
  }
  const double s = std::sqrt(1.0 - rho * rho);
  out.tau = tau;
  out.sigma = tau / s;
  out.ct = ct_of_tau(tau);
  return out;
}

}  // namespace

CtOptimum minimize_ct(double varpi, double rho) {
  check_sigma_rho(1.0, rho);
  if (!(varpi > 0.0)) throw std::invalid_argument("varpi must be positive");
  const double s = std::sqrt(1.0 - rho * rho);
  auto out = minimize_over_tau(
      [&](double tau) { return computing_time(tau / s, rho, varpi); }, rho);
  out.inefficiency = inefficiency(out.sigma, rho);
  out.acceptance = unconditional_accept(out.sigma, rho);
  return out;
}

double inefficiency_taylor(double tau, double rho) {
  check_sigma_rho(tau, rho);
  // With omega ~ N(-rho tau / (1 + rho), (1 - rho) / (1 + rho)) the rejection
  // probability is p(omega) = Phi(omega + tau) - exp(-omega tau - tau^2/2) Phi(omega)
  // and IF = E[(1 + p) / (1 - p)], expanded to fourth order around the mean.
  // 1 - p is formed directly; subtracting p from 1 cancels badly at large tau.
  auto f = [tau](double w) {
    const double q = normal_cdf(-(w + tau)) + std::exp(-w * tau - 0.5 * tau * tau) * normal_cdf(w);
    return (2.0 - q) / q;
  };
  const double m = -rho * tau / (1.0 + rho);
  const double v = (1.0 - rho) / (1.0 + rho);
  const double h = 1e-2;
  const double f0 = f(m), fp1 = f(m + h), fm1 = f(m - h), fp2 = f(m + 2 * h), fm2 = f(m - 2 * h);
  const double d2 = (fp1 - 2.0 * f0 + fm1) / (h * h);
  const double d4 = (fp2 - 4.0 * fp1 + 6.0 * f0 - 4.0 * fm1 + fm2) / (h * h * h * h);
  return f0 + 0.5 * v * d2 + 0.125 * v * v * d4;
}

double computing_time_taylor(double tau, double rho, double varpi) {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  return std::pow(1.0 - rho * rho, 1.0 / (2.0 * varpi)) * inefficiency_taylor(tau, rho) /
         std::pow(tau, 1.0 / varpi);
}

CtOptimum minimize_ct_taylor(double varpi, double rho) {
  check_sigma_rho(1.0, rho);
  auto out = minimize_over_tau(
      [&](double tau) { return computing_time_taylor(tau, rho, varpi); }, rho);
  out.inefficiency = inefficiency_taylor(out.tau, rho);
  out.acceptance = unconditional_accept(out.sigma, rho);
  return out;
}

ZChainResult simulate_z_chain(double sigma, double rho, std::size_t iterations,
                              std::uint64_t seed) {
  check_sigma_rho(sigma, rho);
  if (iterations < 20) throw std::invalid_argument("z chain needs at least 20 iterations");
  Rng rng(StreamKey{seed, 0, 0, 0, kSimulationTag});
  const double s2 = sigma * sigma;
  const double sd_move = sigma * std::sqrt(1.0 - rho * rho);
  double z = 0.5 * s2 + sigma * rng.normal();
  double theta = rng.normal();
  std::vector<double> trace(iterations);
  double sum_prob = 0.0;
  std::size_t accepted = 0;
  for (std::size_t i = 0; i < iterations; ++i) {
    const double theta_prop = rng.normal();
    const double z_prop = rho * z - (1.0 - rho) * 0.5 * s2 + sd_move * rng.normal();
    const double d = z_prop - z;
    const double a = d >= 0.0 ? 1.0 : std::exp(d);
    sum_prob += a;
    if (rng.uniform() < a) {
      z = z_prop;
      theta = theta_prop;
      ++accepted;
    }
    trace[i] = theta;
  }
  ZChainResult out;
  out.iterations = iterations;
  out.mean_accept_prob = sum_prob / static_cast<double>(iterations);
  out.accept_rate = static_cast<double>(accepted) / static_cast<double>(iterations);
  out.iact = iact(trace);
  return out;
}

BlockVarianceProfile calibrate_block_samples(Estimator& estimator,
                                             std::span<const double> theta, double target,
                                             const CalibrationOptions& options) {
  if (!estimator.supports_calibration()) {
    throw ConfigError(estimator.name() + " has no per-block sample size to calibrate");
  }
  if (!(target > 0.0)) throw ConfigError("variance target must be positive");
  if (options.initial_samples == 0 || options.max_samples < options.initial_samples) {
    throw ConfigError("need 0 < initial samples <= max samples");
  }
  BlockVarianceProfile out;
  const std::size_t G = estimator.num_blocks();
  for (std::size_t k = 0; k < G; ++k) {
    const std::uint64_t seed = derive_seed(options.seed, k);
    std::size_t n = options.initial_samples;
    double v = estimator.block_log_variance(theta, k, n, options.rng_kind, seed);
    while (!(v <= target) && n < options.max_samples) {
      n = std::min(2 * n, options.max_samples);
      v = estimator.block_log_variance(theta, k, n, options.rng_kind, seed);
    }
    const bool met = v <= target;
    estimator.set_block_samples(k, n);
    out.block_variance.push_back(v);
    out.samples.push_back(n);
    out.target_met.push_back(met);
    out.all_met = out.all_met && met;
    out.total_variance += v;
  }
  return out;
}

double recommended_block_variance(double varpi, std::size_t blocks) {
  const auto opt = minimize_ct(varpi, block_correlation(blocks));
  return opt.sigma * opt.sigma / static_cast<double>(blocks);
}

ScalingRecommendation recommend_scaling(std::size_t data_size, double varpi) {
  if (data_size == 0) throw std::invalid_argument("data size must be positive");
  if (!(varpi > 0.0)) throw std::invalid_argument("varpi must be positive");
  ScalingRecommendation r;
  r.samples_exponent = 1.0 / (4.0 * varpi);
  r.blocks_exponent = 0.5;
  const double T = static_cast<double>(data_size);
  r.samples = std::pow(T, r.samples_exponent);
  r.blocks = std::pow(T, r.blocks_exponent);
  return r;
}

}  // namespace bpm
