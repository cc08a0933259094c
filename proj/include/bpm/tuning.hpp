#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bpm/estimator.hpp"

namespace bpm {

/// varpi: rate exponent of the estimator's sd in the sample count (1/2 for
/// MC, 3/2 for RQMC). rho = 1 - 1/G. sigma: sd of the log-likelihood error.
struct TuningConfig {
  double varpi = 0.5;
  double rho = 0.0;
  double sigma = 1.0;
};

inline constexpr double kVarpiMc = 0.5;
inline constexpr double kVarpiRqmc = 1.5;

/// Correlation between successive log-likelihood errors with G blocks.
double block_correlation(std::size_t blocks);

/// Stationary acceptance probability under a perfect proposal:
/// erfc(sigma sqrt(1 - rho) / 2).
double unconditional_accept(double sigma, double rho);

/// Acceptance probability given the current error z' (perfect proposal).
double conditional_accept(double z_prime, double sigma, double rho);
double log_conditional_accept(double z_prime, double sigma, double rho);

/// E[conditional_accept(z')] over z' ~ N(sigma^2/2, sigma^2), by quadrature.
double expected_conditional_accept(double sigma, double rho);

/// Inefficiency 1 + 2 E[(1 - k(z')) / k(z')], z' ~ N(sigma^2/2, sigma^2).
/// Throws std::runtime_error when the integral is not finite.
double inefficiency(double sigma, double rho);

/// IF(sigma, rho) / sigma^(1 / varpi).
double computing_time(double sigma, double rho, double varpi);

struct CtOptimum {
  double sigma = 0.0;
  double tau = 0.0;
  double ct = 0.0;
  double inefficiency = 0.0;
  double acceptance = 0.0;
  /// Set when the profile over the grid had more than one local minimum; the
  /// grid argmin is returned unrefined.
  bool warning = false;
  std::string note;
};

/// Minimises computing_time over sigma in (0, 50 / sqrt(1 - rho^2)] on a
/// log-tau grid followed by golden-section refinement.
CtOptimum minimize_ct(double varpi, double rho);

/// Second-order Taylor construction of the inefficiency in terms of
/// tau = sigma sqrt(1 - rho^2), used to cross-check the quadrature.
double inefficiency_taylor(double tau, double rho);
double computing_time_taylor(double tau, double rho, double varpi);
CtOptimum minimize_ct_taylor(double varpi, double rho);

/// Simulates the error-only chain under a perfect proposal: theta' ~ N(0,1),
/// z' | z ~ N(rho z - (1 - rho) sigma^2/2, sigma^2 (1 - rho^2)), accept with
/// min(1, exp(z' - z)). Reports the mean acceptance probability and the
/// IACT of theta.
struct ZChainResult {
  std::size_t iterations = 0;
  double mean_accept_prob = 0.0;
  double accept_rate = 0.0;
  double iact = 0.0;
};
ZChainResult simulate_z_chain(double sigma, double rho, std::size_t iterations,
                              std::uint64_t seed);

struct CalibrationOptions {
  std::size_t initial_samples = 4;
  std::size_t max_samples = 1 << 16;
  RngKind rng_kind = RngKind::mc;
  std::uint64_t seed = 0;
};

struct BlockVarianceProfile {
  std::vector<double> block_variance;
  std::vector<std::size_t> samples;
  std::vector<bool> target_met;
  double total_variance = 0.0;
  bool all_met = true;
};

/// For each block, the smallest N in {N0, 2 N0, ...} (capped at max_samples)
/// whose estimated V(z_(k)) at theta is at most target. Applies the chosen
/// counts to the estimator.
BlockVarianceProfile calibrate_block_samples(Estimator& estimator,
                                             std::span<const double> theta, double target,
                                             const CalibrationOptions& options);

/// Per-block variance target sigma*^2 / G from the CT optimum at rho = 1 - 1/G.
double recommended_block_variance(double varpi, std::size_t blocks);

/// Growth exponents for N and G as the data size T grows: N ~ T^(1/(4 varpi)),
/// G ~ T^(1/2).
struct ScalingRecommendation {
  double samples_exponent = 0.0;
  double blocks_exponent = 0.5;
  double samples = 0.0;
  double blocks = 0.0;
};
ScalingRecommendation recommend_scaling(std::size_t data_size, double varpi);

}  // namespace bpm
