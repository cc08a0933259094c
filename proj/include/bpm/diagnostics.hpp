#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bpm/sampler.hpp"

namespace bpm {

/// Raised when a diagnostic cannot be computed (constant series, too few
/// pairs, ...).
class DiagnosticError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kMaxIactLag = 1000;

/// 1 + 2 sum_{t=1}^{L} rho_t with L = min(1000, n / 10). The raw value is
/// returned, so noise can push it below 1.
double iact(std::span<const double> series);
/// Sample autocorrelations rho_1..rho_L (biased, denominator n).
std::vector<double> autocorrelations(std::span<const double> series, std::size_t max_lag);

double sample_mean(std::span<const double> x);
/// Denominator n - 1.
double sample_sd(std::span<const double> x);
double sample_correlation(std::span<const double> x, std::span<const double> y);

struct ChainSummary {
  std::size_t draws = 0;
  double acceptance_rate = 0.0;
  std::vector<std::string> param_names;
  /// nullopt where the IACT could not be computed; the reason is in iact_errors.
  std::vector<std::optional<double>> iact;
  std::map<std::string, std::string> iact_errors;
  std::optional<double> mean_iact;
  std::optional<double> cpu_seconds;
  std::optional<double> tnv;
  std::vector<double> posterior_mean;
  std::vector<double> posterior_sd;
  /// mean IACT / sigma^(1/varpi) when the estimator's sigma is known.
  std::optional<double> empirical_ct;
  std::string config_digest;
};

struct SummaryOptions {
  std::optional<double> sigma2;
  double varpi = 0.5;
  std::string config_digest;
};

ChainSummary summarize(const ChainOutput& chain, const SummaryOptions& options = {});

/// Sample Corr(z_current, z_proposed) over recorded proposals.
double corr_z_pairs(std::span<const ProposalPair> pairs);

/// Sample Corr(h(theta), z) over stored draws.
double corr_theta_z(const ChainOutput& chain,
                    const std::function<double(std::span<const double>)>& h);

}  // namespace bpm
