#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpm/randomness.hpp"
#include "bpm/rng.hpp"

namespace bpm {

/// The estimator could not produce a usable value (NaN, or no finite value
/// after the allowed retries).
class EstimatorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Log of an estimated likelihood. total = sum(per_block) + correction.
struct LogLikEstimate {
  double total = 0.0;
  std::vector<double> per_block;
  double correction = 0.0;
};

/// Unbiased (or bias-controlled) likelihood estimator whose randomness is split
/// into independent blocks. block_loglik must be a pure function of
/// (theta, block contents).
class Estimator {
 public:
  virtual ~Estimator() = default;

  virtual std::string name() const = 0;
  virtual std::vector<std::string> param_names() const = 0;
  std::size_t num_params() const { return param_names().size(); }

  virtual std::size_t num_blocks() const = 0;
  virtual BlockLayout block_layout(std::size_t k) const = 0;
  std::vector<BlockLayout> block_layouts() const;

  virtual double log_prior(std::span<const double> theta) const = 0;
  virtual std::vector<double> initial_theta() const = 0;
  virtual std::vector<double> proposal_scales() const = 0;

  /// Draw from the prior, if the model supports it (perfect-proposal runs).
  virtual bool can_sample_prior() const { return false; }
  virtual std::vector<double> sample_prior(Rng& rng) const;

  /// Exact log-likelihood where computable; z = estimate - exact.
  virtual std::optional<double> exact_loglik(std::span<const double> theta) const;

  virtual double block_loglik(std::span<const double> theta, std::size_t k,
                              const Block& block) const = 0;
  /// Assemble the estimate from per-block values. The default adds no
  /// correction.
  virtual LogLikEstimate combine(std::span<const double> theta, std::vector<double> per_block,
                                 const BlockedRandomness& u) const;
  /// Evaluate at (theta, u). Models may override to share per-theta work
  /// across blocks; the result must equal block_loglik + combine.
  virtual LogLikEstimate estimate(std::span<const double> theta,
                                  const BlockedRandomness& u) const;

  // Per-block sample-size calibration. Models without a sample-size knob
  // return false from supports_calibration.
  virtual bool supports_calibration() const { return false; }
  /// Estimated V(z_(k)) at theta with n samples per unit in block k.
  virtual double block_log_variance(std::span<const double> theta, std::size_t k,
                                    std::size_t n, RngKind rng_kind,
                                    std::uint64_t seed) const;
  virtual void set_block_samples(std::size_t k, std::size_t n);
  virtual std::size_t block_samples(std::size_t k) const;
};

/// Delta-method variance of log(mean(w)) from log-weights: var(w) / (n mean(w)^2).
double delta_method_log_variance(std::span<const double> log_weights);

/// log(mean(exp(x))), stable.
double log_mean_exp(std::span<const double> x);

}  // namespace bpm
