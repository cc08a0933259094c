#pragma once

#include "bpm/estimator.hpp"

namespace bpm {

/// z_(k) = -s2/2 + sqrt(s2) * eta.
double toy_block_z(double sigma_block, double eta);

/// Synthetic model whose log-likelihood error is exactly Gaussian: scalar
/// theta with a N(0, 1) prior, unit likelihood, and z_(k) iid
/// N(-s2/2, s2) per block with s2 = gamma2 / N_(k).
class ToyEstimator : public Estimator {
 public:
  /// Every block gets variance sigma2_block (gamma2 = sigma2_block, N = 1).
  ToyEstimator(std::size_t blocks, double sigma2_block);

  std::string name() const override { return "toy"; }
  std::vector<std::string> param_names() const override { return {"theta"}; }
  std::size_t num_blocks() const override { return gamma2_.size(); }
  BlockLayout block_layout(std::size_t k) const override;

  double log_prior(std::span<const double> theta) const override;
  std::vector<double> initial_theta() const override { return {0.0}; }
  std::vector<double> proposal_scales() const override { return {1.0}; }
  bool can_sample_prior() const override { return true; }
  std::vector<double> sample_prior(Rng& rng) const override;
  std::optional<double> exact_loglik(std::span<const double>) const override { return 0.0; }

  double block_loglik(std::span<const double> theta, std::size_t k,
                      const Block& block) const override;

  bool supports_calibration() const override { return true; }
  double block_log_variance(std::span<const double> theta, std::size_t k, std::size_t n,
                            RngKind rng_kind, std::uint64_t seed) const override;
  void set_block_samples(std::size_t k, std::size_t n) override;
  std::size_t block_samples(std::size_t k) const override { return samples_.at(k); }

  /// Per-block variance constants gamma2_(k): V(z_(k)) = gamma2_(k) / N_(k).
  void set_gamma2(std::vector<double> gamma2);
  double block_sigma2(std::size_t k) const { return gamma2_.at(k) / samples_.at(k); }
  double total_sigma2() const;

 private:
  std::vector<double> gamma2_;
  std::vector<std::size_t> samples_;
};

}  // namespace bpm
