#include "bpm/toy.hpp"

#include <cmath>

#include "bpm/normal.hpp"

namespace bpm {

double toy_block_z(double sigma_block, double eta) {
  return -0.5 * sigma_block * sigma_block + sigma_block * eta;
}

ToyEstimator::ToyEstimator(std::size_t blocks, double sigma2_block)
    : gamma2_(blocks, sigma2_block), samples_(blocks, 1) {
  if (blocks == 0) throw ConfigError("toy model needs at least one block");
  if (!(sigma2_block >= 0.0) || !std::isfinite(sigma2_block)) {
    throw ConfigError("toy block variance must be finite and nonnegative");
  }
}

BlockLayout ToyEstimator::block_layout(std::size_t) const {
  return BlockLayout{BlockKind::standard_normal, {SegmentShape{1, 1}}, 0};
}

double ToyEstimator::log_prior(std::span<const double> theta) const {
  return log_normal_pdf(theta[0]);
}

std::vector<double> ToyEstimator::sample_prior(Rng& rng) const { return {rng.normal()}; }

double ToyEstimator::block_loglik(std::span<const double>, std::size_t k,
                                  const Block& block) const {
  return toy_block_z(std::sqrt(block_sigma2(k)), block.segment(0)[0]);
}

double ToyEstimator::block_log_variance(std::span<const double>, std::size_t k,
                                        std::size_t n, RngKind, std::uint64_t) const {
  return gamma2_.at(k) / static_cast<double>(n);
}

void ToyEstimator::set_block_samples(std::size_t k, std::size_t n) {
  if (n == 0) throw ConfigError("sample count must be positive");
  samples_.at(k) = n;
}

void ToyEstimator::set_gamma2(std::vector<double> gamma2) {
  if (gamma2.size() != gamma2_.size()) throw ConfigError("gamma2 length must equal G");
  gamma2_ = std::move(gamma2);
}

double ToyEstimator::total_sigma2() const {
  double s = 0.0;
  for (std::size_t k = 0; k < gamma2_.size(); ++k) s += block_sigma2(k);
  return s;
}

}  // namespace bpm
