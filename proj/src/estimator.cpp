#include "bpm/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bpm {

std::vector<BlockLayout> Estimator::block_layouts() const {
  std::vector<BlockLayout> out;
  out.reserve(num_blocks());
  for (std::size_t k = 0; k < num_blocks(); ++k) out.push_back(block_layout(k));
  return out;
}

std::vector<double> Estimator::sample_prior(Rng&) const {
  throw std::logic_error(name() + ": prior sampling not supported");
}

std::optional<double> Estimator::exact_loglik(std::span<const double>) const {
  return std::nullopt;
}

LogLikEstimate Estimator::combine(std::span<const double>, std::vector<double> per_block,
                                  const BlockedRandomness&) const {
  LogLikEstimate out;
  out.total = 0.0;
  for (double v : per_block) out.total += v;
  out.per_block = std::move(per_block);
  return out;
}

LogLikEstimate Estimator::estimate(std::span<const double> theta,
                                   const BlockedRandomness& u) const {
  std::vector<double> per_block(num_blocks());
  for (std::size_t k = 0; k < per_block.size(); ++k) {
    per_block[k] = block_loglik(theta, k, u.block(k));
  }
  return combine(theta, std::move(per_block), u);
}

double Estimator::block_log_variance(std::span<const double>, std::size_t, std::size_t,
                                     RngKind, std::uint64_t) const {
  throw std::logic_error(name() + ": calibration not supported");
}

void Estimator::set_block_samples(std::size_t, std::size_t) {
  throw std::logic_error(name() + ": calibration not supported");
}

std::size_t Estimator::block_samples(std::size_t) const { return 0; }

double log_mean_exp(std::span<const double> x) {
  if (x.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(x.begin(), x.end());
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s / static_cast<double>(x.size()));
}

double delta_method_log_variance(std::span<const double> log_weights) {
  const std::size_t n = log_weights.size();
  if (n < 2) throw std::invalid_argument("delta-method variance needs at least 2 weights");
  const double m = *std::max_element(log_weights.begin(), log_weights.end());
  if (m == -std::numeric_limits<double>::infinity()) {
    return std::numeric_limits<double>::infinity();
  }
  // Weights rescaled by exp(-m); the ratio var / mean^2 is scale free.
  double mean = 0.0;
  for (double v : log_weights) mean += std::exp(v - m);
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : log_weights) {
    const double d = std::exp(v - m) - mean;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(n - 1);
  return var / (static_cast<double>(n) * mean * mean);
}

}  // namespace bpm
