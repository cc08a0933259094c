#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpm/rng.hpp"

namespace bpm {

/// Raised for invalid user-facing configuration (bad sizes, incompatible
/// sampler options, and so on).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class BlockKind { uniform01, standard_normal, index };
enum class RngKind { mc, rqmc };

std::string to_string(BlockKind kind);
std::string to_string(RngKind kind);
RngKind parse_rng_kind(const std::string& text);

/// One independent piece of a block: a rows x cols matrix stored row-major.
/// Under RQMC each segment is its own scrambled net (rows = points,
/// cols = dimension).
struct SegmentShape {
  std::size_t rows = 0;
  std::size_t cols = 1;

  friend bool operator==(const SegmentShape&, const SegmentShape&) = default;
};

struct BlockLayout {
  BlockKind kind = BlockKind::standard_normal;
  std::vector<SegmentShape> segments;
  /// Index blocks hold integers in {0, ..., index_bound - 1}.
  std::uint64_t index_bound = 0;

  std::size_t entries() const;

  friend bool operator==(const BlockLayout&, const BlockLayout&) = default;
};

/// The contents of one block of auxiliary randomness.
///
/// Contents are generated from a StreamKey, so a block is a pure function of
/// (master seed, block index, refresh counter). Segments may be extended to
/// more rows on demand; the extension keeps the existing rows (prefix
/// property of both the MC stream and the Sobol sequence), which is what lets
/// estimators grow their sample counts per parameter value.
class Block {
 public:
  Block() = default;
  Block(BlockLayout layout, RngKind rng_kind, StreamKey key);

  BlockKind kind() const { return layout_.kind; }
  RngKind rng_kind() const { return rng_kind_; }
  const BlockLayout& layout() const { return layout_; }
  const StreamKey& key() const { return key_; }

  std::size_t segment_count() const { return data_.size(); }
  std::size_t rows(std::size_t segment) const;
  std::size_t cols(std::size_t segment) const { return layout_.segments[segment].cols; }
  std::span<const double> segment(std::size_t segment) const { return data_[segment]; }
  std::span<double> mutable_segment(std::size_t segment);

  /// Materialise at least `rows` rows of a segment. Not allowed once the
  /// contents have been moved by a Crank-Nicolson update.
  void ensure_rows(std::size_t segment, std::size_t rows) const;

  /// True once contents no longer follow from the key (after cn_update).
  bool evolved() const { return evolved_; }
  void mark_evolved() { evolved_ = true; }

  friend bool operator==(const Block&, const Block&) = default;

 private:
  BlockLayout layout_;
  RngKind rng_kind_ = RngKind::mc;
  StreamKey key_;
  bool evolved_ = false;
  // Lazily extended; see ensure_rows.
  mutable std::vector<std::vector<double>> data_;
};

/// Fill `rows` x `cols` entries of the given kind from a keyed stream.
std::vector<double> generate_segment(BlockKind kind, RngKind rng_kind, StreamKey key,
                                     std::size_t rows, std::size_t cols,
                                     std::uint64_t index_bound);

/// The auxiliary variables u = (u_1, ..., u_G) of a pseudo-marginal chain.
class BlockedRandomness {
 public:
  BlockedRandomness() = default;
  BlockedRandomness(std::vector<BlockLayout> layouts, RngKind rng_kind,
                    std::uint64_t master_seed);

  std::size_t num_blocks() const { return blocks_.size(); }
  RngKind rng_kind() const { return rng_kind_; }
  std::uint64_t master_seed() const { return master_seed_; }
  const Block& block(std::size_t k) const { return blocks_.at(k); }
  std::uint64_t refresh_counter(std::size_t k) const { return counters_.at(k); }

  /// Key of the next regeneration of block k.
  StreamKey next_key(std::size_t k) const;

  /// Regenerate block k from (master_seed, k, counter + 1) and return the
  /// previous contents so a rejected proposal can put them back.
  Block refresh(std::size_t k);
  /// Put back contents returned by refresh(). The counter stays advanced: it
  /// belongs to the generator, not to u, so the next refresh is fresh.
  void restore(std::size_t k, Block previous);

  /// Crank-Nicolson move of every block: u <- rho u + sqrt(1 - rho^2) eps,
  /// with eps drawn from each block's next key. Returns the previous blocks.
  std::vector<Block> cn_move(double rho);
  void restore_all(std::vector<Block> previous);

  friend bool operator==(const BlockedRandomness&, const BlockedRandomness&) = default;

 private:
  std::vector<BlockLayout> layouts_;
  std::vector<Block> blocks_;
  std::vector<std::uint64_t> counters_;
  RngKind rng_kind_ = RngKind::mc;
  std::uint64_t master_seed_ = 0;
};

/// Elementwise rho * u + sqrt(1 - rho^2) * eps.
std::vector<double> cn_update(std::span<const double> u, double rho,
                              std::span<const double> eps);

struct ScrambledNetSpec {
  std::size_t num_points = 1;
  std::size_t dimension = 1;
  std::uint64_t scramble_seed = 0;
};

inline constexpr std::size_t kMaxSobolDimension = 64;

/// Sobol sequence (Joe-Kuo direction numbers) randomised by Matousek's
/// linear matrix scramble plus a digital shift. The scramble is linear, so
/// it is applied once to the direction numbers.
class ScrambledSobol {
 public:
  ScrambledSobol(std::size_t dimension, std::uint64_t scramble_seed);
  /// Unscrambled sequence, used to check the direction numbers.
  static ScrambledSobol unscrambled(std::size_t dimension);

  std::size_t dimension() const { return dimension_; }
  /// Coordinate j of point i, in [0, 1).
  double coordinate(std::uint64_t i, std::size_t j) const;
  /// Points [first, last) written row-major into out.
  void fill(std::uint64_t first, std::uint64_t last, std::span<double> out) const;

 private:
  explicit ScrambledSobol(std::size_t dimension);
  std::size_t dimension_;
  // directions_[j * 32 + b]: (scrambled) direction number for bit b of dim j.
  std::vector<std::uint64_t> directions_;
  std::vector<std::uint64_t> shifts_;
};

/// N x d row-major matrix of uniforms forming a scrambled (t, m, d)-net.
std::vector<double> generate_scrambled_net(const ScrambledNetSpec& spec);

/// The smallest uniform fed to the inverse CDF: 0 is mapped here (2^-64).
inline constexpr double kSmallestUniform = 0x1.0p-64;

/// Elementwise inverse normal CDF; 0 is clamped to kSmallestUniform.
std::vector<double> uniforms_to_normals(std::span<const double> u);
double uniform_to_normal(double u);

enum class ProbeIntegrand { product, exponential, constant };

ProbeIntegrand parse_probe_integrand(const std::string& name);

struct VarianceRateProbe {
  std::vector<std::size_t> sample_sizes;
  std::vector<double> mc_variance;
  std::vector<double> rqmc_variance;
  double mc_slope = 0.0;
  double rqmc_slope = 0.0;
};

/// Fits log-variance against log N for plain MC and scrambled-net RQMC
/// estimates of a smooth integrand on [0,1]^d with known mean.
VarianceRateProbe rqmc_variance_rate_probe(ProbeIntegrand integrand, std::size_t dimension,
                                           std::span<const std::size_t> sample_sizes,
                                           std::size_t replications, std::uint64_t seed);

bool is_power_of_two(std::size_t n);

}  // namespace bpm
