#include "bpm/randomness.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "bpm/normal.hpp"
#include "sobol_table.hpp"

namespace bpm {

std::string to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::uniform01: return "uniform01";
    case BlockKind::standard_normal: return "standard_normal";
    case BlockKind::index: return "index";
  }
  return "unknown";
}

std::string to_string(RngKind kind) { return kind == RngKind::mc ? "mc" : "rqmc"; }

RngKind parse_rng_kind(const std::string& text) {
  if (text == "mc" || text == "MC") return RngKind::mc;
  if (text == "rqmc" || text == "RQMC") return RngKind::rqmc;
  throw ConfigError("unknown rng kind '" + text + "' (expected mc or rqmc)");
}

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t BlockLayout::entries() const {
  std::size_t total = 0;
  for (const auto& s : segments) total += s.rows * s.cols;
  return total;
}

// ---------------------------------------------------------------------------
// Sobol

namespace {

constexpr int kSobolBits = 32;

}  // namespace

ScrambledSobol::ScrambledSobol(std::size_t dimension)
    : dimension_(dimension),
      directions_(dimension * kSobolBits),
      shifts_(dimension, 0) {
  if (dimension == 0) throw ConfigError("Sobol dimension must be at least 1");
  if (dimension > kMaxSobolDimension) {
    throw ConfigError("Sobol dimension " + std::to_string(dimension) +
                      " exceeds the direction-number table (max 64)");
  }
  for (std::size_t j = 0; j < dimension; ++j) {
    std::uint32_t v[kSobolBits + 1] = {};
    const auto& poly = detail::kSobolTable[j];
    if (j == 0) {
      for (int i = 1; i <= kSobolBits; ++i) v[i] = 1u << (kSobolBits - i);
    } else {
      const int s = poly.degree;
      for (int i = 1; i <= s && i <= kSobolBits; ++i) {
        v[i] = poly.initial[i - 1] << (kSobolBits - i);
      }
      for (int i = s + 1; i <= kSobolBits; ++i) {
        v[i] = v[i - s] ^ (v[i - s] >> s);
        for (int k = 1; k < s; ++k) {
          if ((poly.coefficients >> (s - 1 - k)) & 1u) v[i] ^= v[i - k];
        }
      }
    }
    for (int b = 0; b < kSobolBits; ++b) {
      directions_[j * kSobolBits + b] = static_cast<std::uint64_t>(v[b + 1]) << 32;
    }
  }
}

ScrambledSobol ScrambledSobol::unscrambled(std::size_t dimension) {
  return ScrambledSobol(dimension);
}

ScrambledSobol::ScrambledSobol(std::size_t dimension, std::uint64_t scramble_seed)
    : ScrambledSobol(dimension) {
  Rng rng(StreamKey{scramble_seed, 0, 0, 0, kScrambleTag});
  for (std::size_t j = 0; j < dimension; ++j) {
    // Row for output bit position p (63 = most significant digit): the
    // diagonal bit plus random bits at more significant positions, making
    // the digit matrix lower triangular with unit diagonal.
    std::uint64_t rows[64];
    for (int p = 63; p >= 0; --p) {
      const std::uint64_t higher = p == 63 ? 0 : ~((std::uint64_t{2} << p) - 1);
      rows[p] = (std::uint64_t{1} << p) | (rng() & higher);
    }
    for (int b = 0; b < kSobolBits; ++b) {
      const std::uint64_t x = directions_[j * kSobolBits + b];
      std::uint64_t y = 0;
      for (int p = 0; p < 64; ++p) {
        y |= static_cast<std::uint64_t>(std::popcount(rows[p] & x) & 1) << p;
      }
      directions_[j * kSobolBits + b] = y;
    }
    shifts_[j] = rng();
  }
}

double ScrambledSobol::coordinate(std::uint64_t i, std::size_t j) const {
  std::uint64_t x = shifts_[j];
  const std::uint64_t* dir = &directions_[j * kSobolBits];
  for (int b = 0; i != 0 && b < kSobolBits; ++b, i >>= 1) {
    if (i & 1) x ^= dir[b];
  }
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

void ScrambledSobol::fill(std::uint64_t first, std::uint64_t last,
                          std::span<double> out) const {
  if (last > (std::uint64_t{1} << kSobolBits)) {
    throw ConfigError("Sobol sequence limited to 2^32 points");
  }
  if (out.size() < (last - first) * dimension_) {
    throw std::length_error("ScrambledSobol::fill: output too small");
  }
  std::size_t o = 0;
  for (std::uint64_t i = first; i < last; ++i) {
    for (std::size_t j = 0; j < dimension_; ++j) out[o++] = coordinate(i, j);
  }
}

std::vector<double> generate_scrambled_net(const ScrambledNetSpec& spec) {
  if (!is_power_of_two(spec.num_points)) {
    throw ConfigError("scrambled net size must be a power of 2, got " +
                      std::to_string(spec.num_points));
  }
  ScrambledSobol sobol(spec.dimension, spec.scramble_seed);
  std::vector<double> out(spec.num_points * spec.dimension);
  sobol.fill(0, spec.num_points, out);
  return out;
}

double uniform_to_normal(double u) {
  return normal_quantile(u > 0.0 ? u : kSmallestUniform);
}

std::vector<double> uniforms_to_normals(std::span<const double> u) {
  std::vector<double> out(u.size());
  std::transform(u.begin(), u.end(), out.begin(), uniform_to_normal);
  return out;
}

// ---------------------------------------------------------------------------
// Blocks

std::vector<double> generate_segment(BlockKind kind, RngKind rng_kind, StreamKey key,
                                     std::size_t rows, std::size_t cols,
                                     std::uint64_t index_bound) {
  std::vector<double> out(rows * cols);
  if (out.empty()) return out;
  if (rng_kind == RngKind::rqmc) {
    if (kind == BlockKind::index) {
      throw ConfigError("index blocks cannot be driven by RQMC");
    }
    const std::uint64_t scramble = mix64(key.seed ^ mix64(key.block ^ mix64(
                                        key.refresh ^ mix64(key.segment))));
    ScrambledSobol sobol(cols, scramble);
    sobol.fill(0, rows, out);
    if (kind == BlockKind::standard_normal) {
      for (auto& x : out) x = uniform_to_normal(x);
    }
    return out;
  }
  Rng rng(key);
  switch (kind) {
    case BlockKind::uniform01:
      for (auto& x : out) x = rng.uniform();
      break;
    case BlockKind::standard_normal:
      for (auto& x : out) x = rng.normal();
      break;
    case BlockKind::index:
      if (index_bound == 0) throw ConfigError("index block needs a positive bound");
      for (auto& x : out) x = static_cast<double>(rng.below(index_bound));
      break;
  }
  return out;
}

Block::Block(BlockLayout layout, RngKind rng_kind, StreamKey key)
    : layout_(std::move(layout)), rng_kind_(rng_kind), key_(key) {
  data_.resize(layout_.segments.size());
  for (std::size_t j = 0; j < layout_.segments.size(); ++j) {
    const auto& shape = layout_.segments[j];
    if (rng_kind_ == RngKind::rqmc && shape.rows > 0 && !is_power_of_two(shape.rows)) {
      throw ConfigError("RQMC segments need a power-of-2 number of rows, got " +
                        std::to_string(shape.rows));
    }
    StreamKey k = key_;
    k.segment = j;
    data_[j] = generate_segment(layout_.kind, rng_kind_, k, shape.rows, shape.cols,
                                layout_.index_bound);
  }
}

std::size_t Block::rows(std::size_t segment) const {
  const std::size_t c = layout_.segments[segment].cols;
  return c == 0 ? layout_.segments[segment].rows : data_[segment].size() / c;
}

std::span<double> Block::mutable_segment(std::size_t segment) { return data_[segment]; }

void Block::ensure_rows(std::size_t segment, std::size_t rows) const {
  const std::size_t cols = layout_.segments[segment].cols;
  if (cols == 0 || data_[segment].size() >= rows * cols) return;
  if (evolved_) {
    throw ConfigError("cannot extend a block whose contents were moved by Crank-Nicolson");
  }
  StreamKey k = key_;
  k.segment = segment;
  data_[segment] = generate_segment(layout_.kind, rng_kind_, k, rows, cols,
                                    layout_.index_bound);
}

BlockedRandomness::BlockedRandomness(std::vector<BlockLayout> layouts, RngKind rng_kind,
                                     std::uint64_t master_seed)
    : layouts_(std::move(layouts)),
      counters_(layouts_.size(), 0),
      rng_kind_(rng_kind),
      master_seed_(master_seed) {
  blocks_.reserve(layouts_.size());
  for (std::size_t k = 0; k < layouts_.size(); ++k) {
    blocks_.emplace_back(layouts_[k], rng_kind_, StreamKey{master_seed_, k, 0, 0, 0});
  }
}

StreamKey BlockedRandomness::next_key(std::size_t k) const {
  return StreamKey{master_seed_, k, counters_.at(k) + 1, 0, kAuxiliaryTag};
}

Block BlockedRandomness::refresh(std::size_t k) {
  Block fresh(layouts_.at(k), rng_kind_, next_key(k));
  ++counters_[k];
  std::swap(blocks_[k], fresh);
  return fresh;
}

void BlockedRandomness::restore(std::size_t k, Block previous) {
  blocks_.at(k) = std::move(previous);
}

std::vector<Block> BlockedRandomness::cn_move(double rho) {
  if (rng_kind_ == RngKind::rqmc) {
    throw ConfigError("Crank-Nicolson moves are not defined for RQMC randomness");
  }
  std::vector<Block> previous = blocks_;
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    if (layouts_[k].kind != BlockKind::standard_normal) {
      throw ConfigError("Crank-Nicolson moves need standard normal blocks");
    }
    const Block eps(layouts_[k], rng_kind_, next_key(k));
    ++counters_[k];
    Block& b = blocks_[k];
    for (std::size_t j = 0; j < b.segment_count(); ++j) {
      auto u = b.mutable_segment(j);
      const auto e = eps.segment(j);
      const auto moved = cn_update(u, rho, e);
      std::copy(moved.begin(), moved.end(), u.begin());
    }
    b.mark_evolved();
  }
  return previous;
}

void BlockedRandomness::restore_all(std::vector<Block> previous) {
  blocks_ = std::move(previous);
}

std::vector<double> cn_update(std::span<const double> u, double rho,
                              std::span<const double> eps) {
  if (u.size() != eps.size()) {
    throw std::invalid_argument("cn_update: shape mismatch (" + std::to_string(u.size()) +
                                " vs " + std::to_string(eps.size()) + ")");
  }
  if (!(rho >= 0.0 && rho <= 1.0)) {
    throw std::invalid_argument("cn_update: correlation must lie in [0, 1]");
  }
  const double s = std::sqrt(1.0 - rho * rho);
  std::vector<double> out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = rho * u[i] + s * eps[i];
  return out;
}

// ---------------------------------------------------------------------------
// Variance-rate probe

ProbeIntegrand parse_probe_integrand(const std::string& name) {
  if (name == "product") return ProbeIntegrand::product;
  if (name == "exponential") return ProbeIntegrand::exponential;
  if (name == "constant") return ProbeIntegrand::constant;
  throw ConfigError("unknown probe integrand '" + name + "'");
}

namespace {

double probe_value(ProbeIntegrand f, std::span<const double> u) {
  switch (f) {
    case ProbeIntegrand::product: {
      double p = 1.0;
      for (double x : u) p *= 1.0 + (x - 0.5);
      return p;
    }
    case ProbeIntegrand::exponential: {
      // exp(sum u) / (e - 1)^d has mean 1.
      double s = 0.0;
      for (double x : u) s += x;
      return std::exp(s - static_cast<double>(u.size()) * std::log(std::exp(1.0) - 1.0));
    }
    case ProbeIntegrand::constant:
      return 1.0;
  }
  return 0.0;
}

double fit_slope(std::span<const std::size_t> n, std::span<const double> v) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(n.size());
  for (std::size_t i = 0; i < n.size(); ++i) {
    const double x = std::log(static_cast<double>(n[i]));
    const double y = std::log(v[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace

VarianceRateProbe rqmc_variance_rate_probe(ProbeIntegrand integrand, std::size_t dimension,
                                           std::span<const std::size_t> sample_sizes,
                                           std::size_t replications, std::uint64_t seed) {
  if (replications < 10) {
    throw ConfigError("variance-rate probe needs at least 10 replications");
  }
  if (sample_sizes.size() < 2) throw ConfigError("variance-rate probe needs two or more sizes");
  VarianceRateProbe probe;
  probe.sample_sizes.assign(sample_sizes.begin(), sample_sizes.end());
  for (std::size_t gi = 0; gi < sample_sizes.size(); ++gi) {
    const std::size_t n = sample_sizes[gi];
    if (!is_power_of_two(n)) throw ConfigError("probe sizes must be powers of 2");
    std::vector<double> mc(replications), qmc(replications);
    std::vector<double> point(dimension);
    for (std::size_t r = 0; r < replications; ++r) {
      Rng rng(StreamKey{seed, gi, r, 0, kSimulationTag});
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (auto& x : point) x = rng.uniform();
        acc += probe_value(integrand, point);
      }
      mc[r] = acc / static_cast<double>(n);

      const auto net = generate_scrambled_net({n, dimension, derive_seed(seed, gi * 100003 + r)});
      acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += probe_value(integrand, std::span<const double>(net).subspan(i * dimension, dimension));
      }
      qmc[r] = acc / static_cast<double>(n);
    }
    auto variance = [](const std::vector<double>& x) {
      const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
      double ss = 0.0;
      for (double v : x) ss += (v - mean) * (v - mean);
      return ss / static_cast<double>(x.size() - 1);
    };
    probe.mc_variance.push_back(variance(mc));
    probe.rqmc_variance.push_back(variance(qmc));
  }
  const bool degenerate =
      std::all_of(probe.mc_variance.begin(), probe.mc_variance.end(), [](double v) { return v == 0.0; });
  if (degenerate) {
    probe.mc_slope = probe.rqmc_slope = 0.0;
  } else {
    probe.mc_slope = fit_slope(probe.sample_sizes, probe.mc_variance);
    probe.rqmc_slope = fit_slope(probe.sample_sizes, probe.rqmc_variance);
  }
  return probe;
}

}  // namespace bpm
