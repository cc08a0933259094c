#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace bpm {

/// Philox4x64-10 block function (Salmon et al., SC'11). Pure: maps a
/// 256-bit counter and a 128-bit key to 256 random bits.
using PhiloxCounter = std::array<std::uint64_t, 4>;
using PhiloxKey = std::array<std::uint64_t, 2>;

PhiloxCounter philox4x64(PhiloxCounter counter, PhiloxKey key);

/// Identifies one reproducible random stream. The stream contents are a pure
/// function of this tuple, so any block can be regenerated without replaying
/// the streams that were drawn before it.
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t block = 0;
  std::uint64_t refresh = 0;
  std::uint64_t segment = 0;
  std::uint64_t tag = 0;

  friend bool operator==(const StreamKey&, const StreamKey&) = default;
};

/// Stream tags keep the sampler's own draws apart from auxiliary randomness.
inline constexpr std::uint64_t kAuxiliaryTag = 0;
inline constexpr std::uint64_t kSamplerTag = 1;
inline constexpr std::uint64_t kScrambleTag = 2;
inline constexpr std::uint64_t kSimulationTag = 3;
inline constexpr std::uint64_t kCalibrationTag = 4;

/// Counter-based generator over a StreamKey. Satisfies
/// UniformRandomBitGenerator so it also drives <random> distributions.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(StreamKey key) : key_(key) {}
  explicit Rng(std::uint64_t seed, std::uint64_t tag = kSamplerTag)
      : key_{seed, 0, 0, 0, tag} {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1): never returns 0.
  double uniform_open();
  double normal();
  /// Uniform integer on {0, ..., bound - 1} (Lemire's method, unbiased).
  std::uint64_t below(std::uint64_t bound);

  const StreamKey& key() const { return key_; }
  std::uint64_t position() const { return position_; }

 private:
  StreamKey key_;
  std::uint64_t position_ = 0;
  PhiloxCounter buffer_{};
  int used_ = 4;
};

/// SplitMix64 finaliser; used to derive child seeds.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace bpm
