#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., "Parallel random
// numbers: as easy as 1, 2, 3"). Every (key, counter) pair maps to an
// independent block of four 32-bit words, so any draw can be computed
// directly without walking a sequential state.

#include <array>
#include <cstdint>

namespace photon_scale {

class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter generate(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      ctr = single_round(ctr, key);
    }
    return ctr;
  }

  static constexpr Key key_from_seed(std::uint64_t seed) noexcept {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static constexpr Counter single_round(const Counter& c, const Key& k) noexcept {
    const std::uint64_t p0 = std::uint64_t{kMul0} * c[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
};

/// 53-bit uniform double in [0, 1) from two 32-bit words.
constexpr double uniform_from_words(std::uint32_t hi, std::uint32_t lo) noexcept {
  const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;
  return static_cast<double>(bits) * 0x1.0p-53;
}

/// SplitMix64 finalizer; used to derive independent sub-seeds (per scene,
/// per colour channel) from one master seed.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Stream of uniforms owned by one (frame, pixel) cell. Block b of the cell is
/// Philox(counter = {pixel, frame_lo, frame_hi, b}, key = seed); each block
/// yields two 53-bit uniforms.
class CellStream {
 public:
  CellStream(std::uint64_t seed, std::uint64_t frame_index, std::uint32_t pixel_index) noexcept
      : key_(Philox4x32::key_from_seed(seed)),
        base_{pixel_index, static_cast<std::uint32_t>(frame_index),
              static_cast<std::uint32_t>(frame_index >> 32), 0u} {}

  /// Next uniform in [0, 1).
  double next() noexcept {
    if (cursor_ == 0) {
      Philox4x32::Counter ctr = base_;
      ctr[3] = block_++;
      words_ = Philox4x32::generate(ctr, key_);
    }
    const double u = uniform_from_words(words_[cursor_ * 2], words_[cursor_ * 2 + 1]);
    cursor_ ^= 1u;
    return u;
  }

 private:
  Philox4x32::Key key_;
  Philox4x32::Counter base_;
  Philox4x32::Counter words_{};
  std::uint32_t block_ = 0;
  unsigned cursor_ = 0;
};

/// First uniform of a cell's stream, without constructing the stream object.
inline double first_uniform(std::uint64_t seed, std::uint64_t frame_index,
                            std::uint32_t pixel_index) noexcept {
  const auto w = Philox4x32::generate(
      {pixel_index, static_cast<std::uint32_t>(frame_index),
       static_cast<std::uint32_t>(frame_index >> 32), 0u},
      Philox4x32::key_from_seed(seed));
  return uniform_from_words(w[0], w[1]);
}

}  // namespace photon_scale
