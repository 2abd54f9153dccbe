#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace bitturbo {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream key from a parent key and a label.
constexpr std::uint64_t derive_key(std::uint64_t parent, std::uint64_t label) noexcept {
  return mix64(mix64(parent) ^ mix64(label + 0x632be59bd9b4e019ULL));
}

/// Counter-based generator: the i-th draw of a stream is a pure function of
/// (key, i), so workers can jump to any index without shared state.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_(derive_key(seed, stream)) {}

  std::uint64_t bits(std::uint64_t index) const noexcept {
    return mix64(key_ + 0xda942042e4dd58b5ULL * (index + 1));
  }

  /// Uniform in (0, 1].
  double uniform_open0(std::uint64_t index) const noexcept {
    return static_cast<double>((bits(index) >> 11) + 1) * 0x1.0p-53;
  }

  /// Uniform in [0, 1).
  double uniform(std::uint64_t index) const noexcept {
    return static_cast<double>(bits(index) >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double uniform(std::uint64_t index, double lo, double hi) const noexcept {
    return lo + (hi - lo) * uniform(index);
  }

  /// Standard normal via the cosine branch of Box-Muller; consumes counters
  /// 2i and 2i+1.
  double normal(std::uint64_t index) const noexcept {
    const double u1 = uniform_open0(2 * index);
    const double u2 = uniform(2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, bound), Lemire multiply-shift reduction.
  std::uint64_t below(std::uint64_t index, std::uint64_t bound) const noexcept {
    const unsigned __int128 product =
        static_cast<unsigned __int128>(bits(index)) * static_cast<unsigned __int128>(bound);
    return static_cast<std::uint64_t>(product >> 64);
  }

  /// ±1 with equal probability.
  double sign(std::uint64_t index) const noexcept { return (bits(index) >> 63) ? 1.0 : -1.0; }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
};

/// Sequential cursor over a CounterRng stream.
class RngCursor {
 public:
  explicit RngCursor(std::uint64_t seed, std::uint64_t stream = 0) noexcept : rng_(seed, stream) {}

  double uniform(double lo, double hi) noexcept { return rng_.uniform(next_++, lo, hi); }
  double normal() noexcept { return rng_.normal(next_++); }
  double sign() noexcept { return rng_.sign(next_++); }
  std::uint64_t below(std::uint64_t bound) noexcept { return rng_.below(next_++, bound); }
  std::uint64_t position() const noexcept { return next_; }

 private:
  CounterRng rng_;
  std::uint64_t next_ = 0;
};

}  // namespace bitturbo
