#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "bitturbo/ops.hpp"

namespace bitturbo {

// Bit convention everywhere: +1 <-> 1, -1 <-> 0, LSB-first within a word,
// words in ascending index order. Bits past n_valid are always zero.

struct BitPlane {
  std::vector<std::uint64_t> words;
  std::size_t n_valid = 0;

  static std::size_t words_for(std::size_t n) { return (n + 63) / 64; }
  bool bit(std::size_t i) const { return (words[i / 64] >> (i % 64)) & 1u; }
  /// Mask of meaningful bits in word `w`.
  std::uint64_t valid_mask(std::size_t w) const;
  /// ceil(n_valid/64) words and zero padding bits.
  bool well_formed() const;

  bool operator==(const BitPlane&) const = default;
};

/// Throws std::invalid_argument on any value other than -1 or +1.
BitPlane pack_bits(std::span<const double> v);
std::vector<double> unpack_bits(const BitPlane& plane);

/// Sum of a_i * w_i under ±1 semantics: 2*popcount(xnor(a,w) & valid) - n.
std::int64_t xnor_dot(const BitPlane& a, const BitPlane& w);

/// Sum of t_i * a_i with t_i in {-1,0,+1} given as (sign, support mask).
/// Throws on length mismatch or a sign bit set outside the mask.
std::int64_t ternary_dot(const BitPlane& a, const BitPlane& w_sign, const BitPlane& w_mask);

/// Sign and support planes of a ternary vector. Sign bits under zero weights are 0.
struct TernaryPlanes {
  BitPlane sign;
  BitPlane mask;
};
TernaryPlanes pack_ternary(std::span<const double> t);

/// Binary activations of one sample: for each position j a bit vector over
/// channels, stored position-major so a kernel window is a contiguous run.
class PackedActivations {
 public:
  PackedActivations() = default;
  PackedActivations(std::size_t channels, std::size_t positions);

  /// x is [channels * positions] channel-major; bit = 1 iff x >= 0.
  static PackedActivations from_values(std::span<const double> x, std::size_t channels, std::size_t positions);
  /// Back to ±1 values, channel-major.
  std::vector<double> to_values() const;

  std::size_t channels() const noexcept { return channels_; }
  std::size_t positions() const noexcept { return positions_; }
  std::size_t words_per_position() const noexcept { return wpp_; }
  bool bit(std::size_t channel, std::size_t position) const;
  void set(std::size_t channel, std::size_t position);

  std::span<const std::uint64_t> words() const noexcept { return words_; }
  std::span<std::uint64_t> words() noexcept { return words_; }

  bool operator==(const PackedActivations&) const = default;

 private:
  std::size_t channels_ = 0;
  std::size_t positions_ = 0;
  std::size_t wpp_ = 0;
  std::vector<std::uint64_t> words_;
};

enum class WeightKind : std::uint32_t { binary = 1, ternary = 2 };

/// Bit-packed binary or ternary 1D convolution. For output channel o and tap t
/// the sign and mask planes are bit vectors over input channels.
struct PackedConvLayer {
  ConvLayerSpec spec;
  WeightKind kind = WeightKind::binary;
  std::size_t words_per_tap = 0;
  std::vector<std::uint64_t> sign_words;  // [c_out][k][words_per_tap]
  std::vector<std::uint64_t> mask_words;  // same layout; all valid bits set for binary layers
  std::vector<std::int32_t> bias_code;    // [c_out], zero when the layer has no bias

  /// weights: [c_out, c_in, k] codes in {-1,+1} (binary) or {-1,0,+1} (ternary);
  /// bias: [c_out] codes or empty.
  static PackedConvLayer from_codes(const ConvLayerSpec& spec, WeightKind kind, std::span<const double> weights,
                                    std::span<const double> bias);

  BitPlane sign_plane(std::size_t o, std::size_t t) const;
  BitPlane mask_plane(std::size_t o, std::size_t t) const;
  /// Weight code at (o, i, t).
  int weight(std::size_t o, std::size_t i, std::size_t t) const;
  /// Negates every weight and the bias of output channel o.
  void negate_output(std::size_t o);
  /// Largest |pre-activation| this layer can produce.
  std::int64_t max_magnitude() const;
  /// Throws std::invalid_argument when the invariants are violated.
  void validate() const;

  bool operator==(const PackedConvLayer&) const = default;
};

/// Integer pre-activations [c_out * h], channel-major. Out-of-range taps at the
/// block edges are skipped (a pad contributes 0).
std::vector<std::int32_t> packed_preactivation(const PackedActivations& x, const PackedConvLayer& layer);

/// Fused conv + sign: output bit = 1 iff pre-activation >= thresholds[o].
PackedActivations packed_conv1d(const PackedActivations& x, const PackedConvLayer& layer,
                                std::span<const std::int32_t> thresholds);

/// Smallest integer x in [lo, hi] with fires(x), for fires monotone
/// nondecreasing in x; hi + 1 when it never fires.
std::int64_t fold_threshold(const std::function<bool(std::int64_t)>& fires, std::int64_t lo, std::int64_t hi);

/// Folds an inference-mode batchnorm followed by sign into integer thresholds.
/// Channels with a negative effective scale get their weights negated so every
/// comparison is `pre >= threshold`. Agrees bit-exactly with
/// batchnorm_eval(pre, ...) >= 0 for every reachable pre-activation.
std::vector<std::int32_t> fold_batchnorm_sign(PackedConvLayer& layer, std::span<const double> mean,
                                              std::span<const double> inv_std, std::span<const double> gamma,
                                              std::span<const double> beta);

}  // namespace bitturbo
