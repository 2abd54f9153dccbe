#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bitturbo/tensor.hpp"

namespace bitturbo {

/// How a model's decoder parameters are represented.
struct QuantMode {
  enum class Kind : std::uint32_t { real = 0, binary = 1, ternary = 2, post_quant = 3 };

  Kind kind = Kind::real;
  int bits = 64;                   // q for post_quant; 1 for binary/ternary; 64 for real
  bool quantize_weights = false;
  bool binary_activations = false;

  static QuantMode real();
  static QuantMode binary();
  static QuantMode ternary();
  /// Throws std::invalid_argument unless q is 1, 2, 4 or 8.
  static QuantMode post_quant(int q);
  static QuantMode parse(const std::string& name);

  /// Binary and ternary decoders are the ones that can be packed for bit-op inference.
  bool is_bit_mode() const { return kind == Kind::binary || kind == Kind::ternary; }
  std::string name() const;
  void validate() const;

  bool operator==(const QuantMode&) const = default;
};

inline constexpr double kTernaryMultiplier = 0.7;

/// sign with sign(0) = +1.
inline double binarize_value(double r) { return r >= 0.0 ? 1.0 : -1.0; }

/// Ternary cut: 0.7 * mean(|r|) over the whole tensor.
double ternary_threshold(std::span<const double> r, double multiplier = kTernaryMultiplier);

/// +1 if r > delta, -1 if r < -delta, 0 when |r| <= delta.
inline double ternarize_value(double r, double delta) {
  if (r > delta) return 1.0;
  if (r < -delta) return -1.0;
  return 0.0;
}

/// Forward sign; backward straight-through with the |r| <= 1 mask.
Tensor binarize(Tape* tape, const Tensor& r);
/// Forward ternary code; backward identical to binarize.
Tensor ternarize(Tape* tape, const Tensor& r, double multiplier = kTernaryMultiplier);

/// grad_r = grad_b * 1{|r| <= 1}.
Tensor ste_backward(const Tensor& grad_b, const Tensor& r);

/// Trainable shadow weights of a quantized layer.
struct LatentWeights {
  Tensor real;

  Tensor binary_view() const;
  Tensor ternary_view() const;
};

/// Clamps every value to [-1, 1].
void clip_latent(Tensor& w);
inline void clip_latent(LatentWeights& w) { clip_latent(w.real); }

/// Symmetric uniform q-bit codebook with 2^q levels spanning [-scale, scale].
struct PostQuantized {
  int bits = 8;
  double scale = 0.0;
  std::vector<std::uint8_t> codes;
  std::vector<double> values;
};

/// Value of level `code` for a q-bit codebook of the given scale.
double post_quant_level(std::uint32_t code, int bits, double scale);

/// Maps each weight to the nearest codebook level (ties: smaller magnitude,
/// then positive). scale = max|w|. Throws on empty input or unsupported q.
PostQuantized post_quantize(std::span<const double> w, int bits);
Tensor post_quantize(const Tensor& w, int bits);

}  // namespace bitturbo
