#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "bitturbo/tensor.hpp"

namespace bitturbo {

// Every op takes a nullable Tape*. Ops are recorded only when a tape is given
// and at least one input requires a gradient; otherwise they run forward-only.

enum class Activation : std::uint32_t { linear = 0, elu = 1, sign = 2, sigmoid = 3 };

std::string_view to_string(Activation a);

/// Shape metadata of a same-padded 1D convolution.
struct ConvLayerSpec {
  std::size_t c_in = 1;
  std::size_t c_out = 1;
  std::size_t k = 1;
  bool has_bias = false;
  Activation activation = Activation::linear;

  std::size_t padding() const { return (k - 1) / 2; }
  /// Throws std::invalid_argument on even k or zero channels.
  void validate() const;

  bool operator==(const ConvLayerSpec&) const = default;
};

/// y[n,o,j] = bias[o] + sum_{i,t} w[o,i,t] * x[n,i,j+t-pad], zero padded.
/// `bias` may be undefined when spec.has_bias is false.
Tensor conv1d(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& bias, const ConvLayerSpec& spec);

Tensor elu(Tape* tape, const Tensor& x);
Tensor sigmoid(Tape* tape, const Tensor& x);

/// Per-channel normalization parameters and running statistics.
struct BatchNorm {
  Tensor gamma;  // [c]; undefined for affine-free normalization
  Tensor beta;   // [c]
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNorm affine(std::size_t channels, double eps = 1e-5);
  static BatchNorm plain(std::size_t channels, double eps);
  std::size_t channels() const { return running_mean.size(); }
  bool has_affine() const { return gamma.defined(); }
};

/// The one inference-mode normalization formula; freeze-time threshold folding
/// evaluates this same expression so packed and float paths agree bit-exactly.
inline double batchnorm_eval(double x, double mean, double inv_std, double gamma, double beta) {
  return (x - mean) * inv_std * gamma + beta;
}

double batchnorm_inv_std(double var, double eps);

/// Standardizes each channel over (batch, length). In training mode uses batch
/// moments and updates running statistics; otherwise uses running statistics.
Tensor batchnorm1d(Tape* tape, const Tensor& x, BatchNorm& bn, bool training);
/// Inference-mode overload; never touches the running statistics.
Tensor batchnorm1d(Tape* tape, const Tensor& x, const BatchNorm& bn);

/// Mean binary cross-entropy with p clamped to [1e-7, 1-1e-7]. Targets must be 0 or 1.
Tensor bce_loss(Tape* tape, const Tensor& p, const Tensor& target);
inline constexpr double kBceEps = 1e-7;

Tensor sum(Tape* tape, const Tensor& x);
Tensor scale(Tape* tape, const Tensor& x, double factor);
/// x * s for a one-element tensor s; differentiable in both.
Tensor scale_by(Tape* tape, const Tensor& x, const Tensor& s);
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);

/// Concatenates [b, c_i, h] tensors along the channel axis.
Tensor concat_channels(Tape* tape, std::span<const Tensor> parts);
Tensor slice_channels(Tape* tape, const Tensor& x, std::size_t first, std::size_t count);

/// y[..., j] = x[..., perm[j]] along the last axis.
Tensor gather_positions(Tape* tape, const Tensor& x, std::span<const std::uint32_t> perm);
/// y[..., perm[j]] = x[..., j]; the inverse of gather_positions.
Tensor scatter_positions(Tape* tape, const Tensor& x, std::span<const std::uint32_t> perm);

}  // namespace bitturbo
