#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bitturbo/cost.hpp"
#include "bitturbo/ops.hpp"
#include "bitturbo/quantize.hpp"
#include "bitturbo/tensor.hpp"

namespace bitturbo {

/// Architecture of a rate-1/3 interleaved encoder and M-iteration decoder.
struct CodecShape {
  std::size_t block_length = 100;  // K
  std::size_t iterations = 6;      // M
  std::size_t feature_size = 5;    // F
  std::size_t filters = 100;
  std::size_t kernel = 5;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 5;

  /// Full-size hyperparameters: K=100, M=6, F=5, 100 filters, kernel 5.
  static CodecShape full();
  /// Same topology with reduced widths: 16 filters, M=2.
  static CodecShape desk();

  std::size_t decoder_input_channels() const { return 2 + feature_size; }
  void validate() const;

  bool operator==(const CodecShape&) const = default;
};

/// A fixed permutation of block positions shared by encoder and decoder.
class Interleaver {
 public:
  Interleaver() = default;
  /// Seeded Fisher-Yates shuffle of [0, K).
  static Interleaver random(std::size_t block_length, std::uint64_t seed);
  static Interleaver identity(std::size_t block_length);
  /// Throws std::invalid_argument unless perm is a bijection on [0, K).
  static Interleaver from_permutation(std::vector<std::uint32_t> perm, std::uint64_t seed = 0);

  std::span<const std::uint32_t> permutation() const { return perm_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t size() const { return perm_.size(); }

  /// x^pi[..., j] = x[..., perm[j]]
  Tensor interleave(Tape* tape, const Tensor& x) const;
  Tensor deinterleave(Tape* tape, const Tensor& x) const;

  bool operator==(const Interleaver&) const = default;

 private:
  std::vector<std::uint32_t> perm_;
  std::uint64_t seed_ = 0;
};

struct ConvLayer {
  ConvLayerSpec spec;
  Tensor weight;  // [c_out, c_in, k]; latent reals for binary/ternary decoders
  Tensor bias;    // [c_out] or undefined
};

/// Hidden conv layers (each followed by batchnorm and an activation) and a 1x1 linear head.
struct ConvBlock {
  std::vector<ConvLayer> layers;
  std::vector<BatchNorm> norms;
  ConvLayer head;
  /// [1] real scale on the head output of binary-activation decoder blocks
  /// (undefined elsewhere). The integer head counts would otherwise reach the
  /// next stage, and the final sigmoid, far from unit scale.
  Tensor gain;
};

struct CodecModel {
  CodecShape shape;
  QuantMode mode;
  Interleaver interleaver;
  std::vector<ConvBlock> encoder;  // f1, f2, f3
  BatchNorm power;                 // per-stream power normalization, no affine
  std::vector<ConvBlock> decoder;  // g_{i,1}, g_{i,2} at 2i and 2i+1

  const ConvBlock& decoder_block(std::size_t iteration, std::size_t which) const {
    return decoder[2 * iteration + which];
  }
  std::vector<Tensor> encoder_parameters() const;
  std::vector<Tensor> decoder_parameters() const;
  /// Conv weights and biases of the decoder (the latent weights in QAT modes).
  /// Excludes normalization parameters and gains.
  std::vector<Tensor> decoder_weights() const;

  /// Deep copy: no tensor storage is shared with the source.
  CodecModel clone() const;
};

inline constexpr double kPowerNormEps = 1e-10;

CodecModel make_model(const CodecShape& shape, const QuantMode& mode, std::uint64_t seed);
/// Fresh decoder weights drawn from `seed`, leaving encoder and interleaver untouched.
void reinitialize_decoder(CodecModel& model, const QuantMode& mode, std::uint64_t seed);

/// The three streams before power normalization, [b, 3, K].
Tensor encode_streams(Tape* tape, const Tensor& u, CodecModel& model, bool training);
/// Codewords x = [f1(u); f2(u); f3(pi(u))] with zero mean and unit power per stream.
/// Throws std::invalid_argument unless u is [b, 1, K] with entries in {-1,+1}.
Tensor encode(Tape* tape, const Tensor& u, CodecModel& model, bool training);
Tensor encode(const Tensor& u, const CodecModel& model);

/// Iterative decoder returning bit probabilities [b, 1, K].
Tensor decode_soft(Tape* tape, const Tensor& z, CodecModel& model, bool training);
Tensor decode_soft(const Tensor& z, const CodecModel& model);

struct DecodeResult {
  Tensor soft;  // P(u = +1)
  Tensor hard;  // ±1
};

/// +1 iff p >= 0.5.
Tensor hard_decision(const Tensor& soft);
DecodeResult decode(const Tensor& z, const CodecModel& model);

/// Decoder weights as seen by the forward pass: latent reals quantized for
/// binary/ternary modes, stored values otherwise.
Tensor effective_weight(Tape* tape, const Tensor& w, const QuantMode& mode);

/// Post-training baseline: per-tensor symmetric q-bit quantization of every
/// decoder weight and bias of a trained real model.
CodecModel post_quantize_model(const CodecModel& real_model, int bits);

/// Re-estimates the frozen power statistics from `batches` seeded batches.
void calibrate_power(CodecModel& model, std::size_t batches, std::size_t batch_size, std::uint64_t seed);

/// Convolution shapes of the decoder for cost accounting.
std::vector<LayerShape> decoder_layer_shapes(const CodecShape& shape);
std::vector<LayerShape> encoder_layer_shapes(const CodecShape& shape);
std::uint64_t parameter_count(std::span<const LayerShape> layers);

/// Random ±1 message blocks [b, 1, K] from a counter stream.
Tensor random_messages(std::size_t batch, std::size_t block_length, std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t first_index = 0);

}  // namespace bitturbo
