#pragma once

#include <cstdint>
#include <vector>

#include "bitturbo/bitkernel.hpp"
#include "bitturbo/codec.hpp"

namespace bitturbo {

/// One decoder block ready for bit-op inference.
///
/// The first layer sees real channel values, so it runs as a float conv with
/// quantized weight codes followed by inference batchnorm and sign. Everything
/// after it is packed: hidden layers with folded integer thresholds, then the
/// 1x1 head whose integer count is multiplied by the block gain.
struct PackedBlock {
  ConvLayerSpec input_spec;
  Tensor input_codes;  // [filters, c_in, k] in {-1,0,+1}
  BatchNorm input_norm;
  std::vector<PackedConvLayer> hidden;
  std::vector<std::vector<std::int32_t>> thresholds;
  PackedConvLayer head;
  double gain = 1.0;

  bool operator==(const PackedBlock& other) const;
};

/// The deployable decoder: latent weights dropped, only codes, thresholds and
/// the first-layer normalization constants kept.
struct PackedDecoder {
  CodecShape shape;
  QuantMode mode;
  Interleaver interleaver;
  std::vector<PackedBlock> blocks;  // 2M, same order as CodecModel::decoder

  /// Bit probabilities [b, 1, K]; z is [b, 3, K].
  Tensor decode_soft(const Tensor& z) const;
  DecodeResult decode(const Tensor& z) const;

  /// Bits of packed weight and bias codes (one per parameter).
  std::uint64_t weight_bits() const;
  /// Bits of everything else: thresholds (32 each), first-layer normalization
  /// constants (4 x 64 per channel) and one 64-bit gain per block.
  std::uint64_t aux_bits() const;

  bool operator==(const PackedDecoder& other) const;
};

/// Converts a binary or ternary model's decoder into packed form. Throws
/// std::invalid_argument for real or post-quantized models.
PackedDecoder freeze_for_edge(const CodecModel& model);

}  // namespace bitturbo
