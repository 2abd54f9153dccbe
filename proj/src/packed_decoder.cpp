#include "bitturbo/packed_decoder.hpp"

#include <stdexcept>
#include <string>

namespace bitturbo {
namespace {

std::vector<double> to_vector(const Tensor& t) {
  if (!t.defined()) return {};
  auto v = t.values();
  return {v.begin(), v.end()};
}

bool same_norm(const BatchNorm& a, const BatchNorm& b) {
  return a.running_mean == b.running_mean && a.running_var == b.running_var && a.eps == b.eps &&
         to_vector(a.gamma) == to_vector(b.gamma) && to_vector(a.beta) == to_vector(b.beta);
}

BatchNorm frozen_copy(const BatchNorm& bn) {
  BatchNorm out = bn;
  out.gamma = bn.gamma.clone();
  out.beta = bn.beta.clone();
  return out;
}

PackedBlock freeze_block(const ConvBlock& block, const QuantMode& mode) {
  const WeightKind kind = mode.kind == QuantMode::Kind::binary ? WeightKind::binary : WeightKind::ternary;
  PackedBlock out;
  out.input_spec = block.layers.front().spec;
  out.input_codes = effective_weight(nullptr, block.layers.front().weight, mode);
  out.input_norm = frozen_copy(block.norms.front());

  for (std::size_t l = 1; l < block.layers.size(); ++l) {
    const ConvLayer& layer = block.layers[l];
    const Tensor codes = effective_weight(nullptr, layer.weight, mode);
    const Tensor bias = layer.bias.defined() ? effective_weight(nullptr, layer.bias, mode) : Tensor();
    PackedConvLayer packed =
        PackedConvLayer::from_codes(layer.spec, kind, codes.values(), bias.defined() ? bias.values() : std::span<const double>());
    const BatchNorm& bn = block.norms[l];
    std::vector<double> inv_std(bn.channels());
    for (std::size_t c = 0; c < inv_std.size(); ++c) inv_std[c] = batchnorm_inv_std(bn.running_var[c], bn.eps);
    out.thresholds.push_back(fold_batchnorm_sign(packed, bn.running_mean, inv_std, bn.gamma.values(), bn.beta.values()));
    out.hidden.push_back(std::move(packed));
  }

  const Tensor head_codes = effective_weight(nullptr, block.head.weight, mode);
  const Tensor head_bias = effective_weight(nullptr, block.head.bias, mode);
  out.head = PackedConvLayer::from_codes(block.head.spec, kind, head_codes.values(), head_bias.values());
  out.gain = block.gain[0];
  return out;
}

// Runs one block on a batch. The first layer uses the very same conv1d and
// batchnorm code as the float decoder, which keeps the two paths bit-identical.
Tensor run_packed_block(const PackedBlock& block, const Tensor& input) {
  const Tensor pre = batchnorm1d(nullptr, conv1d(nullptr, input, block.input_codes, Tensor(), block.input_spec),
                                 block.input_norm);
  const std::size_t batch = input.dim(0), h = input.dim(2);
  const std::size_t filters = block.input_spec.c_out, c_out = block.head.spec.c_out;
  Tensor out({batch, c_out, h});
  auto pv = pre.values();
  auto ov = out.values();
  for (std::size_t n = 0; n < batch; ++n) {
    PackedActivations act = PackedActivations::from_values(pv.subspan(n * filters * h, filters * h), filters, h);
    for (std::size_t l = 0; l < block.hidden.size(); ++l) act = packed_conv1d(act, block.hidden[l], block.thresholds[l]);
    const std::vector<std::int32_t> counts = packed_preactivation(act, block.head);
    double* dst = ov.data() + n * c_out * h;
    for (std::size_t i = 0; i < counts.size(); ++i) dst[i] = static_cast<double>(counts[i]) * block.gain;
  }
  return out;
}

}  // namespace

bool PackedBlock::operator==(const PackedBlock& other) const {
  return input_spec == other.input_spec && to_vector(input_codes) == to_vector(other.input_codes) &&
         same_norm(input_norm, other.input_norm) && hidden == other.hidden && thresholds == other.thresholds &&
         head == other.head && gain == other.gain;
}

bool PackedDecoder::operator==(const PackedDecoder& other) const {
  return shape == other.shape && mode == other.mode && interleaver == other.interleaver &&
         blocks == other.blocks;
}

Tensor PackedDecoder::decode_soft(const Tensor& z) const {
  const CodecShape& s = shape;
  if (!z.defined() || z.rank() != 3 || z.dim(1) != 3 || z.dim(2) != s.block_length) {
    throw std::invalid_argument("packed decode: expected channel outputs [batch, 3, " +
                                std::to_string(s.block_length) + "]");
  }
  if (blocks.size() != 2 * s.iterations) {
    throw std::invalid_argument("packed decode: " + std::to_string(blocks.size()) + " blocks for M = " +
                                std::to_string(s.iterations));
  }
  const Interleaver& pi = interleaver;
  const Tensor z1 = slice_channels(nullptr, z, 0, 1);
  const Tensor z2 = slice_channels(nullptr, z, 1, 1);
  const Tensor z3 = slice_channels(nullptr, z, 2, 1);
  const Tensor z1_pi = pi.interleave(nullptr, z1);

  Tensor prior({z.dim(0), s.feature_size, s.block_length}, 0.0);
  Tensor logits;
  for (std::size_t i = 0; i < s.iterations; ++i) {
    const Tensor in1[3] = {z1, z2, prior};
    const Tensor posterior = run_packed_block(blocks[2 * i], concat_channels(nullptr, in1));
    const Tensor in2[3] = {z1_pi, z3, pi.interleave(nullptr, posterior)};
    const Tensor out = run_packed_block(blocks[2 * i + 1], concat_channels(nullptr, in2));
    if (i + 1 < s.iterations) {
      prior = pi.deinterleave(nullptr, out);
    } else {
      logits = pi.deinterleave(nullptr, out);
    }
  }
  return sigmoid(nullptr, logits);
}

DecodeResult PackedDecoder::decode(const Tensor& z) const {
  Tensor soft = decode_soft(z);
  Tensor hard = hard_decision(soft);
  return {std::move(soft), std::move(hard)};
}

std::uint64_t PackedDecoder::weight_bits() const {
  std::uint64_t bits = 0;
  for (const PackedBlock& b : blocks) {
    bits += b.input_codes.numel();
    for (const PackedConvLayer& l : b.hidden) bits += l.spec.c_out * l.spec.c_in * l.spec.k;
    bits += b.head.spec.c_out * b.head.spec.c_in * b.head.spec.k + b.head.spec.c_out;
  }
  return bits;
}

std::uint64_t PackedDecoder::aux_bits() const {
  std::uint64_t bits = 0;
  for (const PackedBlock& b : blocks) {
    bits += 64 + 4 * 64 * b.input_norm.channels();
    for (const auto& t : b.thresholds) bits += 32 * t.size();
  }
  return bits;
}

PackedDecoder freeze_for_edge(const CodecModel& model) {
  if (!model.mode.is_bit_mode()) {
    throw std::invalid_argument("freeze_for_edge: only binary or ternary decoders can be packed, model is " +
                                model.mode.name());
  }
  PackedDecoder out;
  out.shape = model.shape;
  out.mode = model.mode;
  out.interleaver = model.interleaver;
  for (const ConvBlock& b : model.decoder) out.blocks.push_back(freeze_block(b, model.mode));
  return out;
}

}  // namespace bitturbo
