#include "bitturbo/codec.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "bitturbo/rng.hpp"

namespace bitturbo {
namespace {

constexpr std::uint64_t kStreamInterleaver = 0x494e544c;  // "INTL"
constexpr std::uint64_t kStreamEncoder = 0x454e4357;      // "ENCW"
constexpr std::uint64_t kStreamDecoder = 0x44454357;      // "DECW"
constexpr std::uint64_t kStreamCalibrate = 0x43414c42;    // "CALB"

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

Tensor uniform_tensor(Shape shape, double bound, RngCursor& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

ConvLayer make_layer(const ConvLayerSpec& spec, RngCursor& rng) {
  ConvLayer layer;
  layer.spec = spec;
  const double bound = 1.0 / std::sqrt(static_cast<double>(spec.c_in * spec.k));
  layer.weight = uniform_tensor({spec.c_out, spec.c_in, spec.k}, bound, rng);
  if (spec.has_bias) layer.bias = uniform_tensor({spec.c_out}, bound, rng);
  return layer;
}

ConvBlock make_block(std::size_t c_in, std::size_t filters, std::size_t kernel, std::size_t hidden_layers,
                     std::size_t c_out, Activation act, RngCursor& rng) {
  ConvBlock block;
  std::size_t channels = c_in;
  for (std::size_t l = 0; l < hidden_layers; ++l) {
    block.layers.push_back(make_layer({channels, filters, kernel, false, act}, rng));
    block.norms.push_back(BatchNorm::affine(filters));
    channels = filters;
  }
  block.head = make_layer({channels, c_out, 1, true, Activation::linear}, rng);
  return block;
}

std::vector<ConvBlock> make_decoder(const CodecShape& shape, const QuantMode& mode, std::uint64_t seed) {
  RngCursor rng(seed, kStreamDecoder);
  const Activation act = mode.binary_activations ? Activation::sign : Activation::elu;
  std::vector<ConvBlock> blocks;
  for (std::size_t i = 0; i < shape.iterations; ++i) {
    for (std::size_t which = 0; which < 2; ++which) {
      const bool last = i + 1 == shape.iterations && which == 1;
      blocks.push_back(make_block(shape.decoder_input_channels(), shape.filters, shape.kernel, shape.decoder_layers,
                                  last ? 1 : shape.feature_size, act, rng));
      if (mode.binary_activations) {
        // Unit-order messages between stages; the final block starts small so
        // an untrained decoder outputs probabilities near 0.5.
        const double f = static_cast<double>(shape.filters);
        blocks.back().gain = Tensor({1}, last ? 1.0 / f : 1.0 / std::sqrt(f));
      }
    }
  }
  return blocks;
}

ConvLayer clone_layer(const ConvLayer& l) { return {l.spec, l.weight.clone(), l.bias.clone()}; }

BatchNorm clone_norm(const BatchNorm& bn) {
  BatchNorm out = bn;
  out.gamma = bn.gamma.clone();
  out.beta = bn.beta.clone();
  return out;
}

ConvBlock clone_block(const ConvBlock& b) {
  ConvBlock out;
  for (const ConvLayer& l : b.layers) out.layers.push_back(clone_layer(l));
  for (const BatchNorm& n : b.norms) out.norms.push_back(clone_norm(n));
  out.head = clone_layer(b.head);
  out.gain = b.gain.clone();
  return out;
}

void collect(const ConvBlock& b, bool include_norms, std::vector<Tensor>& out) {
  for (const ConvLayer& l : b.layers) {
    out.push_back(l.weight);
    if (l.bias.defined()) out.push_back(l.bias);
  }
  if (include_norms) {
    for (const BatchNorm& n : b.norms) {
      out.push_back(n.gamma);
      out.push_back(n.beta);
    }
  }
  out.push_back(b.head.weight);
  if (b.head.bias.defined()) out.push_back(b.head.bias);
  if (include_norms && b.gain.defined()) out.push_back(b.gain);
}

struct BlockStyle {
  const QuantMode* mode = nullptr;  // null: plain real block
  bool binary_activations = false;
};

Tensor weight_for(Tape* tape, const Tensor& w, const BlockStyle& style) {
  if (!w.defined() || style.mode == nullptr) return w;
  return effective_weight(tape, w, *style.mode);
}

// `train` is non-null in training mode; it aliases `block` and receives
// running-statistic updates.
Tensor run_block(Tape* tape, const Tensor& input, const ConvBlock& block, ConvBlock* train, const BlockStyle& style) {
  Tensor x = input;
  for (std::size_t l = 0; l < block.layers.size(); ++l) {
    const ConvLayer& layer = block.layers[l];
    Tensor y = conv1d(tape, x, weight_for(tape, layer.weight, style), weight_for(tape, layer.bias, style), layer.spec);
    y = train ? batchnorm1d(tape, y, train->norms[l], true) : batchnorm1d(tape, y, block.norms[l]);
    x = style.binary_activations ? binarize(tape, y) : elu(tape, y);
  }
  Tensor out = conv1d(tape, x, weight_for(tape, block.head.weight, style), weight_for(tape, block.head.bias, style),
                      block.head.spec);
  if (block.gain.defined()) out = scale_by(tape, out, block.gain);
  return out;
}

void check_messages(const Tensor& u, const CodecShape& shape) {
  require(u.defined() && u.rank() == 3 && u.dim(1) == 1 && u.dim(2) == shape.block_length,
          "encode: expected messages [batch, 1, " + std::to_string(shape.block_length) + "], got " +
              (u.defined() ? shape_string(u.shape()) : std::string("undefined")));
  for (double v : u.values()) require(v == 1.0 || v == -1.0, "encode: message entries must be +1 or -1");
}

Tensor encode_streams_impl(Tape* tape, const Tensor& u, const CodecModel& model, CodecModel* train) {
  check_messages(u, model.shape);
  const BlockStyle style{};
  const Tensor u_pi = model.interleaver.interleave(tape, u);
  const Tensor inputs[3] = {u, u, u_pi};
  std::vector<Tensor> streams;
  for (std::size_t s = 0; s < 3; ++s) {
    streams.push_back(run_block(tape, inputs[s], model.encoder[s], train ? &train->encoder[s] : nullptr, style));
  }
  return concat_channels(tape, streams);
}

Tensor encode_impl(Tape* tape, const Tensor& u, const CodecModel& model, CodecModel* train) {
  const Tensor raw = encode_streams_impl(tape, u, model, train);
  return train ? batchnorm1d(tape, raw, train->power, true) : batchnorm1d(tape, raw, model.power);
}

Tensor decode_impl(Tape* tape, const Tensor& z, const CodecModel& model, CodecModel* train) {
  const CodecShape& s = model.shape;
  require(z.defined() && z.rank() == 3 && z.dim(1) == 3 && z.dim(2) == s.block_length,
          "decode: expected channel outputs [batch, 3, " + std::to_string(s.block_length) + "], got " +
              (z.defined() ? shape_string(z.shape()) : std::string("undefined")));
  require(model.decoder.size() == 2 * s.iterations,
          "decode: model holds " + std::to_string(model.decoder.size()) + " decoder blocks but M = " +
              std::to_string(s.iterations));
  const BlockStyle style{&model.mode, model.mode.binary_activations};
  const Interleaver& pi = model.interleaver;

  const Tensor z1 = slice_channels(tape, z, 0, 1);
  const Tensor z2 = slice_channels(tape, z, 1, 1);
  const Tensor z3 = slice_channels(tape, z, 2, 1);
  const Tensor z1_pi = pi.interleave(tape, z1);

  Tensor prior({z.dim(0), s.feature_size, s.block_length}, 0.0);
  Tensor logits;
  for (std::size_t i = 0; i < s.iterations; ++i) {
    const std::size_t first = 2 * i, second = 2 * i + 1;
    const Tensor in1[3] = {z1, z2, prior};
    const Tensor posterior = run_block(tape, concat_channels(tape, in1), model.decoder[first],
                                       train ? &train->decoder[first] : nullptr, style);
    const Tensor in2[3] = {z1_pi, z3, pi.interleave(tape, posterior)};
    const Tensor out = run_block(tape, concat_channels(tape, in2), model.decoder[second],
                                 train ? &train->decoder[second] : nullptr, style);
    if (i + 1 < s.iterations) {
      prior = pi.deinterleave(tape, out);
    } else {
      logits = pi.deinterleave(tape, out);
    }
  }
  return sigmoid(tape, logits);
}

}  // namespace

CodecShape CodecShape::full() { return {}; }

CodecShape CodecShape::desk() {
  CodecShape s;
  s.filters = 16;
  s.iterations = 2;
  return s;
}

void CodecShape::validate() const {
  require(block_length >= 1, "block_length: must be >= 1");
  require(block_length <= 0xffffffffu, "block_length: too large");
  require(iterations >= 1, "iterations: must be >= 1");
  require(feature_size >= 1, "feature_size: must be >= 1");
  require(filters >= 1, "filters: must be >= 1");
  require(kernel % 2 == 1, "kernel: must be odd");
  require(encoder_layers >= 1, "encoder_layers: must be >= 1");
  require(decoder_layers >= 1, "decoder_layers: must be >= 1");
}

Interleaver Interleaver::random(std::size_t block_length, std::uint64_t seed) {
  Interleaver iv;
  iv.seed_ = seed;
  iv.perm_.resize(block_length);
  std::iota(iv.perm_.begin(), iv.perm_.end(), 0u);
  RngCursor rng(seed, kStreamInterleaver);
  for (std::size_t i = block_length; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(iv.perm_[i - 1], iv.perm_[j]);
  }
  return iv;
}

Interleaver Interleaver::identity(std::size_t block_length) {
  Interleaver iv;
  iv.perm_.resize(block_length);
  std::iota(iv.perm_.begin(), iv.perm_.end(), 0u);
  return iv;
}

Interleaver Interleaver::from_permutation(std::vector<std::uint32_t> perm, std::uint64_t seed) {
  std::vector<bool> seen(perm.size(), false);
  for (std::uint32_t p : perm) {
    require(p < perm.size() && !seen[p], "interleaver: not a permutation");
    seen[p] = true;
  }
  Interleaver iv;
  iv.perm_ = std::move(perm);
  iv.seed_ = seed;
  return iv;
}

Tensor Interleaver::interleave(Tape* tape, const Tensor& x) const { return gather_positions(tape, x, perm_); }

Tensor Interleaver::deinterleave(Tape* tape, const Tensor& x) const { return scatter_positions(tape, x, perm_); }

std::vector<Tensor> CodecModel::encoder_parameters() const {
  std::vector<Tensor> out;
  for (const ConvBlock& b : encoder) collect(b, true, out);
  return out;
}

std::vector<Tensor> CodecModel::decoder_parameters() const {
  std::vector<Tensor> out;
  for (const ConvBlock& b : decoder) collect(b, true, out);
  return out;
}

std::vector<Tensor> CodecModel::decoder_weights() const {
  std::vector<Tensor> out;
  for (const ConvBlock& b : decoder) collect(b, false, out);
  return out;
}

CodecModel CodecModel::clone() const {
  CodecModel out;
  out.shape = shape;
  out.mode = mode;
  out.interleaver = interleaver;
  for (const ConvBlock& b : encoder) out.encoder.push_back(clone_block(b));
  out.power = clone_norm(power);
  for (const ConvBlock& b : decoder) out.decoder.push_back(clone_block(b));
  return out;
}

CodecModel make_model(const CodecShape& shape, const QuantMode& mode, std::uint64_t seed) {
  shape.validate();
  mode.validate();
  CodecModel model;
  model.shape = shape;
  model.mode = mode;
  model.interleaver = Interleaver::random(shape.block_length, seed);
  RngCursor rng(seed, kStreamEncoder);
  for (std::size_t s = 0; s < 3; ++s) {
    model.encoder.push_back(make_block(1, shape.filters, shape.kernel, shape.encoder_layers, 1, Activation::elu, rng));
  }
  model.power = BatchNorm::plain(3, kPowerNormEps);
  model.decoder = make_decoder(shape, mode, seed);
  return model;
}

void reinitialize_decoder(CodecModel& model, const QuantMode& mode, std::uint64_t seed) {
  mode.validate();
  model.mode = mode;
  model.decoder = make_decoder(model.shape, mode, seed);
}

Tensor effective_weight(Tape* tape, const Tensor& w, const QuantMode& mode) {
  switch (mode.kind) {
    case QuantMode::Kind::binary: return binarize(tape, w);
    case QuantMode::Kind::ternary: return ternarize(tape, w);
    case QuantMode::Kind::real:
    case QuantMode::Kind::post_quant: return w;
  }
  return w;
}

Tensor encode_streams(Tape* tape, const Tensor& u, CodecModel& model, bool training) {
  return encode_streams_impl(tape, u, model, training ? &model : nullptr);
}

Tensor encode(Tape* tape, const Tensor& u, CodecModel& model, bool training) {
  return encode_impl(tape, u, model, training ? &model : nullptr);
}

Tensor encode(const Tensor& u, const CodecModel& model) { return encode_impl(nullptr, u, model, nullptr); }

Tensor decode_soft(Tape* tape, const Tensor& z, CodecModel& model, bool training) {
  return decode_impl(tape, z, model, training ? &model : nullptr);
}

Tensor decode_soft(const Tensor& z, const CodecModel& model) { return decode_impl(nullptr, z, model, nullptr); }

Tensor hard_decision(const Tensor& soft) {
  Tensor hard(soft.shape());
  auto s = soft.values();
  auto h = hard.values();
  for (std::size_t i = 0; i < s.size(); ++i) h[i] = s[i] >= 0.5 ? 1.0 : -1.0;
  return hard;
}

DecodeResult decode(const Tensor& z, const CodecModel& model) {
  Tensor soft = decode_soft(z, model);
  Tensor hard = hard_decision(soft);
  return {std::move(soft), std::move(hard)};
}

CodecModel post_quantize_model(const CodecModel& real_model, int bits) {
  if (real_model.mode.kind != QuantMode::Kind::real) {
    throw std::invalid_argument("post-quantization needs a real-valued model; this one is already " +
                                real_model.mode.name());
  }
  CodecModel out = real_model.clone();
  out.mode = QuantMode::post_quant(bits);
  for (ConvBlock& b : out.decoder) {
    auto quantize_layer = [bits](ConvLayer& l) {
      l.weight = post_quantize(l.weight, bits);
      if (l.bias.defined()) l.bias = post_quantize(l.bias, bits);
    };
    for (ConvLayer& l : b.layers) quantize_layer(l);
    quantize_layer(b.head);
  }
  return out;
}

void calibrate_power(CodecModel& model, std::size_t batches, std::size_t batch_size, std::uint64_t seed) {
  require(batches >= 1 && batch_size >= 1, "calibrate_power: need at least one block");
  const std::size_t k = model.shape.block_length;
  double sums[3] = {0, 0, 0}, squares[3] = {0, 0, 0};
  for (std::size_t b = 0; b < batches; ++b) {
    const Tensor u = random_messages(batch_size, k, seed, kStreamCalibrate, b * batch_size * k);
    const Tensor raw = encode_streams_impl(nullptr, u, model, nullptr);
    auto v = raw.values();
    for (std::size_t n = 0; n < batch_size; ++n) {
      for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t j = 0; j < k; ++j) {
          const double x = v[(n * 3 + s) * k + j];
          sums[s] += x;
          squares[s] += x * x;
        }
      }
    }
  }
  const double count = static_cast<double>(batches * batch_size * k);
  for (std::size_t s = 0; s < 3; ++s) {
    const double mean = sums[s] / count;
    model.power.running_mean[s] = mean;
    model.power.running_var[s] = std::max(0.0, squares[s] / count - mean * mean);
  }
}

std::vector<LayerShape> decoder_layer_shapes(const CodecShape& shape) {
  std::vector<LayerShape> out;
  for (std::size_t i = 0; i < shape.iterations; ++i) {
    for (std::size_t which = 0; which < 2; ++which) {
      std::size_t c = shape.decoder_input_channels();
      for (std::size_t l = 0; l < shape.decoder_layers; ++l) {
        out.push_back({c, shape.filters, shape.kernel, shape.block_length, false});
        c = shape.filters;
      }
      const bool last = i + 1 == shape.iterations && which == 1;
      out.push_back({c, last ? 1 : shape.feature_size, 1, shape.block_length, true});
    }
  }
  return out;
}

std::vector<LayerShape> encoder_layer_shapes(const CodecShape& shape) {
  std::vector<LayerShape> out;
  for (std::size_t s = 0; s < 3; ++s) {
    std::size_t c = 1;
    for (std::size_t l = 0; l < shape.encoder_layers; ++l) {
      out.push_back({c, shape.filters, shape.kernel, shape.block_length, false});
      c = shape.filters;
    }
    out.push_back({c, 1, 1, shape.block_length, true});
  }
  return out;
}

std::uint64_t parameter_count(std::span<const LayerShape> layers) {
  std::uint64_t n = 0;
  for (const LayerShape& l : layers) n += l.params();
  return n;
}

Tensor random_messages(std::size_t batch, std::size_t block_length, std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t first_index) {
  const CounterRng rng(seed, stream);
  Tensor u({batch, 1, block_length});
  auto v = u.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.sign(first_index + i);
  return u;
}

}  // namespace bitturbo
