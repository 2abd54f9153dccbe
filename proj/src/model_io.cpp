#include "bitturbo/model_io.hpp"

#include <stdexcept>
#include <string>

namespace bitturbo {
namespace {

constexpr std::uint32_t kMetaLayout = 1;

void write_tensor(ByteWriter& w, const Tensor& t) { w.f64s(t.values()); }

void read_tensor(ByteReader& r, Tensor& t) {
  const std::vector<double> v = r.f64s(t.numel());
  std::copy(v.begin(), v.end(), t.values().begin());
}

// q-bit codes, LSB-first, preceded by the per-tensor scale.
void write_codes(ByteWriter& w, const Tensor& t, int bits) {
  const PostQuantized q = post_quantize(t.values(), bits);
  w.f64(q.scale);
  w.u64(q.codes.size());
  std::vector<std::uint8_t> packed((q.codes.size() * bits + 7) / 8, 0);
  for (std::size_t i = 0; i < q.codes.size(); ++i) {
    for (int b = 0; b < bits; ++b) {
      if ((q.codes[i] >> b) & 1u) {
        const std::size_t bit = i * bits + b;
        packed[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
      }
    }
  }
  w.bytes(packed);
}

void read_codes(ByteReader& r, Tensor& t, int bits) {
  const double scale = r.f64();
  const std::uint64_t n = r.u64();
  if (n != t.numel()) r.fail("expected " + std::to_string(t.numel()) + " codes, found " + std::to_string(n));
  const auto packed = r.bytes((n * bits + 7) / 8);
  auto v = t.values();
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t code = 0;
    for (int b = 0; b < bits; ++b) {
      const std::size_t bit = i * bits + b;
      code |= static_cast<std::uint32_t>((packed[bit / 8] >> (bit % 8)) & 1u) << b;
    }
    v[i] = post_quant_level(code, bits, scale);
  }
}

void write_norm(ByteWriter& w, const BatchNorm& bn) {
  w.u8(bn.has_affine() ? 1 : 0);
  if (bn.has_affine()) {
    write_tensor(w, bn.gamma);
    write_tensor(w, bn.beta);
  }
  w.f64s(bn.running_mean);
  w.f64s(bn.running_var);
  w.f64(bn.eps);
  w.f64(bn.momentum);
}

void read_norm(ByteReader& r, BatchNorm& bn) {
  const bool affine = r.u8() != 0;
  if (affine != bn.has_affine()) r.fail("normalization layout mismatch");
  if (affine) {
    read_tensor(r, bn.gamma);
    read_tensor(r, bn.beta);
  }
  bn.running_mean = r.f64s(bn.channels());
  bn.running_var = r.f64s(bn.channels());
  bn.eps = r.f64();
  bn.momentum = r.f64();
}

void write_weights(ByteWriter& w, const ConvLayer& l, const QuantMode& mode) {
  const bool codes = mode.kind == QuantMode::Kind::post_quant;
  codes ? write_codes(w, l.weight, mode.bits) : write_tensor(w, l.weight);
  if (l.bias.defined()) codes ? write_codes(w, l.bias, mode.bits) : write_tensor(w, l.bias);
}

void read_weights(ByteReader& r, ConvLayer& l, const QuantMode& mode) {
  const bool codes = mode.kind == QuantMode::Kind::post_quant;
  codes ? read_codes(r, l.weight, mode.bits) : read_tensor(r, l.weight);
  if (l.bias.defined()) codes ? read_codes(r, l.bias, mode.bits) : read_tensor(r, l.bias);
}

void write_block(ByteWriter& w, const ConvBlock& b, const QuantMode& mode) {
  for (std::size_t l = 0; l < b.layers.size(); ++l) {
    write_weights(w, b.layers[l], mode);
    write_norm(w, b.norms[l]);
  }
  write_weights(w, b.head, mode);
  if (b.gain.defined()) w.f64(b.gain[0]);
}

void read_block(ByteReader& r, ConvBlock& b, const QuantMode& mode) {
  for (std::size_t l = 0; l < b.layers.size(); ++l) {
    read_weights(r, b.layers[l], mode);
    read_norm(r, b.norms[l]);
  }
  read_weights(r, b.head, mode);
  if (b.gain.defined()) b.gain[0] = r.f64();
}

void write_spec(ByteWriter& w, const ConvLayerSpec& s) {
  w.u32(static_cast<std::uint32_t>(s.c_in));
  w.u32(static_cast<std::uint32_t>(s.c_out));
  w.u32(static_cast<std::uint32_t>(s.k));
  w.u32(s.has_bias ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(s.activation));
}

ConvLayerSpec read_spec(ByteReader& r) {
  ConvLayerSpec s;
  s.c_in = r.u32();
  s.c_out = r.u32();
  s.k = r.u32();
  s.has_bias = r.u32() != 0;
  const std::uint32_t act = r.u32();
  if (act > static_cast<std::uint32_t>(Activation::sigmoid)) r.fail("unknown activation code");
  s.activation = static_cast<Activation>(act);
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
  return s;
}

void write_words(ByteWriter& w, const std::vector<std::uint64_t>& words) {
  w.u64(words.size());
  for (std::uint64_t x : words) w.u64(x);
}

std::vector<std::uint64_t> read_words(ByteReader& r, std::size_t expected) {
  const std::uint64_t n = r.u64();
  if (n != expected) r.fail("bit plane word count mismatch");
  std::vector<std::uint64_t> out(n);
  for (auto& x : out) x = r.u64();
  return out;
}

void write_i32s(ByteWriter& w, const std::vector<std::int32_t>& v) {
  w.u64(v.size());
  for (std::int32_t x : v) w.i32(x);
}

std::vector<std::int32_t> read_i32s(ByteReader& r, std::size_t expected) {
  const std::uint64_t n = r.u64();
  if (n != expected) r.fail("integer array length mismatch");
  std::vector<std::int32_t> out(n);
  for (auto& x : out) x = r.i32();
  return out;
}

void write_packed_layer(ByteWriter& w, const PackedConvLayer& l) {
  write_spec(w, l.spec);
  w.u32(static_cast<std::uint32_t>(l.kind));
  w.u64(l.words_per_tap);
  write_words(w, l.sign_words);
  write_words(w, l.mask_words);
  write_i32s(w, l.bias_code);
}

PackedConvLayer read_packed_layer(ByteReader& r) {
  PackedConvLayer l;
  l.spec = read_spec(r);
  const std::uint32_t kind = r.u32();
  if (kind != 1 && kind != 2) r.fail("unknown packed weight kind");
  l.kind = static_cast<WeightKind>(kind);
  l.words_per_tap = r.u64();
  if (l.words_per_tap != BitPlane::words_for(l.spec.c_in)) r.fail("words per tap mismatch");
  const std::size_t words = l.spec.c_out * l.spec.k * l.words_per_tap;
  l.sign_words = read_words(r, words);
  l.mask_words = read_words(r, words);
  l.bias_code = read_i32s(r, l.spec.c_out);
  try {
    l.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
  return l;
}

std::vector<std::uint8_t> meta_section(const ModelFile& f) {
  const CodecModel& m = f.transmitter;
  ByteWriter w;
  w.u32(kMetaLayout);
  w.u32(static_cast<std::uint32_t>(m.mode.kind));
  w.u32(static_cast<std::uint32_t>(m.mode.bits));
  for (std::size_t v : {m.shape.block_length, m.shape.iterations, m.shape.feature_size, m.shape.filters,
                        m.shape.kernel, m.shape.encoder_layers, m.shape.decoder_layers}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.u32(static_cast<std::uint32_t>(f.decoders.size()));
  w.u8(f.packed ? 1 : 0);
  return w.take();
}

QuantMode mode_from(std::uint32_t kind, std::uint32_t bits, ByteReader& r) {
  switch (static_cast<QuantMode::Kind>(kind)) {
    case QuantMode::Kind::real: return QuantMode::real();
    case QuantMode::Kind::binary: return QuantMode::binary();
    case QuantMode::Kind::ternary: return QuantMode::ternary();
    case QuantMode::Kind::post_quant:
      try {
        return QuantMode::post_quant(static_cast<int>(bits));
      } catch (const std::invalid_argument& e) {
        r.fail(e.what());
      }
  }
  r.fail("unknown mode code " + std::to_string(kind));
}

const Section& require_section(const Container& c, const SectionTag& tag) {
  const Section* s = c.find(tag);
  if (!s) throw std::runtime_error("model container: missing section " + tag_string(tag));
  return *s;
}

}  // namespace

ModelFile ModelFile::from_model(const CodecModel& model) {
  ModelFile f;
  f.transmitter = model.clone();
  f.decoders.push_back(std::move(f.transmitter.decoder));
  f.transmitter.decoder.clear();
  return f;
}

ModelFile ModelFile::from_ensemble(const EnsembleModel& ensemble) {
  ensemble.validate();
  ModelFile f = from_model(ensemble.members.front());
  for (std::size_t b = 1; b < ensemble.size(); ++b) f.decoders.push_back(ensemble.members[b].clone().decoder);
  return f;
}

CodecModel ModelFile::member(std::size_t b) const {
  if (b >= decoders.size()) throw std::out_of_range("model file has no decoder member " + std::to_string(b));
  CodecModel m = transmitter;
  m.decoder = decoders[b];
  return m;
}

EnsembleModel ModelFile::ensemble() const {
  EnsembleModel e;
  for (std::size_t b = 0; b < decoders.size(); ++b) e.members.push_back(member(b));
  return e;
}

std::vector<std::uint8_t> encode_model_file(const ModelFile& f) {
  const CodecModel& m = f.transmitter;
  Container c;
  c.add(kTagMeta, meta_section(f));
  if (!f.config_text.empty()) {
    ByteWriter w;
    w.str(f.config_text);
    c.add(kTagConfig, w.take());
  }
  {
    ByteWriter w;
    w.u64(m.interleaver.seed());
    w.u64(m.interleaver.size());
    for (std::uint32_t p : m.interleaver.permutation()) w.u32(p);
    c.add(kTagInterleaver, w.take());
  }
  {
    ByteWriter w;
    for (const ConvBlock& b : m.encoder) write_block(w, b, QuantMode::real());
    write_norm(w, m.power);
    c.add(kTagEncoder, w.take());
  }
  for (const auto& decoder : f.decoders) {
    ByteWriter w;
    if (decoder.size() != 2 * m.shape.iterations) throw std::invalid_argument("model file: decoder block count mismatch");
    for (const ConvBlock& b : decoder) write_block(w, b, m.mode);
    c.add(kTagDecoder, w.take());
  }
  if (f.packed) {
    const PackedDecoder& p = *f.packed;
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(p.blocks.size()));
    for (const PackedBlock& b : p.blocks) {
      write_spec(w, b.input_spec);
      auto codes = b.input_codes.values();
      w.u64(codes.size());
      for (double v : codes) w.u8(static_cast<std::uint8_t>(static_cast<std::int8_t>(v)));
      write_norm(w, b.input_norm);
      w.u32(static_cast<std::uint32_t>(b.hidden.size()));
      for (std::size_t l = 0; l < b.hidden.size(); ++l) {
        write_packed_layer(w, b.hidden[l]);
        write_i32s(w, b.thresholds[l]);
      }
      write_packed_layer(w, b.head);
      w.f64(b.gain);
    }
    c.add(kTagPacked, w.take());
  }
  if (!f.log.entries.empty()) {
    ByteWriter w;
    w.str(f.log.csv());
    c.add(kTagCurve, w.take());
  }
  return c.serialize();
}

ModelFile decode_model_file(std::span<const std::uint8_t> bytes) {
  const Container c = Container::parse(bytes);
  ModelFile f;

  ByteReader meta(require_section(c, kTagMeta).data, "section META");
  if (meta.u32() != kMetaLayout) meta.fail("unknown layout");
  const std::uint32_t kind = meta.u32();
  const std::uint32_t bits = meta.u32();
  const QuantMode mode = mode_from(kind, bits, meta);
  CodecShape shape;
  for (std::size_t* v : {&shape.block_length, &shape.iterations, &shape.feature_size, &shape.filters, &shape.kernel,
                         &shape.encoder_layers, &shape.decoder_layers}) {
    *v = meta.u32();
  }
  try {
    shape.validate();
  } catch (const std::invalid_argument& e) {
    meta.fail(e.what());
  }
  const std::uint32_t members = meta.u32();
  const bool has_packed = meta.u8() != 0;
  meta.expect_done();

  CodecModel model = make_model(shape, mode, 0);

  if (const Section* s = c.find(kTagConfig)) {
    ByteReader r(s->data, "section CONF");
    f.config_text = r.str();
    r.expect_done();
  }
  {
    ByteReader r(require_section(c, kTagInterleaver).data, "section INTL");
    const std::uint64_t seed = r.u64();
    const std::uint64_t k = r.u64();
    if (k != shape.block_length) r.fail("permutation length differs from K");
    std::vector<std::uint32_t> perm(k);
    for (auto& p : perm) p = r.u32();
    r.expect_done();
    try {
      model.interleaver = Interleaver::from_permutation(std::move(perm), seed);
    } catch (const std::invalid_argument& e) {
      r.fail(e.what());
    }
  }
  {
    ByteReader r(require_section(c, kTagEncoder).data, "section ENCW");
    for (ConvBlock& b : model.encoder) read_block(r, b, QuantMode::real());
    read_norm(r, model.power);
    r.expect_done();
  }
  const auto decoder_sections = c.find_all(kTagDecoder);
  if (decoder_sections.size() != members) {
    throw std::runtime_error("model container: META lists " + std::to_string(members) + " decoders, found " +
                             std::to_string(decoder_sections.size()));
  }
  for (std::size_t b = 0; b < decoder_sections.size(); ++b) {
    ByteReader r(decoder_sections[b]->data, "section DECW #" + std::to_string(b));
    CodecModel fresh = make_model(shape, mode, 0);
    for (ConvBlock& blk : fresh.decoder) read_block(r, blk, mode);
    r.expect_done();
    f.decoders.push_back(std::move(fresh.decoder));
  }
  model.decoder.clear();
  f.transmitter = std::move(model);

  if (has_packed) {
    ByteReader r(require_section(c, kTagPacked).data, "section PACK");
    PackedDecoder p;
    p.shape = shape;
    p.mode = mode;
    p.interleaver = f.transmitter.interleaver;
    const std::uint32_t blocks = r.u32();
    if (blocks != 2 * shape.iterations) r.fail("block count differs from 2M");
    for (std::uint32_t i = 0; i < blocks; ++i) {
      PackedBlock b;
      b.input_spec = read_spec(r);
      const std::uint64_t n = r.u64();
      if (n != b.input_spec.c_out * b.input_spec.c_in * b.input_spec.k) r.fail("input code count mismatch");
      b.input_codes = Tensor({b.input_spec.c_out, b.input_spec.c_in, b.input_spec.k});
      for (double& v : b.input_codes.values()) {
        v = static_cast<double>(static_cast<std::int8_t>(r.u8()));
        if (v < -1.0 || v > 1.0) r.fail("input weight code out of range");
      }
      b.input_norm = BatchNorm::affine(b.input_spec.c_out);
      read_norm(r, b.input_norm);
      const std::uint32_t hidden = r.u32();
      for (std::uint32_t l = 0; l < hidden; ++l) {
        b.hidden.push_back(read_packed_layer(r));
        b.thresholds.push_back(read_i32s(r, b.hidden.back().spec.c_out));
      }
      b.head = read_packed_layer(r);
      b.gain = r.f64();
      p.blocks.push_back(std::move(b));
    }
    r.expect_done();
    f.packed = std::move(p);
  }
  if (const Section* s = c.find(kTagCurve)) {
    ByteReader r(s->data, "section CURV");
    f.log = TrainingLog::parse_csv(r.str());
    r.expect_done();
  }
  return f;
}

void save_model_file(const std::string& path, const ModelFile& file) { write_file(path, encode_model_file(file)); }

ModelFile load_model_file(const std::string& path) { return decode_model_file(read_file(path)); }

}  // namespace bitturbo
