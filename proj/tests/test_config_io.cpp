#include <doctest.h>

#include <filesystem>

#include "bitturbo/config.hpp"
#include "bitturbo/container.hpp"
#include "bitturbo/model_io.hpp"
#include "bitturbo/packed_decoder.hpp"

using namespace bitturbo;

namespace {

CodecShape tiny_shape() {
  CodecShape s;
  s.block_length = 20;
  s.iterations = 2;
  s.feature_size = 2;
  s.filters = 6;
  s.kernel = 3;
  return s;
}

std::size_t error_line(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return 0;
}

bool same(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

}  // namespace

TEST_CASE("empty config gives full-size defaults") {
  const ExperimentConfig c = parse_config("");
  CHECK(c.train.batch_size == 500);
  CHECK(c.train.lr == 1e-4);
  CHECK(c.train.epochs == 800);
  CHECK(c.shape.block_length == 100);
  CHECK(c.shape.kernel == 5);
  CHECK(c.shape.filters == 100);
  CHECK(c.shape.iterations == 6);
  CHECK(c.shape.feature_size == 5);
  CHECK(c.mode.name() == "real");
  CHECK(c == parse_config("# only a comment\n\n   \n"));
}

TEST_CASE("desk profile") {
  const ExperimentConfig c = parse_config("epochs = 3\nprofile = desk\n");
  CHECK(c.shape.filters == 16);
  CHECK(c.shape.iterations == 2);
  CHECK(c.train.epochs == 3);
  CHECK(c.sweep.snr_start_db == -2.0);
  CHECK(c.sweep.snr_end_db == 4.0);
  CHECK(c.sweep.blocks_per_point == 2000);
}

TEST_CASE("config errors") {
  CHECK_THROWS_WITH_AS(parse_config("snr_step = 0\n"), doctest::Contains("snr_step"), ConfigError);
  CHECK(error_line("seed = 2\n\nsnr_step = 0\n") == 3);
  CHECK(error_line("mode = binary\nfilterz = 3\n") == 2);
  CHECK_THROWS_WITH_AS(parse_config("mode = binary\nfilterz = 3\n"), doctest::Contains("filterz"), ConfigError);
  CHECK(error_line("seed = 1\nseed = 2\n") == 2);
  CHECK(error_line("kernel = 4\n") == 1);
  CHECK(error_line("kernel = five\n") == 1);
  CHECK(error_line("kernel = -5\n") == 1);
  CHECK(error_line("lr = 1e-3x\n") == 1);
  CHECK(error_line("mode = q3\n") == 1);
  CHECK(error_line("just words\n") == 1);
  CHECK(error_line("blocks_per_point = 0\n") == 1);
  CHECK(error_line("profile = laptop\n") == 1);
  // A validation error is still an invalid_argument.
  CHECK_THROWS_AS(parse_config("bag_size = 0\n"), std::invalid_argument);
}

TEST_CASE("config round trip") {
  const ExperimentConfig c = parse_config(
      "profile = desk\nmode = ternary\nseed = 17\nlr = 0.00123456789\nsnr_step = 0.25\nbag_size = 3\n"
      "target_bit_errors = 7\n");
  CHECK(c.train.seed == 17);
  CHECK(c.sweep.seed == 17);
  const std::string text = serialize_config(c);
  CHECK(parse_config(text) == c);
  CHECK(serialize_config(parse_config(text)) == text);
  CHECK(parse_config(serialize_config(parse_config(""))) == parse_config(""));
}

TEST_CASE("container") {
  Container c;
  c.add(make_tag("AAAA"), {1, 2, 3});
  c.add(make_tag("BBBB"), {});
  c.add(make_tag("AAAA"), {9});
  const auto bytes = c.serialize();
  CHECK(bytes[0] == 'B');
  CHECK(bytes[3] == 'E');
  const Container back = Container::parse(bytes);
  CHECK(back.sections().size() == 3);
  CHECK(back.find(make_tag("AAAA"))->data == std::vector<std::uint8_t>{1, 2, 3});
  CHECK(back.find_all(make_tag("AAAA")).size() == 2);
  CHECK(back.find(make_tag("ZZZZ")) == nullptr);
  CHECK(back.serialize() == bytes);

  auto corrupt = bytes;
  corrupt[corrupt.size() - 2] ^= 0x40u;  // inside the payload of the first AAAA section
  CHECK_THROWS_WITH_AS(Container::parse(corrupt), doctest::Contains("AAAA"), std::runtime_error);

  auto version = bytes;
  version[4] = 2;
  CHECK_THROWS_WITH_AS(Container::parse(version), doctest::Contains("version"), std::runtime_error);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(Container::parse(magic), std::runtime_error);
  CHECK_THROWS_AS(Container::parse(std::span(bytes).first(bytes.size() - 1)), std::runtime_error);
  CHECK_THROWS_AS(Container::parse(std::span(bytes).first(10)), std::runtime_error);
  CHECK(crc32_of(std::vector<std::uint8_t>{'1', '2', '3', '4', '5', '6', '7', '8', '9'}) == 0xCBF43926u);
}

TEST_CASE("byte reader bounds") {
  const std::vector<std::uint8_t> four = {1, 0, 0, 0};
  ByteReader r(four, "test");
  CHECK(r.u32() == 1);
  CHECK(r.done());
  CHECK_THROWS_WITH_AS(r.u8(), doctest::Contains("test"), std::runtime_error);
  ByteReader s(four, "test");
  CHECK_THROWS_AS(s.u64(), std::runtime_error);
  ByteWriter w;
  w.u64(1ull << 40);  // a string length far beyond the data
  const auto huge = w.take();
  ByteReader t(huge, "test");
  CHECK_THROWS_AS(t.str(), std::runtime_error);
}

TEST_CASE("model files round trip byte for byte") {
  for (const char* name : {"real", "binary", "ternary"}) {
    CodecModel m = make_model(tiny_shape(), QuantMode::parse(name), 3);
    calibrate_power(m, 2, 16, 4);
    ModelFile f = ModelFile::from_model(m);
    f.config_text = "mode = " + std::string(name) + "\n";
    f.log.entries.push_back({0, Phase::validation, 0.5, 1e-3});
    if (m.mode.is_bit_mode()) f.packed = freeze_for_edge(m);
    const auto bytes = encode_model_file(f);
    const ModelFile back = decode_model_file(bytes);
    CHECK(encode_model_file(back) == bytes);
    CHECK(back.config_text == f.config_text);
    CHECK(back.log == f.log);
    const CodecModel loaded = back.member(0);
    CHECK(loaded.mode.name() == name);
    CHECK(loaded.interleaver == m.interleaver);
    const Tensor z = encode(random_messages(5, 20, 1, 0), m);
    CHECK(same(decode_soft(z, loaded), decode_soft(z, m)));
    CHECK(same(encode(random_messages(5, 20, 1, 0), loaded), z));
    if (m.mode.is_bit_mode()) {
      REQUIRE(back.packed.has_value());
      CHECK(*back.packed == *f.packed);
      for (const Tensor& w : loaded.decoder_weights()) {
        const Tensor view = effective_weight(nullptr, w, loaded.mode);
        for (double v : view.values()) CHECK((v == 1.0 || v == -1.0 || (std::string(name) == "ternary" && v == 0.0)));
      }
      // Freezing twice serializes identically.
      ModelFile g = f;
      g.packed = freeze_for_edge(m);
      CHECK(encode_model_file(g) == bytes);
    }
  }
}

TEST_CASE("post-quantized and packed-only files") {
  CodecModel real = make_model(tiny_shape(), QuantMode::real(), 5);
  for (int q : {1, 2, 4, 8}) {
    const CodecModel pq = post_quantize_model(real, q);
    const auto bytes = encode_model_file(ModelFile::from_model(pq));
    const ModelFile back = decode_model_file(bytes);
    CHECK(encode_model_file(back) == bytes);
    const CodecModel loaded = back.member(0);
    CHECK(loaded.mode.bits == q);
    for (std::size_t i = 0; i < pq.decoder_weights().size(); ++i) {
      CHECK(same(loaded.decoder_weights()[i], pq.decoder_weights()[i]));
    }
  }
  // Lower precision stores fewer decoder bytes.
  CHECK(encode_model_file(ModelFile::from_model(post_quantize_model(real, 1))).size() <
        encode_model_file(ModelFile::from_model(post_quantize_model(real, 8))).size());

  CodecModel bin = make_model(tiny_shape(), QuantMode::binary(), 6);
  ModelFile edge = ModelFile::from_model(bin);
  edge.packed = freeze_for_edge(bin);
  edge.decoders.clear();
  const auto bytes = encode_model_file(edge);
  const ModelFile back = decode_model_file(bytes);
  CHECK(back.member_count() == 0);
  CHECK(*back.packed == *edge.packed);
  CHECK(encode_model_file(back) == bytes);
}

TEST_CASE("ensemble files") {
  CodecModel base = make_model(tiny_shape(), QuantMode::binary(), 7);
  EnsembleModel e;
  for (std::uint64_t s : {1, 2, 3}) {
    CodecModel m = base.clone();
    reinitialize_decoder(m, base.mode, s);
    e.members.push_back(std::move(m));
  }
  const auto bytes = encode_model_file(ModelFile::from_ensemble(e));
  const ModelFile back = decode_model_file(bytes);
  CHECK(back.member_count() == 3);
  CHECK(Container::parse(bytes).find_all(kTagDecoder).size() == 3);
  CHECK(Container::parse(bytes).find_all(kTagEncoder).size() == 1);
  const EnsembleModel loaded = back.ensemble();
  const Tensor z = encode(random_messages(4, 20, 2, 0), base);
  CHECK(same(bag_decode(z, loaded).soft, bag_decode(z, e).soft));
}

TEST_CASE("model file damage is reported") {
  const CodecModel m = make_model(tiny_shape(), QuantMode::real(), 8);
  auto bytes = encode_model_file(ModelFile::from_model(m));

  // Flip one byte inside the encoder payload.
  const Container c = Container::parse(bytes);
  std::size_t offset = 0;
  {
    ByteReader r(bytes, "header");
    r.bytes(8);
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      auto tag = r.bytes(4);
      const std::uint64_t off = r.u64();
      r.u64();
      r.u32();
      if (std::string(tag.begin(), tag.end()) == "ENCW") offset = off;
    }
  }
  REQUIRE(offset > 0);
  auto damaged = bytes;
  damaged[offset + 20] ^= 1u;
  CHECK_THROWS_WITH_AS(decode_model_file(damaged), doctest::Contains("ENCW"), std::runtime_error);

  // Unknown sections are skipped.
  Container extra = c;
  extra.add(make_tag("XTRA"), {1, 2, 3});
  const ModelFile back = decode_model_file(extra.serialize());
  CHECK(encode_model_file(back) == bytes);

  CHECK_THROWS_AS(load_model_file("/nonexistent/model.btae"), std::runtime_error);
  const auto dir = std::filesystem::temp_directory_path() / "bitturbo_test_io";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "m.btae").string();
  save_model_file(path, ModelFile::from_model(m));
  CHECK(read_file(path) == bytes);
  CHECK(encode_model_file(load_model_file(path)) == bytes);
  std::filesystem::remove_all(dir);
}
