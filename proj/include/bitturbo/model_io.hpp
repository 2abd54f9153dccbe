#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bitturbo/codec.hpp"
#include "bitturbo/container.hpp"
#include "bitturbo/ensemble.hpp"
#include "bitturbo/packed_decoder.hpp"
#include "bitturbo/train.hpp"

namespace bitturbo {

/// Everything a model file can hold. The transmitter carries shape, mode,
/// interleaver, encoder and power statistics; its decoder list is empty.
/// Decoders are stored separately so an ensemble shares one encoder section.
struct ModelFile {
  CodecModel transmitter;
  std::vector<std::vector<ConvBlock>> decoders;  // one per ensemble member
  std::optional<PackedDecoder> packed;
  std::string config_text;  // serialized ExperimentConfig, may be empty
  TrainingLog log;

  static ModelFile from_model(const CodecModel& model);
  static ModelFile from_ensemble(const EnsembleModel& ensemble);

  std::size_t member_count() const noexcept { return decoders.size(); }
  /// Member b as a standalone model (encoder tensors shared with the transmitter).
  CodecModel member(std::size_t b) const;
  EnsembleModel ensemble() const;
};

/// Section tags in file order.
inline const SectionTag kTagMeta = make_tag("META");
inline const SectionTag kTagConfig = make_tag("CONF");
inline const SectionTag kTagInterleaver = make_tag("INTL");
inline const SectionTag kTagEncoder = make_tag("ENCW");
inline const SectionTag kTagDecoder = make_tag("DECW");
inline const SectionTag kTagPacked = make_tag("PACK");
inline const SectionTag kTagCurve = make_tag("CURV");

std::vector<std::uint8_t> encode_model_file(const ModelFile& file);
ModelFile decode_model_file(std::span<const std::uint8_t> bytes);

void save_model_file(const std::string& path, const ModelFile& file);
ModelFile load_model_file(const std::string& path);

}  // namespace bitturbo
