#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bitturbo/codec.hpp"
#include "bitturbo/sweep.hpp"
#include "bitturbo/train.hpp"

namespace bitturbo {

/// B decoders trained independently against one shared encoder.
struct EnsembleModel {
  std::vector<CodecModel> members;

  std::size_t size() const noexcept { return members.size(); }
  /// The shared encoder and interleaver live in every member; the first one is used.
  const CodecModel& transmitter() const;
  /// Throws std::invalid_argument when empty or when members disagree on
  /// shape, mode, interleaver or encoder weights.
  void validate() const;
};

/// Elementwise mean of equally shaped tensors. Values at each position are
/// sorted before a pairwise sum, so the result does not depend on member
/// order; identical inputs return that value exactly.
Tensor average_soft(std::span<const Tensor> softs);

DecodeResult bag_decode(const Tensor& z, const EnsembleModel& ensemble);
HardDecoder bag_decoder(const EnsembleModel& ensemble);

struct BagResult {
  EnsembleModel ensemble;
  TrainingLog encoder_log;
  std::vector<TrainingLog> member_logs;
};

/// Seed of member b, distinct for every b.
std::uint64_t member_seed(std::uint64_t seed, std::size_t member);

/// Trains B decoders of `mode` against the fixed encoder of `base`. Members run
/// in parallel when workers allow.
BagResult train_bag_from(const CodecModel& base, const QuantMode& mode, std::size_t bag_size,
                         const TrainConfig& config);

/// Trains a real-valued encoder first, then B decoders against it.
BagResult train_bag(const CodecShape& shape, const QuantMode& mode, std::size_t bag_size, const TrainConfig& config,
                    const Trainer::Observer& observer = {});

}  // namespace bitturbo
