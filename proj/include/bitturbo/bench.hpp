#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bitturbo/codec.hpp"
#include "bitturbo/ops.hpp"
#include "bitturbo/packed_decoder.hpp"

namespace bitturbo {

/// Wall-clock seconds per call over `reps` timed repetitions (after one warm-up).
struct Timing {
  std::vector<double> seconds;  // one entry per repetition

  double median() const;
  /// Standard deviation over mean of the repetitions.
  double relative_spread() const;
};

struct BenchResult {
  std::string label;
  Timing float_path;
  Timing packed_path;
  double speedup() const { return float_path.median() / packed_path.median(); }
};

/// One binary conv + batchnorm + sign layer on a single block: float conv over
/// ±1 values versus the folded packed kernel on the same weights.
BenchResult bench_layer(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t h, std::size_t iters,
                        std::size_t reps = 5, std::uint64_t seed = 1);

/// The layer shapes of a decoder's packable hidden layers.
BenchResult bench_hidden_layer(const CodecShape& shape, std::size_t iters, std::size_t reps = 5);

/// Whole-decoder throughput on `blocks` noisy blocks: float QAT decode versus
/// the packed decoder (whose first layers still run in floating point).
BenchResult bench_decoder(const CodecModel& model, const PackedDecoder& packed, std::size_t blocks,
                          std::size_t iters, std::size_t reps = 5, std::uint64_t seed = 1);

std::string bench_report(const BenchResult& r);

}  // namespace bitturbo
