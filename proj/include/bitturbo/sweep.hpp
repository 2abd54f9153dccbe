#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bitturbo/channel.hpp"
#include "bitturbo/codec.hpp"

namespace bitturbo {

struct SweepConfig {
  double snr_start_db = -2.0;
  double snr_end_db = 4.0;
  double snr_step_db = 1.0;
  std::size_t blocks_per_point = 2000;
  std::size_t target_bit_errors = 100;  // stop a point early once this many bit errors are seen
  std::size_t batch_size = 100;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  bool operator==(const SweepConfig&) const = default;
};

/// start, start+step, ... up to end inclusive (with a 1e-9 step tolerance).
std::vector<double> snr_grid(double start_db, double end_db, double step_db);

struct SweepPoint {
  double snr_db = 0.0;
  ErrorStats stats;
};

/// Maps channel outputs [b, 3, K] to hard decisions [b, 1, K].
using HardDecoder = std::function<Tensor(const Tensor& z)>;

/// Monte Carlo BER/BLER per SNR point. Messages and noise depend only on
/// (seed, SNR, block index), so decoders sharing an encoder are compared on
/// identical channel realizations. Points run in parallel; rows come back in
/// SNR order.
std::vector<SweepPoint> run_sweep(const CodecModel& transmitter, const HardDecoder& decoder,
                                  const SweepConfig& config, std::size_t workers = 0);

/// Single operating point with the same stream layout as run_sweep.
ErrorStats evaluate_point(const CodecModel& transmitter, const HardDecoder& decoder, double snr_db,
                          const SweepConfig& config);

HardDecoder float_decoder(const CodecModel& model);

/// `snr_db,ber,bler,bits,blocks`
std::string sweep_csv(const std::vector<SweepPoint>& points);

}  // namespace bitturbo
