#include "bitturbo/sweep.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "bitturbo/parallel.hpp"
#include "bitturbo/rng.hpp"

namespace bitturbo {
namespace {

constexpr std::uint64_t kTagSweepMessages = 0x53574d53;  // "SWMS"
constexpr std::uint64_t kTagSweepNoise = 0x53574e5a;     // "SWNZ"

std::uint64_t snr_label(double snr_db) { return static_cast<std::uint64_t>(std::llround(snr_db * 1000.0)); }

}  // namespace

void SweepConfig::validate() const {
  if (!(snr_step_db > 0.0)) throw std::invalid_argument("snr_step: must be > 0");
  if (snr_end_db < snr_start_db) throw std::invalid_argument("snr_end: must be >= snr_start");
  if (blocks_per_point < 1) throw std::invalid_argument("blocks_per_point: must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("eval_batch_size: must be >= 1");
}

std::vector<double> snr_grid(double start_db, double end_db, double step_db) {
  if (!(step_db > 0.0)) throw std::invalid_argument("snr_step: must be > 0");
  if (end_db < start_db) throw std::invalid_argument("snr_end: must be >= snr_start");
  const auto n = static_cast<std::size_t>(std::floor((end_db - start_db) / step_db + 1e-9)) + 1;
  std::vector<double> grid(n);
  for (std::size_t i = 0; i < n; ++i) grid[i] = start_db + static_cast<double>(i) * step_db;
  return grid;
}

ErrorStats evaluate_point(const CodecModel& transmitter, const HardDecoder& decoder, double snr_db,
                          const SweepConfig& config) {
  const std::size_t k = transmitter.shape.block_length;
  const std::uint64_t label = snr_label(snr_db);
  const std::uint64_t msg_stream = derive_key(kTagSweepMessages, label);
  const ChannelSpec channel = ChannelSpec::from_snr(snr_db, config.seed);
  ErrorStats stats;
  while (stats.blocks < config.blocks_per_point && stats.bit_errors < config.target_bit_errors) {
    const std::size_t batch = std::min<std::size_t>(config.batch_size, config.blocks_per_point - stats.blocks);
    const Tensor u = random_messages(batch, k, config.seed, msg_stream, stats.blocks * k);
    const Tensor x = encode(u, transmitter);
    const Tensor z = awgn(x, channel, derive_key(kTagSweepNoise, label), stats.blocks * 3 * k);
    stats += measure(u, decoder(z));
  }
  return stats;
}

std::vector<SweepPoint> run_sweep(const CodecModel& transmitter, const HardDecoder& decoder,
                                  const SweepConfig& config, std::size_t workers) {
  config.validate();
  const std::vector<double> grid = snr_grid(config.snr_start_db, config.snr_end_db, config.snr_step_db);
  std::vector<SweepPoint> points(grid.size());
  parallel_for(
      grid.size(),
      [&](std::size_t i) {
        points[i].snr_db = grid[i];
        points[i].stats = evaluate_point(transmitter, decoder, grid[i], config);
      },
      workers);
  return points;
}

HardDecoder float_decoder(const CodecModel& model) {
  return [&model](const Tensor& z) { return decode(z, model).hard; };
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::string out = "snr_db,ber,bler,bits,blocks\n";
  char buf[160];
  for (const SweepPoint& p : points) {
    std::snprintf(buf, sizeof buf, "%.6g,%.17g,%.17g,%llu,%llu\n", p.snr_db, p.stats.ber(), p.stats.bler(),
                  static_cast<unsigned long long>(p.stats.bits), static_cast<unsigned long long>(p.stats.blocks));
    out += buf;
  }
  return out;
}

}  // namespace bitturbo
