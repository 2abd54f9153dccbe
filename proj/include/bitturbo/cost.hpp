#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "bitturbo/quantize.hpp"

namespace bitturbo {

/// One convolution as seen by the cost model.
struct LayerShape {
  std::size_t c_in = 0;
  std::size_t c_out = 0;
  std::size_t k = 1;
  std::size_t h_out = 0;
  bool has_bias = false;

  std::uint64_t params() const { return c_in * c_out * k + (has_bias ? c_out : 0); }
  /// Multiplications of the layer: c_i * k * h_out * c_o.
  std::uint64_t macs() const { return c_in * k * h_out * c_out; }
};

/// Parameter, storage and operation counts of a decoder.
///
/// flops_real uses the 2 * c_i * k * h_out * c_o per-layer total (one multiply
/// plus one add per product). The separately quoted addition count
/// (c_i-1)(k-1)h_out*c_o is not the conventional c_i*k-1 per output, so the
/// rounded total is used as the single figure.
///
/// Weight-only accounting: params counts convolution weights and biases of
/// one decoder; storage_bits covers all ensemble members. Folded thresholds and
/// normalization constants are reported in aux_bits and excluded from ratios.
struct CostReport {
  std::string mode;
  std::size_t ensemble_size = 1;
  std::uint64_t params = 0;
  std::uint64_t storage_bits = 0;
  std::uint64_t aux_bits = 0;
  std::uint64_t flops_real = 0;
  std::uint64_t bitops = 0;
  double memory_saving_x = 1.0;
  double speedup_x = 1.0;

  double storage_megabytes() const { return static_cast<double>(storage_bits) / 8.0 / 1e6; }
};

/// Bits used per stored parameter: 64 (real), q (post-quantized), 1 (binary, ternary).
int bits_per_param(const QuantMode& mode);

/// Words per machine cycle in the bit-op cycle model.
inline constexpr double kBitLanesPerCycle = 64.0;

CostReport cost_report(std::span<const LayerShape> layers, const QuantMode& mode, std::size_t ensemble_size = 1,
                       std::uint64_t aux_bits = 0);

/// Megabytes (1e6 bytes) occupied by `params` values of `bits` bits each.
double storage_megabytes(std::uint64_t params, int bits);

/// Comma-separated header and row for CSV reporting.
std::string cost_csv_header();
std::string cost_csv_row(const CostReport& report);

}  // namespace bitturbo
