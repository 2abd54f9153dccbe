#include "bitturbo/cost.hpp"

#include <cstdio>
#include <stdexcept>

namespace bitturbo {

int bits_per_param(const QuantMode& mode) {
  switch (mode.kind) {
    case QuantMode::Kind::real: return 64;
    case QuantMode::Kind::post_quant: return mode.bits;
    case QuantMode::Kind::binary:
    case QuantMode::Kind::ternary: return 1;
  }
  return 64;
}

CostReport cost_report(std::span<const LayerShape> layers, const QuantMode& mode, std::size_t ensemble_size,
                       std::uint64_t aux_bits) {
  if (ensemble_size < 1) throw std::invalid_argument("cost_report: ensemble size must be >= 1");
  CostReport r;
  r.mode = mode.name();
  r.ensemble_size = ensemble_size;
  std::uint64_t macs = 0;
  for (const LayerShape& l : layers) {
    r.params += l.params();
    macs += l.macs();
  }
  const std::uint64_t b = ensemble_size;
  r.storage_bits = r.params * static_cast<std::uint64_t>(bits_per_param(mode)) * b;
  r.aux_bits = aux_bits;
  r.flops_real = 2 * macs * b;
  r.bitops = macs * b;
  r.memory_saving_x =
      r.storage_bits ? 64.0 * static_cast<double>(r.params) / static_cast<double>(r.storage_bits) : 1.0;
  r.speedup_x = mode.is_bit_mode() ? kBitLanesPerCycle : 1.0;
  return r;
}

double storage_megabytes(std::uint64_t params, int bits) {
  return static_cast<double>(params) * static_cast<double>(bits) / 8.0 / 1e6;
}

std::string cost_csv_header() {
  return "mode,ensemble,params,storage_bits,aux_bits,flops_real,bitops,memory_saving_x,speedup_x";
}

std::string cost_csv_row(const CostReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%zu,%llu,%llu,%llu,%llu,%llu,%.6g,%.6g", r.mode.c_str(), r.ensemble_size,
                static_cast<unsigned long long>(r.params), static_cast<unsigned long long>(r.storage_bits),
                static_cast<unsigned long long>(r.aux_bits), static_cast<unsigned long long>(r.flops_real),
                static_cast<unsigned long long>(r.bitops), r.memory_saving_x, r.speedup_x);
  return buf;
}

}  // namespace bitturbo
