#include "bitturbo/channel.hpp"

#include <cmath>
#include <stdexcept>

#include "bitturbo/rng.hpp"

namespace bitturbo {

double sigma_from_snr(double snr_db) { return std::sqrt(std::pow(10.0, -snr_db / 10.0)); }

double snr_from_sigma(double sigma) { return -10.0 * std::log10(sigma * sigma); }

ChannelSpec ChannelSpec::from_snr(double snr_db, std::uint64_t seed) { return {snr_db, sigma_from_snr(snr_db), seed}; }

ChannelSpec ChannelSpec::from_sigma(double sigma, std::uint64_t seed) {
  if (!(sigma > 0.0)) throw std::invalid_argument("channel: sigma must be > 0");
  return {snr_from_sigma(sigma), sigma, seed};
}

Tensor awgn(const Tensor& x, const ChannelSpec& spec, std::uint64_t stream, std::uint64_t first_index) {
  const CounterRng rng(spec.seed, stream);
  Tensor z(x.shape());
  auto xv = x.values();
  auto zv = z.values();
  for (std::size_t i = 0; i < xv.size(); ++i) zv[i] = xv[i] + spec.sigma * rng.normal(first_index + i);
  return z;
}

double ErrorStats::ber_standard_error() const {
  if (bits == 0) return 0.0;
  const double p = ber();
  return std::sqrt(p * (1.0 - p) / static_cast<double>(bits));
}

ErrorStats& ErrorStats::operator+=(const ErrorStats& other) {
  bit_errors += other.bit_errors;
  bits += other.bits;
  block_errors += other.block_errors;
  blocks += other.blocks;
  return *this;
}

ErrorStats measure(const Tensor& u, const Tensor& u_hat) {
  if (!u.defined() || !u_hat.defined() || u.shape() != u_hat.shape()) {
    throw std::invalid_argument("measure: shape mismatch");
  }
  if (u.rank() == 0 || u.shape().back() == 0) throw std::invalid_argument("measure: empty block");
  const std::size_t k = u.shape().back();
  ErrorStats s;
  auto a = u.values();
  auto b = u_hat.values();
  s.blocks = a.size() / k;
  s.bits = a.size();
  for (std::size_t blk = 0; blk < s.blocks; ++blk) {
    std::uint64_t errs = 0;
    for (std::size_t j = 0; j < k; ++j) errs += (a[blk * k + j] != b[blk * k + j]);
    s.bit_errors += errs;
    s.block_errors += errs > 0;
  }
  return s;
}

}  // namespace bitturbo
