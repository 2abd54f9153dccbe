#pragma once

#include <cstdint>

#include "bitturbo/tensor.hpp"

namespace bitturbo {

/// AWGN channel operating point. sigma^2 = 10^(-snr_db/10).
struct ChannelSpec {
  double snr_db = 0.0;
  double sigma = 1.0;
  std::uint64_t seed = 0;

  static ChannelSpec from_snr(double snr_db, std::uint64_t seed = 0);
  static ChannelSpec from_sigma(double sigma, std::uint64_t seed = 0);
};

double sigma_from_snr(double snr_db);
double snr_from_sigma(double sigma);

/// z = x + sigma * n with n drawn from the counter stream (seed, stream);
/// element i uses normal draw `first_index + i`.
Tensor awgn(const Tensor& x, const ChannelSpec& spec, std::uint64_t stream = 0, std::uint64_t first_index = 0);

struct ErrorStats {
  std::uint64_t bit_errors = 0;
  std::uint64_t bits = 0;
  std::uint64_t block_errors = 0;
  std::uint64_t blocks = 0;

  double ber() const { return bits ? static_cast<double>(bit_errors) / static_cast<double>(bits) : 0.0; }
  double bler() const { return blocks ? static_cast<double>(block_errors) / static_cast<double>(blocks) : 0.0; }
  /// Binomial standard error of the BER estimate.
  double ber_standard_error() const;
  ErrorStats& operator+=(const ErrorStats& other);
};

/// Compares ±1 blocks; the last axis is the block length. A block errs iff any
/// of its bits differs.
ErrorStats measure(const Tensor& u, const Tensor& u_hat);

}  // namespace bitturbo
