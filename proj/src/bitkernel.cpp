#include "bitturbo/bitkernel.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <stdexcept>
#include <string>

namespace bitturbo {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

std::uint64_t tail_mask(std::size_t n_valid, std::size_t word) {
  const std::size_t full = n_valid / 64;
  if (word < full) return ~std::uint64_t{0};
  if (word > full) return 0;
  const std::size_t rem = n_valid % 64;
  return rem == 0 ? 0 : (std::uint64_t{1} << rem) - 1;
}

}  // namespace

std::uint64_t BitPlane::valid_mask(std::size_t w) const { return tail_mask(n_valid, w); }

bool BitPlane::well_formed() const {
  if (words.size() != words_for(n_valid)) return false;
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (words[w] & ~valid_mask(w)) return false;
  }
  return true;
}

BitPlane pack_bits(std::span<const double> v) {
  BitPlane plane;
  plane.n_valid = v.size();
  plane.words.assign(BitPlane::words_for(v.size()), 0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == 1.0) {
      plane.words[i / 64] |= std::uint64_t{1} << (i % 64);
    } else if (v[i] != -1.0) {
      throw std::invalid_argument("pack_bits: value at index " + std::to_string(i) + " is not +1 or -1");
    }
  }
  return plane;
}

std::vector<double> unpack_bits(const BitPlane& plane) {
  std::vector<double> out(plane.n_valid);
  for (std::size_t i = 0; i < plane.n_valid; ++i) out[i] = plane.bit(i) ? 1.0 : -1.0;
  return out;
}

std::int64_t xnor_dot(const BitPlane& a, const BitPlane& w) {
  require(a.n_valid == w.n_valid, "xnor_dot: length mismatch (" + std::to_string(a.n_valid) + " vs " +
                                      std::to_string(w.n_valid) + ")");
  std::int64_t agree = 0;
  for (std::size_t i = 0; i < a.words.size(); ++i) {
    agree += std::popcount(~(a.words[i] ^ w.words[i]) & a.valid_mask(i));
  }
  return 2 * agree - static_cast<std::int64_t>(a.n_valid);
}

std::int64_t ternary_dot(const BitPlane& a, const BitPlane& w_sign, const BitPlane& w_mask) {
  require(a.n_valid == w_sign.n_valid && a.n_valid == w_mask.n_valid, "ternary_dot: length mismatch");
  std::int64_t agree = 0, support = 0;
  for (std::size_t i = 0; i < a.words.size(); ++i) {
    const std::uint64_t valid = a.valid_mask(i);
    require((w_sign.words[i] & ~w_mask.words[i] & valid) == 0, "ternary_dot: sign bit set where the mask is 0");
    const std::uint64_t m = w_mask.words[i] & valid;
    agree += std::popcount(~(a.words[i] ^ w_sign.words[i]) & m);
    support += std::popcount(m);
  }
  return 2 * agree - support;
}

TernaryPlanes pack_ternary(std::span<const double> t) {
  TernaryPlanes planes;
  planes.sign.n_valid = planes.mask.n_valid = t.size();
  planes.sign.words.assign(BitPlane::words_for(t.size()), 0);
  planes.mask.words.assign(BitPlane::words_for(t.size()), 0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const std::uint64_t bit = std::uint64_t{1} << (i % 64);
    if (t[i] == 1.0) {
      planes.sign.words[i / 64] |= bit;
      planes.mask.words[i / 64] |= bit;
    } else if (t[i] == -1.0) {
      planes.mask.words[i / 64] |= bit;
    } else if (t[i] != 0.0) {
      throw std::invalid_argument("pack_ternary: value at index " + std::to_string(i) + " is not in {-1,0,+1}");
    }
  }
  return planes;
}

PackedActivations::PackedActivations(std::size_t channels, std::size_t positions)
    : channels_(channels), positions_(positions), wpp_(BitPlane::words_for(channels)), words_(wpp_ * positions, 0) {}

PackedActivations PackedActivations::from_values(std::span<const double> x, std::size_t channels,
                                                  std::size_t positions) {
  require(x.size() == channels * positions, "PackedActivations: size mismatch");
  PackedActivations out(channels, positions);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* row = x.data() + c * positions;
    const std::uint64_t bit = std::uint64_t{1} << (c % 64);
    const std::size_t word = c / 64;
    for (std::size_t j = 0; j < positions; ++j) {
      if (row[j] >= 0.0) out.words_[j * out.wpp_ + word] |= bit;
    }
  }
  return out;
}

std::vector<double> PackedActivations::to_values() const {
  std::vector<double> out(channels_ * positions_);
  for (std::size_t c = 0; c < channels_; ++c) {
    for (std::size_t j = 0; j < positions_; ++j) out[c * positions_ + j] = bit(c, j) ? 1.0 : -1.0;
  }
  return out;
}

bool PackedActivations::bit(std::size_t channel, std::size_t position) const {
  return (words_[position * wpp_ + channel / 64] >> (channel % 64)) & 1u;
}

void PackedActivations::set(std::size_t channel, std::size_t position) {
  words_[position * wpp_ + channel / 64] |= std::uint64_t{1} << (channel % 64);
}

PackedConvLayer PackedConvLayer::from_codes(const ConvLayerSpec& spec, WeightKind kind,
                                            std::span<const double> weights, std::span<const double> bias) {
  spec.validate();
  require(weights.size() == spec.c_out * spec.c_in * spec.k, "PackedConvLayer: weight count mismatch");
  require(bias.empty() || bias.size() == spec.c_out, "PackedConvLayer: bias count mismatch");
  PackedConvLayer layer;
  layer.spec = spec;
  layer.kind = kind;
  layer.words_per_tap = BitPlane::words_for(spec.c_in);
  const std::size_t total = spec.c_out * spec.k * layer.words_per_tap;
  layer.sign_words.assign(total, 0);
  layer.mask_words.assign(total, 0);
  for (std::size_t o = 0; o < spec.c_out; ++o) {
    for (std::size_t i = 0; i < spec.c_in; ++i) {
      for (std::size_t t = 0; t < spec.k; ++t) {
        const double v = weights[(o * spec.c_in + i) * spec.k + t];
        const std::size_t word = (o * spec.k + t) * layer.words_per_tap + i / 64;
        const std::uint64_t bit = std::uint64_t{1} << (i % 64);
        if (v == 1.0) {
          layer.sign_words[word] |= bit;
          layer.mask_words[word] |= bit;
        } else if (v == -1.0) {
          layer.mask_words[word] |= bit;
        } else if (v == 0.0 && kind == WeightKind::ternary) {
        } else {
          throw std::invalid_argument("PackedConvLayer: weight code " + std::to_string(v) + " is not representable");
        }
      }
    }
  }
  layer.bias_code.assign(spec.c_out, 0);
  for (std::size_t o = 0; o < bias.size(); ++o) {
    const double b = bias[o];
    require(b == 1.0 || b == -1.0 || (b == 0.0 && kind == WeightKind::ternary),
            "PackedConvLayer: bias code " + std::to_string(b) + " is not representable");
    layer.bias_code[o] = static_cast<std::int32_t>(b);
  }
  return layer;
}

BitPlane PackedConvLayer::sign_plane(std::size_t o, std::size_t t) const {
  const auto first = sign_words.begin() + static_cast<std::ptrdiff_t>((o * spec.k + t) * words_per_tap);
  return {{first, first + static_cast<std::ptrdiff_t>(words_per_tap)}, spec.c_in};
}

BitPlane PackedConvLayer::mask_plane(std::size_t o, std::size_t t) const {
  const auto first = mask_words.begin() + static_cast<std::ptrdiff_t>((o * spec.k + t) * words_per_tap);
  return {{first, first + static_cast<std::ptrdiff_t>(words_per_tap)}, spec.c_in};
}

int PackedConvLayer::weight(std::size_t o, std::size_t i, std::size_t t) const {
  const std::size_t word = (o * spec.k + t) * words_per_tap + i / 64;
  const std::uint64_t bit = std::uint64_t{1} << (i % 64);
  if (!(mask_words[word] & bit)) return 0;
  return (sign_words[word] & bit) ? 1 : -1;
}

void PackedConvLayer::negate_output(std::size_t o) {
  const std::size_t first = o * spec.k * words_per_tap;
  for (std::size_t w = first; w < first + spec.k * words_per_tap; ++w) {
    sign_words[w] = ~sign_words[w] & mask_words[w];
  }
  bias_code[o] = -bias_code[o];
}

std::int64_t PackedConvLayer::max_magnitude() const {
  std::int64_t bias_max = 0;
  for (std::int32_t b : bias_code) bias_max = std::max<std::int64_t>(bias_max, b < 0 ? -b : b);
  return static_cast<std::int64_t>(spec.c_in * spec.k) + bias_max;
}

void PackedConvLayer::validate() const {
  spec.validate();
  require(words_per_tap == BitPlane::words_for(spec.c_in), "PackedConvLayer: words_per_tap mismatch");
  const std::size_t total = spec.c_out * spec.k * words_per_tap;
  require(sign_words.size() == total && mask_words.size() == total, "PackedConvLayer: plane size mismatch");
  require(bias_code.size() == spec.c_out, "PackedConvLayer: bias size mismatch");
  for (std::size_t w = 0; w < total; ++w) {
    const std::uint64_t valid = tail_mask(spec.c_in, w % words_per_tap);
    require((mask_words[w] & ~valid) == 0 && (sign_words[w] & ~valid) == 0, "PackedConvLayer: padding bits set");
    require((sign_words[w] & ~mask_words[w]) == 0, "PackedConvLayer: sign bit outside the support mask");
    if (kind == WeightKind::binary) require(mask_words[w] == valid, "PackedConvLayer: binary layer with zero weight");
  }
}

std::vector<std::int32_t> packed_preactivation(const PackedActivations& x, const PackedConvLayer& layer) {
  const ConvLayerSpec& spec = layer.spec;
  require(x.channels() == spec.c_in, "packed_conv1d: input has " + std::to_string(x.channels()) +
                                         " channels, layer expects " + std::to_string(spec.c_in));
  require(layer.words_per_tap == x.words_per_position(), "packed_conv1d: word layout mismatch");
  const std::size_t h = x.positions(), k = spec.k, wpt = layer.words_per_tap, pad = spec.padding();
  const std::uint64_t* X = x.words().data();
  std::vector<std::int32_t> out(spec.c_out * h);
  const bool ternary = layer.kind == WeightKind::ternary;

  // support[o*(k+1) + t] = number of nonzero weights in taps [0, t)
  std::vector<std::int32_t> support;
  if (ternary) {
    support.assign(spec.c_out * (k + 1), 0);
    for (std::size_t o = 0; o < spec.c_out; ++o) {
      for (std::size_t t = 0; t < k; ++t) {
        std::int32_t n = 0;
        for (std::size_t w = 0; w < wpt; ++w) n += std::popcount(layer.mask_words[(o * k + t) * wpt + w]);
        support[o * (k + 1) + t + 1] = support[o * (k + 1) + t] + n;
      }
    }
  }

  for (std::size_t o = 0; o < spec.c_out; ++o) {
    const std::uint64_t* S = layer.sign_words.data() + o * k * wpt;
    const std::uint64_t* M = layer.mask_words.data() + o * k * wpt;
    const std::int32_t bias = layer.bias_code[o];
    std::int32_t* row = out.data() + o * h;
    for (std::size_t j = 0; j < h; ++j) {
      const std::size_t t_lo = j < pad ? pad - j : 0;
      const std::size_t t_hi = std::min(k, h + pad - j);
      const std::uint64_t* xw = X + (j + t_lo - pad) * wpt;
      const std::size_t first = t_lo * wpt;
      const std::size_t n_words = (t_hi - t_lo) * wpt;
      std::int32_t mismatches = 0;
      std::int32_t terms;
      if (ternary) {
        for (std::size_t w = 0; w < n_words; ++w) mismatches += std::popcount((xw[w] ^ S[first + w]) & M[first + w]);
        terms = support[o * (k + 1) + t_hi] - support[o * (k + 1) + t_lo];
      } else {
        // Padding bits are zero in both operands, so they never mismatch.
        for (std::size_t w = 0; w < n_words; ++w) mismatches += std::popcount(xw[w] ^ S[first + w]);
        terms = static_cast<std::int32_t>((t_hi - t_lo) * spec.c_in);
      }
      row[j] = terms - 2 * mismatches + bias;
    }
  }
  return out;
}

PackedActivations packed_conv1d(const PackedActivations& x, const PackedConvLayer& layer,
                                std::span<const std::int32_t> thresholds) {
  require(thresholds.size() == layer.spec.c_out, "packed_conv1d: " + std::to_string(thresholds.size()) +
                                                     " thresholds for " + std::to_string(layer.spec.c_out) +
                                                     " output channels");
  const std::vector<std::int32_t> pre = packed_preactivation(x, layer);
  const std::size_t h = x.positions();
  PackedActivations out(layer.spec.c_out, h);
  for (std::size_t o = 0; o < layer.spec.c_out; ++o) {
    for (std::size_t j = 0; j < h; ++j) {
      if (pre[o * h + j] >= thresholds[o]) out.set(o, j);
    }
  }
  return out;
}

std::int64_t fold_threshold(const std::function<bool(std::int64_t)>& fires, std::int64_t lo, std::int64_t hi) {
  if (lo > hi || !fires(hi)) return hi + 1;
  while (lo < hi) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if (fires(mid)) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

std::vector<std::int32_t> fold_batchnorm_sign(PackedConvLayer& layer, std::span<const double> mean,
                                              std::span<const double> inv_std, std::span<const double> gamma,
                                              std::span<const double> beta) {
  const std::size_t c = layer.spec.c_out;
  require(mean.size() == c && inv_std.size() == c && gamma.size() == c && beta.size() == c,
          "fold_batchnorm_sign: parameter count mismatch");
  const std::int64_t n = layer.max_magnitude();
  std::vector<std::int32_t> thresholds(c);
  for (std::size_t o = 0; o < c; ++o) {
    const auto eval = [&](std::int64_t pre) {
      return batchnorm_eval(static_cast<double>(pre), mean[o], inv_std[o], gamma[o], beta[o]) >= 0.0;
    };
    std::int64_t t;
    if (gamma[o] > 0.0) {
      t = fold_threshold(eval, -n, n);
    } else if (gamma[o] < 0.0) {
      layer.negate_output(o);
      t = fold_threshold([&](std::int64_t pre) { return eval(-pre); }, -n, n);
    } else {
      t = eval(0) ? -n : n + 1;
    }
    thresholds[o] = static_cast<std::int32_t>(t);
  }
  return thresholds;
}

}  // namespace bitturbo
