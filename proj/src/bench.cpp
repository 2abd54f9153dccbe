#include "bitturbo/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>

#include "bitturbo/bitkernel.hpp"
#include "bitturbo/channel.hpp"
#include "bitturbo/rng.hpp"

namespace bitturbo {
namespace {

// Keeps results observable so the timed work is not optimized away.
volatile double g_sink = 0.0;

Timing time_it(const std::function<double()>& fn, std::size_t iters, std::size_t reps) {
  if (iters == 0 || reps == 0) throw std::invalid_argument("bench: iterations and repetitions must be >= 1");
  g_sink = g_sink + fn();
  Timing t;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto start = std::chrono::steady_clock::now();
    double acc = 0.0;
    for (std::size_t i = 0; i < iters; ++i) acc += fn();
    const auto stop = std::chrono::steady_clock::now();
    g_sink = g_sink + acc;
    t.seconds.push_back(std::chrono::duration<double>(stop - start).count() / static_cast<double>(iters));
  }
  return t;
}

}  // namespace

double Timing::median() const {
  if (seconds.empty()) return 0.0;
  std::vector<double> s = seconds;
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  return n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

double Timing::relative_spread() const {
  if (seconds.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : seconds) mean += v;
  mean /= static_cast<double>(seconds.size());
  double var = 0.0;
  for (double v : seconds) var += (v - mean) * (v - mean);
  var /= static_cast<double>(seconds.size() - 1);
  return std::sqrt(var) / mean;
}

BenchResult bench_layer(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t h, std::size_t iters,
                        std::size_t reps, std::uint64_t seed) {
  const ConvLayerSpec spec{c_in, c_out, k, false, Activation::sign};
  spec.validate();
  RngCursor rng(seed, 0x42454e43);
  Tensor x({1, c_in, h});
  for (double& v : x.values()) v = rng.sign();
  Tensor w({c_out, c_in, k});
  for (double& v : w.values()) v = rng.sign();
  BatchNorm bn = BatchNorm::affine(c_out);
  for (std::size_t o = 0; o < c_out; ++o) {
    bn.running_mean[o] = rng.uniform(-3.0, 3.0);
    bn.running_var[o] = rng.uniform(0.5, 20.0);
    bn.gamma[o] = rng.uniform(-1.0, 1.0);
    bn.beta[o] = rng.uniform(-0.5, 0.5);
  }

  PackedConvLayer layer = PackedConvLayer::from_codes(spec, WeightKind::binary, w.values(), {});
  std::vector<double> inv_std(c_out);
  for (std::size_t o = 0; o < c_out; ++o) inv_std[o] = batchnorm_inv_std(bn.running_var[o], bn.eps);
  const std::vector<std::int32_t> thresholds =
      fold_batchnorm_sign(layer, bn.running_mean, inv_std, bn.gamma.values(), bn.beta.values());
  const PackedActivations packed_x = PackedActivations::from_values(x.values(), c_in, h);

  BenchResult r;
  char label[96];
  std::snprintf(label, sizeof label, "layer %zux%zu k=%zu h=%zu", c_in, c_out, k, h);
  r.label = label;
  r.float_path = time_it(
      [&] {
        const Tensor y = binarize(nullptr, batchnorm1d(nullptr, conv1d(nullptr, x, w, Tensor(), spec), bn));
        return y[0];
      },
      iters, reps);
  r.packed_path = time_it(
      [&] {
        const PackedActivations y = packed_conv1d(packed_x, layer, thresholds);
        return static_cast<double>(y.words()[0] & 1u);
      },
      iters, reps);
  return r;
}

BenchResult bench_hidden_layer(const CodecShape& shape, std::size_t iters, std::size_t reps) {
  return bench_layer(shape.filters, shape.filters, shape.kernel, shape.block_length, iters, reps);
}

BenchResult bench_decoder(const CodecModel& model, const PackedDecoder& packed, std::size_t blocks,
                          std::size_t iters, std::size_t reps, std::uint64_t seed) {
  if (blocks == 0) throw std::invalid_argument("bench: blocks must be >= 1");
  const Tensor u = random_messages(blocks, model.shape.block_length, seed, 0x42454e44);
  const Tensor z = awgn(encode(u, model), ChannelSpec::from_snr(0.0, seed));
  BenchResult r;
  r.label = "decoder " + model.mode.name() + " x" + std::to_string(blocks) + " blocks";
  r.float_path = time_it([&] { return decode_soft(z, model)[0]; }, iters, reps);
  r.packed_path = time_it([&] { return packed.decode_soft(z)[0]; }, iters, reps);
  return r;
}

std::string bench_report(const BenchResult& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "%s: float %.3f us, packed %.3f us, speedup %.2fx (spread float %.1f%%, packed %.1f%%)", r.label.c_str(),
                r.float_path.median() * 1e6, r.packed_path.median() * 1e6, r.speedup(),
                100.0 * r.float_path.relative_spread(), 100.0 * r.packed_path.relative_spread());
  return buf;
}

}  // namespace bitturbo
