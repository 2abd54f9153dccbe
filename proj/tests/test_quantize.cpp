#include <doctest.h>

#include <cmath>

#include "bitturbo/quantize.hpp"
#include "support/gradcheck.hpp"

using namespace bitturbo;
using bitturbo::testing::random_tensor;

namespace {
std::vector<double> values_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }
}  // namespace

TEST_CASE("binarize follows sign with sign(0) = +1") {
  const Tensor b = binarize(nullptr, Tensor({4}, {0.7, -0.2, 0.0, -0.0}));
  CHECK(values_of(b) == std::vector<double>{1, -1, 1, 1});
  RngCursor rng(1);
  const Tensor r = random_tensor({200}, rng, -3, 3);
  const Tensor once = binarize(nullptr, r);
  CHECK(values_of(binarize(nullptr, once)) == values_of(once));
}

TEST_CASE("straight-through backward") {
  const Tensor grad_b({4}, {2.0, 2.0, 2.0, 2.0});
  const Tensor r({4}, {0.5, 1.5, 1.0, -1.0});
  CHECK(values_of(ste_backward(grad_b, r)) == std::vector<double>{2.0, 0.0, 2.0, 2.0});
  CHECK_THROWS_AS(ste_backward(Tensor({2}), r), std::invalid_argument);

  RngCursor rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor w = random_tensor({3, 4, 5}, rng, -2.0, 2.0);
    const Tensor probe = random_tensor({3, 4, 5}, rng);
    for (int ternary = 0; ternary < 2; ++ternary) {
      w.set_requires_grad(true);
      w.clear_grad();
      Tape tape;
      Tensor loss = bitturbo::testing::probe_loss(&tape, ternary ? ternarize(&tape, w) : binarize(&tape, w), probe);
      tape.backward(loss);
      const Tensor expected = ste_backward(probe, w);
      for (std::size_t i = 0; i < w.numel(); ++i) CHECK(w.grad()[i] == expected[i]);
    }
  }
}

TEST_CASE("ternarize worked example and band") {
  const Tensor r({4}, {0.9, -0.3, 0.05, -0.8});
  CHECK(ternary_threshold(r.values()) == doctest::Approx(0.35875).epsilon(1e-12));
  CHECK(values_of(ternarize(nullptr, r)) == std::vector<double>{1, 0, 0, -1});
  CHECK(values_of(ternarize(nullptr, Tensor({3}, 0.0))) == std::vector<double>{0, 0, 0});
  CHECK_THROWS_AS(ternary_threshold(std::span<const double>()), std::invalid_argument);
  // Boundary: |r| == delta maps to zero.
  CHECK(ternarize_value(0.5, 0.5) == 0.0);
  CHECK(ternarize_value(-0.5, 0.5) == 0.0);
}

TEST_CASE("ternarize is odd and its sparsity grows with the multiplier") {
  RngCursor rng(3);
  const Tensor r = random_tensor({500}, rng, -1.0, 1.0);
  Tensor neg({500});
  for (std::size_t i = 0; i < 500; ++i) neg[i] = -r[i];
  const Tensor t = ternarize(nullptr, r), tn = ternarize(nullptr, neg);
  for (std::size_t i = 0; i < 500; ++i) CHECK(tn[i] == -t[i]);
  std::size_t prev = 0;
  for (double m = 0.0; m <= 2.0; m += 0.1) {
    const Tensor q = ternarize(nullptr, r, m);
    std::size_t zeros = 0;
    for (double v : q.values()) zeros += v == 0.0;
    CHECK(zeros >= prev);
    prev = zeros;
  }
}

TEST_CASE("clip_latent") {
  Tensor w({4}, {1.7, -2.0, 0.3, -1.0});
  clip_latent(w);
  CHECK(values_of(w) == std::vector<double>{1.0, -1.0, 0.3, -1.0});
  const auto once = values_of(w);
  clip_latent(w);
  CHECK(values_of(w) == once);
}

TEST_CASE("post_quantize") {
  CHECK(values_of(post_quantize(Tensor({2}, {0.3, -0.7}), 1)) == std::vector<double>{0.7, -0.7});
  CHECK_THROWS_AS(post_quantize(std::span<const double>(), 4), std::invalid_argument);
  CHECK_THROWS_AS(post_quantize(Tensor({2}, {0.3, -0.7}), 3), std::invalid_argument);

  RngCursor rng(4);
  for (int q : {2, 4, 8}) {
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor w = random_tensor({257}, rng, -0.4, 0.9);
      const Tensor qw = post_quantize(w, q);
      double s = 0.0, err = 0.0;
      for (std::size_t i = 0; i < w.numel(); ++i) s = std::max(s, std::abs(w[i]));
      for (std::size_t i = 0; i < w.numel(); ++i) err = std::max(err, std::abs(w[i] - qw[i]));
      CHECK(err <= s / ((1 << q) - 1) + 1e-15);
      CHECK(values_of(post_quantize(qw, q)) == values_of(qw));
    }
  }
}

TEST_CASE("post_quantize picks the nearest level, ties to the smaller magnitude") {
  // q = 2, scale 3: levels -3, -1, 1, 3.
  const PostQuantized q = post_quantize(std::vector<double>{3.0, 2.0, -2.0, 0.0, 1.2}, 2);
  CHECK(q.scale == 3.0);
  CHECK(q.values == std::vector<double>{3.0, 1.0, -1.0, 1.0, 1.0});
}

TEST_CASE("quant modes") {
  CHECK(QuantMode::parse("binary").binary_activations);
  CHECK(QuantMode::parse("ternary").is_bit_mode());
  CHECK(QuantMode::parse("q4").bits == 4);
  CHECK_FALSE(QuantMode::parse("real").quantize_weights);
  CHECK_THROWS_AS(QuantMode::parse("q3"), std::invalid_argument);
  CHECK_THROWS_AS(QuantMode::parse("float"), std::invalid_argument);
  for (const char* name : {"real", "binary", "ternary", "q1", "q2", "q4", "q8"}) {
    CHECK(QuantMode::parse(name).name() == name);
  }
}
