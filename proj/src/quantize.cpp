#include "bitturbo/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace bitturbo {

QuantMode QuantMode::real() { return {Kind::real, 64, false, false}; }
QuantMode QuantMode::binary() { return {Kind::binary, 1, true, true}; }
QuantMode QuantMode::ternary() { return {Kind::ternary, 1, true, true}; }

QuantMode QuantMode::post_quant(int q) {
  QuantMode m{Kind::post_quant, q, true, false};
  m.validate();
  return m;
}

QuantMode QuantMode::parse(const std::string& name) {
  if (name == "real") return real();
  if (name == "binary") return binary();
  if (name == "ternary") return ternary();
  if (name.rfind("q", 0) == 0 && name.size() > 1) {
    try {
      return post_quant(std::stoi(name.substr(1)));
    } catch (const std::logic_error&) {
    }
  }
  throw std::invalid_argument("unknown mode '" + name + "' (expected real, binary, ternary, q1, q2, q4 or q8)");
}

std::string QuantMode::name() const {
  switch (kind) {
    case Kind::real: return "real";
    case Kind::binary: return "binary";
    case Kind::ternary: return "ternary";
    case Kind::post_quant: return "q" + std::to_string(bits);
  }
  return "?";
}

void QuantMode::validate() const {
  if (kind == Kind::post_quant && bits != 1 && bits != 2 && bits != 4 && bits != 8) {
    throw std::invalid_argument("post-quantization supports q in {1,2,4,8}, got " + std::to_string(bits));
  }
}

double ternary_threshold(std::span<const double> r, double multiplier) {
  if (r.empty()) throw std::invalid_argument("ternarize: empty tensor");
  double total = 0.0;
  for (double v : r) total += std::abs(v);
  return multiplier * (total / static_cast<double>(r.size()));
}

namespace {

Tensor straight_through(Tape* tape, const Tensor& r, Tensor y) {
  if (tape && r.requires_grad()) {
    y.set_requires_grad(true);
    tape->record([r, y]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto rv = r.values();
      auto dr = r.ensure_grad();
      for (std::size_t i = 0; i < dr.size(); ++i) {
        if (std::abs(rv[i]) <= 1.0) dr[i] += dy[i];
      }
    });
  }
  return y;
}

}  // namespace

Tensor binarize(Tape* tape, const Tensor& r) {
  Tensor y(r.shape());
  auto rv = r.values();
  auto yv = y.values();
  for (std::size_t i = 0; i < rv.size(); ++i) yv[i] = binarize_value(rv[i]);
  return straight_through(tape, r, std::move(y));
}

Tensor ternarize(Tape* tape, const Tensor& r, double multiplier) {
  const double delta = ternary_threshold(r.values(), multiplier);
  if (delta == 0.0) std::clog << "warning: ternarize on an all-zero tensor yields all zeros\n";
  Tensor y(r.shape());
  auto rv = r.values();
  auto yv = y.values();
  for (std::size_t i = 0; i < rv.size(); ++i) yv[i] = ternarize_value(rv[i], delta);
  return straight_through(tape, r, std::move(y));
}

Tensor ste_backward(const Tensor& grad_b, const Tensor& r) {
  if (grad_b.shape() != r.shape()) throw std::invalid_argument("ste_backward: shape mismatch");
  Tensor out(r.shape());
  auto g = grad_b.values();
  auto rv = r.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::abs(rv[i]) <= 1.0 ? g[i] : 0.0;
  return out;
}

Tensor LatentWeights::binary_view() const { return binarize(nullptr, real); }
Tensor LatentWeights::ternary_view() const { return ternarize(nullptr, real); }

void clip_latent(Tensor& w) {
  for (double& v : w.values()) v = std::clamp(v, -1.0, 1.0);
}

double post_quant_level(std::uint32_t code, int bits, double scale) {
  const double steps = static_cast<double>((1u << bits) - 1u);
  // The ratio is exactly +-1 at the extreme codes, so max|w_hat| == scale and
  // quantizing an already quantized tensor reproduces it.
  return scale * ((2.0 * static_cast<double>(code) - steps) / steps);
}

PostQuantized post_quantize(std::span<const double> w, int bits) {
  QuantMode::post_quant(bits);
  if (w.empty()) throw std::invalid_argument("post_quantize: empty tensor");
  PostQuantized out;
  out.bits = bits;
  for (double v : w) out.scale = std::max(out.scale, std::abs(v));
  const std::uint32_t top = (1u << bits) - 1u;
  out.codes.resize(w.size());
  out.values.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    std::uint32_t code = top;
    if (out.scale > 0.0) {
      const double pos = (w[i] / out.scale + 1.0) * 0.5 * static_cast<double>(top);
      const auto lo = static_cast<std::uint32_t>(std::clamp(std::floor(pos), 0.0, static_cast<double>(top)));
      const std::uint32_t hi = std::min(lo + 1, top);
      const double lv = post_quant_level(lo, bits, out.scale);
      const double hv = post_quant_level(hi, bits, out.scale);
      const double dl = std::abs(w[i] - lv);
      const double dh = std::abs(w[i] - hv);
      if (dl < dh) {
        code = lo;
      } else if (dh < dl) {
        code = hi;
      } else if (std::abs(lv) != std::abs(hv)) {
        code = std::abs(lv) < std::abs(hv) ? lo : hi;
      } else {
        code = hv >= 0.0 ? hi : lo;
      }
    }
    out.codes[i] = static_cast<std::uint8_t>(code);
    out.values[i] = post_quant_level(code, bits, out.scale);
  }
  return out;
}

Tensor post_quantize(const Tensor& w, int bits) {
  PostQuantized q = post_quantize(w.values(), bits);
  return Tensor(w.shape(), std::move(q.values));
}

}  // namespace bitturbo
