#include "bitturbo/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace bitturbo {
namespace {

bool tracking(Tape* tape, std::initializer_list<const Tensor*> inputs) {
  if (tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t && t->defined() && t->requires_grad(); });
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// y[0..n) += a * x[0..n)
inline void axpy(double* __restrict y, const double* __restrict x, std::size_t n, double a) {
  for (std::size_t j = 0; j < n; ++j) y[j] += a * x[j];
}

// Four independent accumulators, combined in a fixed order.
inline double dot(const double* __restrict a, const double* __restrict b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += a[j] * b[j];
    s1 += a[j + 1] * b[j + 1];
    s2 += a[j + 2] * b[j + 2];
    s3 += a[j + 3] * b[j + 3];
  }
  for (; j < n; ++j) s0 += a[j] * b[j];
  return (s0 + s1) + (s2 + s3);
}

// Valid output range [lo, hi) for tap offset s so that j+s stays inside [0, h).
struct TapRange {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

inline TapRange tap_range(std::ptrdiff_t s, std::size_t h) {
  const auto hh = static_cast<std::ptrdiff_t>(h);
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -s);
  const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(hh, hh - s);
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

void require_rank3(const Tensor& x, const char* op) {
  require(x.defined() && x.rank() == 3, std::string(op) + ": expected [batch, channels, length], got " +
                                            (x.defined() ? shape_string(x.shape()) : "undefined"));
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::elu: return "elu";
    case Activation::sign: return "sign";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

void ConvLayerSpec::validate() const {
  require(c_in >= 1 && c_out >= 1, "conv spec: channel counts must be >= 1");
  require(k >= 1 && k % 2 == 1, "conv spec: kernel width must be odd, got " + std::to_string(k));
}

Tensor conv1d(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& bias, const ConvLayerSpec& spec) {
  spec.validate();
  require_rank3(x, "conv1d");
  require(w.defined() && w.shape() == Shape{spec.c_out, spec.c_in, spec.k},
          "conv1d: weight shape " + (w.defined() ? shape_string(w.shape()) : std::string("undefined")) +
              " does not match spec");
  require(x.dim(1) == spec.c_in, "conv1d: input has " + std::to_string(x.dim(1)) + " channels, spec expects " +
                                     std::to_string(spec.c_in));
  if (spec.has_bias) {
    require(bias.defined() && bias.shape() == Shape{spec.c_out}, "conv1d: bias shape mismatch");
  }

  const std::size_t nb = x.dim(0), cin = spec.c_in, cout = spec.c_out, k = spec.k, h = x.dim(2);
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding());
  Tensor y({nb, cout, h});
  const double* X = x.values().data();
  const double* W = w.values().data();
  double* Y = y.values().data();

  for (std::size_t n = 0; n < nb; ++n) {
    for (std::size_t o = 0; o < cout; ++o) {
      double* yr = Y + (n * cout + o) * h;
      if (spec.has_bias) std::fill(yr, yr + h, bias[o]);
      for (std::size_t i = 0; i < cin; ++i) {
        const double* xr = X + (n * cin + i) * h;
        const double* wr = W + (o * cin + i) * k;
        for (std::size_t t = 0; t < k; ++t) {
          const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t) - pad;
          const TapRange r = tap_range(s, h);
          if (r.hi > r.lo) axpy(yr + r.lo, xr + (static_cast<std::ptrdiff_t>(r.lo) + s), r.hi - r.lo, wr[t]);
        }
      }
    }
  }
  check_finite(y, "conv1d");

  if (tracking(tape, {&x, &w, &bias})) {
    y.set_requires_grad(true);
    tape->record([x, w, bias, y, spec, nb, cin, cout, k, h, pad]() mutable {
      if (!y.has_grad()) return;
      const double* DY = y.grad().data();
      const double* X = x.values().data();
      const double* W = w.values().data();
      if (x.requires_grad()) {
        double* DX = x.ensure_grad().data();
        for (std::size_t n = 0; n < nb; ++n) {
          for (std::size_t o = 0; o < cout; ++o) {
            const double* dyr = DY + (n * cout + o) * h;
            for (std::size_t i = 0; i < cin; ++i) {
              double* dxr = DX + (n * cin + i) * h;
              const double* wr = W + (o * cin + i) * k;
              for (std::size_t t = 0; t < k; ++t) {
                const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t) - pad;
                const TapRange r = tap_range(s, h);
                if (r.hi > r.lo) axpy(dxr + (static_cast<std::ptrdiff_t>(r.lo) + s), dyr + r.lo, r.hi - r.lo, wr[t]);
              }
            }
          }
        }
      }
      if (w.requires_grad()) {
        double* DW = w.ensure_grad().data();
        for (std::size_t n = 0; n < nb; ++n) {
          for (std::size_t o = 0; o < cout; ++o) {
            const double* dyr = DY + (n * cout + o) * h;
            for (std::size_t i = 0; i < cin; ++i) {
              const double* xr = X + (n * cin + i) * h;
              double* dwr = DW + (o * cin + i) * k;
              for (std::size_t t = 0; t < k; ++t) {
                const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t) - pad;
                const TapRange r = tap_range(s, h);
                if (r.hi > r.lo) dwr[t] += dot(dyr + r.lo, xr + (static_cast<std::ptrdiff_t>(r.lo) + s), r.hi - r.lo);
              }
            }
          }
        }
      }
      if (spec.has_bias && bias.requires_grad()) {
        auto DB = bias.ensure_grad();
        for (std::size_t n = 0; n < nb; ++n) {
          for (std::size_t o = 0; o < cout; ++o) {
            const double* dyr = DY + (n * cout + o) * h;
            double acc = 0.0;
            for (std::size_t j = 0; j < h; ++j) acc += dyr[j];
            DB[o] += acc;
          }
        }
      }
    });
  }
  return y;
}

Tensor elu(Tape* tape, const Tensor& x) {
  Tensor y(x.shape());
  auto xv = x.values();
  auto yv = y.values();
  for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = xv[i] > 0.0 ? xv[i] : std::expm1(xv[i]);
  check_finite(y, "elu");
  if (tracking(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record([x, y]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto xv = x.values();
      auto yv = y.values();
      auto dx = x.ensure_grad();
      // d/dx (exp(x) - 1) = exp(x) = y + 1
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * (xv[i] > 0.0 ? 1.0 : yv[i] + 1.0);
    });
  }
  return y;
}

Tensor sigmoid(Tape* tape, const Tensor& x) {
  Tensor y(x.shape());
  auto xv = x.values();
  auto yv = y.values();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    if (v >= 0.0) {
      yv[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      yv[i] = e / (1.0 + e);
    }
  }
  check_finite(y, "sigmoid");
  if (tracking(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record([x, y]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto yv = y.values();
      auto dx = x.ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * yv[i] * (1.0 - yv[i]);
    });
  }
  return y;
}

BatchNorm BatchNorm::affine(std::size_t channels, double eps) {
  BatchNorm bn;
  bn.gamma = Tensor({channels}, 1.0);
  bn.beta = Tensor({channels}, 0.0);
  bn.running_mean.assign(channels, 0.0);
  bn.running_var.assign(channels, 1.0);
  bn.eps = eps;
  return bn;
}

BatchNorm BatchNorm::plain(std::size_t channels, double eps) {
  BatchNorm bn;
  bn.running_mean.assign(channels, 0.0);
  bn.running_var.assign(channels, 1.0);
  bn.eps = eps;
  return bn;
}

double batchnorm_inv_std(double var, double eps) { return 1.0 / std::sqrt(var + eps); }

namespace {

Tensor batchnorm_impl(Tape* tape, const Tensor& x, const BatchNorm& bn, bool training, BatchNorm* update) {
  require_rank3(x, "batchnorm1d");
  const std::size_t nb = x.dim(0), c = x.dim(1), h = x.dim(2);
  require(bn.channels() == c, "batchnorm1d: channel mismatch");
  if (bn.has_affine()) require(bn.gamma.numel() == c && bn.beta.numel() == c, "batchnorm1d: affine shape mismatch");
  const std::size_t count = nb * h;
  if (training) require(count >= 2, "batchnorm1d: training mode needs batch*length >= 2");

  std::vector<double> mean(c), inv_std(c);
  const double* X = x.values().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (training) {
      double s = 0.0;
      for (std::size_t n = 0; n < nb; ++n) {
        const double* r = X + (n * c + ch) * h;
        for (std::size_t j = 0; j < h; ++j) s += r[j];
      }
      const double m = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t n = 0; n < nb; ++n) {
        const double* r = X + (n * c + ch) * h;
        for (std::size_t j = 0; j < h; ++j) ss += (r[j] - m) * (r[j] - m);
      }
      const double var = ss / static_cast<double>(count);
      mean[ch] = m;
      inv_std[ch] = batchnorm_inv_std(var, bn.eps);
      const double unbiased = ss / static_cast<double>(count - 1);
      if (update) {
        update->running_mean[ch] = (1.0 - bn.momentum) * bn.running_mean[ch] + bn.momentum * m;
        update->running_var[ch] = (1.0 - bn.momentum) * bn.running_var[ch] + bn.momentum * unbiased;
      }
    } else {
      mean[ch] = bn.running_mean[ch];
      inv_std[ch] = batchnorm_inv_std(bn.running_var[ch], bn.eps);
    }
  }

  Tensor y(x.shape());
  double* Y = y.values().data();
  for (std::size_t n = 0; n < nb; ++n) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double g = bn.has_affine() ? bn.gamma[ch] : 1.0;
      const double b = bn.has_affine() ? bn.beta[ch] : 0.0;
      const double* xr = X + (n * c + ch) * h;
      double* yr = Y + (n * c + ch) * h;
      for (std::size_t j = 0; j < h; ++j) yr[j] = batchnorm_eval(xr[j], mean[ch], inv_std[ch], g, b);
    }
  }
  check_finite(y, "batchnorm1d");

  Tensor gamma = bn.gamma;
  Tensor beta = bn.beta;
  if (tracking(tape, {&x, &gamma, &beta})) {
    y.set_requires_grad(true);
    tape->record([x, y, gamma, beta, mean, inv_std, training, nb, c, h, count]() mutable {
      if (!y.has_grad()) return;
      const double* DY = y.grad().data();
      const double* X = x.values().data();
      const bool affine = gamma.defined();
      double* DX = x.requires_grad() ? x.ensure_grad().data() : nullptr;
      double* DG = affine && gamma.requires_grad() ? gamma.ensure_grad().data() : nullptr;
      double* DB = affine && beta.requires_grad() ? beta.ensure_grad().data() : nullptr;
      const double inv_count = 1.0 / static_cast<double>(count);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double g = affine ? gamma[ch] : 1.0;
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t n = 0; n < nb; ++n) {
          const double* xr = X + (n * c + ch) * h;
          const double* dyr = DY + (n * c + ch) * h;
          for (std::size_t j = 0; j < h; ++j) {
            sum_dy += dyr[j];
            sum_dy_xhat += dyr[j] * (xr[j] - mean[ch]) * inv_std[ch];
          }
        }
        if (DG) DG[ch] += sum_dy_xhat;
        if (DB) DB[ch] += sum_dy;
        if (!DX) continue;
        for (std::size_t n = 0; n < nb; ++n) {
          const double* xr = X + (n * c + ch) * h;
          const double* dyr = DY + (n * c + ch) * h;
          double* dxr = DX + (n * c + ch) * h;
          for (std::size_t j = 0; j < h; ++j) {
            if (training) {
              const double xhat = (xr[j] - mean[ch]) * inv_std[ch];
              dxr[j] += g * inv_std[ch] * (dyr[j] - sum_dy * inv_count - xhat * sum_dy_xhat * inv_count);
            } else {
              dxr[j] += g * inv_std[ch] * dyr[j];
            }
          }
        }
      }
    });
  }
  return y;
}

}  // namespace

Tensor batchnorm1d(Tape* tape, const Tensor& x, BatchNorm& bn, bool training) {
  return batchnorm_impl(tape, x, bn, training, training ? &bn : nullptr);
}

Tensor batchnorm1d(Tape* tape, const Tensor& x, const BatchNorm& bn) {
  return batchnorm_impl(tape, x, bn, false, nullptr);
}

Tensor bce_loss(Tape* tape, const Tensor& p, const Tensor& target) {
  require(p.defined() && target.defined() && p.shape() == target.shape(), "bce_loss: shape mismatch");
  require(p.numel() > 0, "bce_loss: empty input");
  auto pv = p.values();
  auto tv = target.values();
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (tv[i] != 0.0 && tv[i] != 1.0) throw std::invalid_argument("bce_loss: target outside {0,1}");
    const double pc = std::clamp(pv[i], kBceEps, 1.0 - kBceEps);
    total += tv[i] == 1.0 ? -std::log(pc) : -std::log(1.0 - pc);
  }
  const double n = static_cast<double>(pv.size());
  Tensor loss({}, std::vector<double>{total / n});
  check_finite(loss, "bce_loss");
  if (tracking(tape, {&p})) {
    loss.set_requires_grad(true);
    tape->record([p, target, loss, n]() mutable {
      if (!loss.has_grad()) return;
      const double g = loss.grad()[0] / n;
      auto pv = p.values();
      auto tv = target.values();
      auto dp = p.ensure_grad();
      // Gradient evaluated at the clamped probability and passed through the clamp.
      for (std::size_t i = 0; i < dp.size(); ++i) {
        const double pc = std::clamp(pv[i], kBceEps, 1.0 - kBceEps);
        dp[i] += g * (tv[i] == 1.0 ? -1.0 / pc : 1.0 / (1.0 - pc));
      }
    });
  }
  return loss;
}

Tensor sum(Tape* tape, const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  Tensor y({}, std::vector<double>{total});
  check_finite(y, "sum");
  if (tracking(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record([x, y]() mutable {
      if (!y.has_grad()) return;
      const double g = y.grad()[0];
      for (double& d : x.ensure_grad()) d += g;
    });
  }
  return y;
}

Tensor scale(Tape* tape, const Tensor& x, double factor) {
  Tensor y(x.shape());
  auto xv = x.values();
  auto yv = y.values();
  for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = xv[i] * factor;
  check_finite(y, "scale");
  if (tracking(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record([x, y, factor]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto dx = x.ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * factor;
    });
  }
  return y;
}

Tensor scale_by(Tape* tape, const Tensor& x, const Tensor& s) {
  require(s.defined() && s.numel() == 1, "scale_by: factor must hold exactly one element");
  const double factor = s[0];
  Tensor y(x.shape());
  auto xv = x.values();
  auto yv = y.values();
  for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = xv[i] * factor;
  check_finite(y, "scale_by");
  if (tracking(tape, {&x, &s})) {
    y.set_requires_grad(true);
    tape->record([x, s, y, factor]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto xv = x.values();
      if (x.requires_grad()) {
        auto dx = x.ensure_grad();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * factor;
      }
      if (s.requires_grad()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < dy.size(); ++i) acc += dy[i] * xv[i];
        s.ensure_grad()[0] += acc;
      }
    });
  }
  return y;
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add: shape mismatch");
  Tensor y(a.shape());
  auto av = a.values();
  auto bv = b.values();
  auto yv = y.values();
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = av[i] + bv[i];
  check_finite(y, "add");
  if (tracking(tape, {&a, &b})) {
    y.set_requires_grad(true);
    tape->record([a, b, y]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto d = t->ensure_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
      }
    });
  }
  return y;
}

Tensor concat_channels(Tape* tape, std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  for (const Tensor& p : parts) require_rank3(p, "concat_channels");
  const std::size_t nb = parts[0].dim(0), h = parts[0].dim(2);
  std::size_t c_total = 0;
  for (const Tensor& p : parts) {
    require(p.dim(0) == nb && p.dim(2) == h, "concat_channels: batch/length mismatch");
    c_total += p.dim(1);
  }
  Tensor y({nb, c_total, h});
  double* Y = y.values().data();
  for (std::size_t n = 0; n < nb; ++n) {
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
      const std::size_t c = p.dim(1);
      const double* src = p.values().data() + n * c * h;
      std::copy(src, src + c * h, Y + (n * c_total + offset) * h);
      offset += c;
    }
  }
  bool any = false;
  for (const Tensor& p : parts) any = any || p.requires_grad();
  if (tape && any) {
    y.set_requires_grad(true);
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    tape->record([inputs, y, nb, c_total, h]() mutable {
      if (!y.has_grad()) return;
      const double* DY = y.grad().data();
      std::size_t offset = 0;
      for (Tensor& p : inputs) {
        const std::size_t c = p.dim(1);
        if (p.requires_grad()) {
          double* dp = p.ensure_grad().data();
          for (std::size_t n = 0; n < nb; ++n) {
            const double* src = DY + (n * c_total + offset) * h;
            double* dst = dp + n * c * h;
            for (std::size_t i = 0; i < c * h; ++i) dst[i] += src[i];
          }
        }
        offset += c;
      }
    });
  }
  return y;
}

Tensor slice_channels(Tape* tape, const Tensor& x, std::size_t first, std::size_t count) {
  require_rank3(x, "slice_channels");
  const std::size_t nb = x.dim(0), c = x.dim(1), h = x.dim(2);
  require(count >= 1 && first + count <= c, "slice_channels: range out of bounds");
  Tensor y({nb, count, h});
  for (std::size_t n = 0; n < nb; ++n) {
    const double* src = x.values().data() + (n * c + first) * h;
    std::copy(src, src + count * h, y.values().data() + n * count * h);
  }
  if (tracking(tape, {&x})) {
    y.set_requires_grad(true);
    tape->record([x, y, nb, c, h, first, count]() mutable {
      if (!y.has_grad()) return;
      const double* DY = y.grad().data();
      double* DX = x.ensure_grad().data();
      for (std::size_t n = 0; n < nb; ++n) {
        const double* src = DY + n * count * h;
        double* dst = DX + (n * c + first) * h;
        for (std::size_t i = 0; i < count * h; ++i) dst[i] += src[i];
      }
    });
  }
  return y;
}

namespace {

void check_perm(const Tensor& x, std::span<const std::uint32_t> perm, const char* op) {
  require(x.defined() && x.rank() >= 1, std::string(op) + ": undefined input");
  require(x.shape().back() == perm.size(), std::string(op) + ": permutation length " + std::to_string(perm.size()) +
                                               " does not match block length " + std::to_string(x.shape().back()));
}

// gather: y[r, j] = x[r, perm[j]]; scatter: y[r, perm[j]] = x[r, j]
void permute_rows(std::span<const double> src, std::span<double> dst, std::span<const std::uint32_t> perm,
                  bool gather, bool accumulate) {
  const std::size_t h = perm.size();
  const std::size_t rows = h ? src.size() / h : 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* s = src.data() + r * h;
    double* d = dst.data() + r * h;
    for (std::size_t j = 0; j < h; ++j) {
      const std::size_t from = gather ? perm[j] : j;
      const std::size_t to = gather ? j : perm[j];
      if (accumulate) {
        d[to] += s[from];
      } else {
        d[to] = s[from];
      }
    }
  }
}

Tensor permute_op(Tape* tape, const Tensor& x, std::span<const std::uint32_t> perm, bool gather) {
  check_perm(x, perm, gather ? "gather_positions" : "scatter_positions");
  Tensor y(x.shape());
  permute_rows(x.values(), y.values(), perm, gather, false);
  if (tape && x.requires_grad()) {
    y.set_requires_grad(true);
    std::vector<std::uint32_t> p(perm.begin(), perm.end());
    tape->record([x, y, p, gather]() mutable {
      if (!y.has_grad()) return;
      // The adjoint of a gather is the matching scatter and vice versa.
      permute_rows(y.grad(), x.ensure_grad(), p, !gather, true);
    });
  }
  return y;
}

}  // namespace

Tensor gather_positions(Tape* tape, const Tensor& x, std::span<const std::uint32_t> perm) {
  return permute_op(tape, x, perm, true);
}

Tensor scatter_positions(Tape* tape, const Tensor& x, std::span<const std::uint32_t> perm) {
  return permute_op(tape, x, perm, false);
}

}  // namespace bitturbo
