#include "bitturbo/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace bitturbo {

Adam::Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step(double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam: learning rate must be > 0");
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor& param = params_[p];
    auto values = param.values();
    const bool has_grad = param.has_grad();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = has_grad ? param.grad()[i] : 0.0;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.clear_grad();
}

}  // namespace bitturbo
