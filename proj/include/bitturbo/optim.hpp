#pragma once

#include <cstdint>
#include <vector>

#include "bitturbo/tensor.hpp"

namespace bitturbo {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter list. Parameters without a grad
/// buffer are treated as having a zero gradient.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamConfig config = {});

  /// Throws std::invalid_argument when lr <= 0.
  void step(double lr);
  void zero_grad();

  std::int64_t steps() const noexcept { return step_; }
  const std::vector<Tensor>& params() const noexcept { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t step_ = 0;
};

}  // namespace bitturbo
