#pragma once

#include <cstddef>
#include <vector>

#include "lse/autodiff.hpp"

namespace lse::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed list of parameter nodes.
template <typename Real>
class Adam {
 public:
  Adam(std::vector<Var<Real>> params, AdamConfig config);

  /// Applies one update from the gradients currently held by the parameters.
  /// Parameters without a gradient buffer are treated as having zero gradient.
  void step();
  void zero_grad();

  std::size_t steps() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return config_; }
  const std::vector<Tensor<Real>>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor<Real>>& second_moments() const noexcept { return v_; }

 private:
  std::vector<Var<Real>> params_;
  AdamConfig config_;
  std::vector<Tensor<Real>> m_;
  std::vector<Tensor<Real>> v_;
  std::size_t step_ = 0;
};

}  // namespace lse::ad
