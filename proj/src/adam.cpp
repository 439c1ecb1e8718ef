#include "lse/adam.hpp"

#include <cmath>

namespace lse::ad {

template <typename Real>
Adam<Real>::Adam(std::vector<Var<Real>> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p->shape());
    v_.emplace_back(p->shape());
  }
}

template <typename Real>
void Adam<Real>::step() {
  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    auto& param = *params_[p];
    if (!param.has_grad()) continue;
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double g = param.grad[i];
      m[i] = static_cast<Real>(b1 * m[i] + (1.0 - b1) * g);
      v[i] = static_cast<Real>(b2 * v[i] + (1.0 - b2) * g * g);
      const double m_hat = m[i] / corr1;
      const double v_hat = v[i] / corr2;
      param.value[i] -= static_cast<Real>(config_.learning_rate * m_hat /
                                          (std::sqrt(v_hat) + config_.epsilon));
    }
  }
}

template <typename Real>
void Adam<Real>::zero_grad() {
  ad::zero_grad<Real>(params_);
}

template class Adam<float>;
template class Adam<double>;

}  // namespace lse::ad
