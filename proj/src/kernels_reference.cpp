#include <algorithm>
#include <cmath>

#include "lse/kernels.hpp"

namespace lse::kernels::reference {

template <typename Real>
void conv1d_forward(const Conv1dDims& d, std::span<const Real> x,
                    std::span<const Real> w, std::span<const Real> bias,
                    std::span<Real> y) {
  const auto K = static_cast<long>(d.length);
  const auto P = static_cast<long>(d.pad());
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t o = 0; o < d.out_channels; ++o) {
      for (long k = 0; k < K; ++k) {
        Real acc = bias.empty() ? Real(0) : bias[o];
        for (std::size_t i = 0; i < d.in_channels; ++i) {
          const Real* xi = &x[(n * d.in_channels + i) * d.length];
          const Real* wi = &w[(o * d.in_channels + i) * d.kernel];
          for (std::size_t t = 0; t < d.kernel; ++t) {
            const long src = k + static_cast<long>(t) - P;
            if (src >= 0 && src < K) acc += wi[t] * xi[src];
          }
        }
        y[(n * d.out_channels + o) * d.length + k] = acc;
      }
    }
  }
}

template <typename Real>
void conv1d_backward_input(const Conv1dDims& d, std::span<const Real> gy,
                           std::span<const Real> w, std::span<Real> gx) {
  const auto K = static_cast<long>(d.length);
  const auto P = static_cast<long>(d.pad());
  std::fill(gx.begin(), gx.end(), Real(0));
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t o = 0; o < d.out_channels; ++o) {
      for (long k = 0; k < K; ++k) {
        const Real g = gy[(n * d.out_channels + o) * d.length + k];
        for (std::size_t i = 0; i < d.in_channels; ++i) {
          Real* gxi = &gx[(n * d.in_channels + i) * d.length];
          const Real* wi = &w[(o * d.in_channels + i) * d.kernel];
          for (std::size_t t = 0; t < d.kernel; ++t) {
            const long src = k + static_cast<long>(t) - P;
            if (src >= 0 && src < K) gxi[src] += wi[t] * g;
          }
        }
      }
    }
  }
}

template <typename Real>
void conv1d_backward_weight(const Conv1dDims& d, std::span<const Real> x,
                            std::span<const Real> gy, std::span<Real> gw) {
  const auto K = static_cast<long>(d.length);
  const auto P = static_cast<long>(d.pad());
  std::fill(gw.begin(), gw.end(), Real(0));
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t o = 0; o < d.out_channels; ++o) {
      const Real* go = &gy[(n * d.out_channels + o) * d.length];
      for (std::size_t i = 0; i < d.in_channels; ++i) {
        const Real* xi = &x[(n * d.in_channels + i) * d.length];
        Real* gwi = &gw[(o * d.in_channels + i) * d.kernel];
        for (std::size_t t = 0; t < d.kernel; ++t) {
          for (long k = 0; k < K; ++k) {
            const long src = k + static_cast<long>(t) - P;
            if (src >= 0 && src < K) gwi[t] += go[k] * xi[src];
          }
        }
      }
    }
  }
}

template <typename Real>
void batchnorm_forward_train(const BatchNormDims& d, std::span<const Real> x,
                             std::span<const Real> gamma,
                             std::span<const Real> beta, Real eps,
                             std::span<Real> y, std::span<Real> mean,
                             std::span<Real> inv_std) {
  const double count = static_cast<double>(d.batch * d.length);
  for (std::size_t c = 0; c < d.channels; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < d.batch; ++n)
      for (std::size_t k = 0; k < d.length; ++k)
        sum += x[(n * d.channels + c) * d.length + k];
    const double mu = sum / count;
    double sq = 0.0;
    for (std::size_t n = 0; n < d.batch; ++n)
      for (std::size_t k = 0; k < d.length; ++k) {
        const double v = x[(n * d.channels + c) * d.length + k] - mu;
        sq += v * v;
      }
    const double istd = 1.0 / std::sqrt(sq / count + static_cast<double>(eps));
    mean[c] = static_cast<Real>(mu);
    inv_std[c] = static_cast<Real>(istd);
    for (std::size_t n = 0; n < d.batch; ++n)
      for (std::size_t k = 0; k < d.length; ++k) {
        const std::size_t idx = (n * d.channels + c) * d.length + k;
        y[idx] = static_cast<Real>(gamma[c] * ((x[idx] - mu) * istd) + beta[c]);
      }
  }
}

template <typename Real>
void batchnorm_backward(const BatchNormDims& d, std::span<const Real> x,
                        std::span<const Real> gy, std::span<const Real> gamma,
                        std::span<const Real> mean,
                        std::span<const Real> inv_std, std::span<Real> gx,
                        std::span<Real> ggamma, std::span<Real> gbeta) {
  const double count = static_cast<double>(d.batch * d.length);
  for (std::size_t c = 0; c < d.channels; ++c) {
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t n = 0; n < d.batch; ++n)
      for (std::size_t k = 0; k < d.length; ++k) {
        const std::size_t idx = (n * d.channels + c) * d.length + k;
        const double xhat = (x[idx] - mean[c]) * static_cast<double>(inv_std[c]);
        sum_g += gy[idx];
        sum_gx += gy[idx] * xhat;
      }
    gbeta[c] = static_cast<Real>(sum_g);
    ggamma[c] = static_cast<Real>(sum_gx);
    const double scale = gamma[c] * static_cast<double>(inv_std[c]) / count;
    for (std::size_t n = 0; n < d.batch; ++n)
      for (std::size_t k = 0; k < d.length; ++k) {
        const std::size_t idx = (n * d.channels + c) * d.length + k;
        const double xhat = (x[idx] - mean[c]) * static_cast<double>(inv_std[c]);
        gx[idx] = static_cast<Real>(scale * (count * gy[idx] - sum_g - xhat * sum_gx));
      }
  }
}

#define LSE_INSTANTIATE(Real)                                                 \
  template void conv1d_forward<Real>(const Conv1dDims&, std::span<const Real>, \
                                     std::span<const Real>,                    \
                                     std::span<const Real>, std::span<Real>);  \
  template void conv1d_backward_input<Real>(                                  \
      const Conv1dDims&, std::span<const Real>, std::span<const Real>,        \
      std::span<Real>);                                                       \
  template void conv1d_backward_weight<Real>(                                 \
      const Conv1dDims&, std::span<const Real>, std::span<const Real>,        \
      std::span<Real>);                                                       \
  template void batchnorm_forward_train<Real>(                                \
      const BatchNormDims&, std::span<const Real>, std::span<const Real>,     \
      std::span<const Real>, Real, std::span<Real>, std::span<Real>,          \
      std::span<Real>);                                                       \
  template void batchnorm_backward<Real>(                                     \
      const BatchNormDims&, std::span<const Real>, std::span<const Real>,     \
      std::span<const Real>, std::span<const Real>, std::span<const Real>,    \
      std::span<Real>, std::span<Real>, std::span<Real>);

LSE_INSTANTIATE(float)
LSE_INSTANTIATE(double)
#undef LSE_INSTANTIATE

}  // namespace lse::kernels::reference
