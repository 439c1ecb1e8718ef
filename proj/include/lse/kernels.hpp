#pragma once

// Compute kernels behind the autodiff operators. Every kernel exists twice:
// `reference` is a plain serial loop nest used as the test oracle, `parallel`
// is the OpenMP + Eigen version the graph actually runs. Both take
// row-major buffers: activations (N, C, K), conv weights (C_out, C_in, L).
//
// The parallel kernels only split work across independent outputs (samples
// or channels); every floating-point reduction runs in a fixed serial order,
// so results do not depend on the thread count.

#include <cstddef>
#include <span>

namespace lse::kernels {

struct Conv1dDims {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t length = 1;
  std::size_t kernel = 1;

  std::size_t pad() const noexcept { return kernel / 2; }
  std::size_t input_size() const noexcept { return batch * in_channels * length; }
  std::size_t output_size() const noexcept { return batch * out_channels * length; }
  std::size_t weight_size() const noexcept {
    return out_channels * in_channels * kernel;
  }
};

struct BatchNormDims {
  std::size_t batch = 1;
  std::size_t channels = 1;
  std::size_t length = 1;
};

namespace reference {

// y[n,o,k] = b[o] + sum_{i,t} w[o,i,t] * x[n,i,k+t-pad]; bias may be empty.
template <typename Real>
void conv1d_forward(const Conv1dDims& d, std::span<const Real> x,
                    std::span<const Real> w, std::span<const Real> bias,
                    std::span<Real> y);

// gx = adjoint of conv1d_forward applied to gy. Overwrites gx.
template <typename Real>
void conv1d_backward_input(const Conv1dDims& d, std::span<const Real> gy,
                           std::span<const Real> w, std::span<Real> gx);

// gw[o,i,t] = sum_{n,k} gy[n,o,k] * x[n,i,k+t-pad]. Overwrites gw.
template <typename Real>
void conv1d_backward_weight(const Conv1dDims& d, std::span<const Real> x,
                            std::span<const Real> gy, std::span<Real> gw);

// Training-mode batch normalization over (N, K) per channel. Writes the
// batch mean and 1/sqrt(var + eps) (biased variance) per channel.
template <typename Real>
void batchnorm_forward_train(const BatchNormDims& d, std::span<const Real> x,
                             std::span<const Real> gamma,
                             std::span<const Real> beta, Real eps,
                             std::span<Real> y, std::span<Real> mean,
                             std::span<Real> inv_std);

// Overwrites gx, ggamma and gbeta.
template <typename Real>
void batchnorm_backward(const BatchNormDims& d, std::span<const Real> x,
                        std::span<const Real> gy, std::span<const Real> gamma,
                        std::span<const Real> mean,
                        std::span<const Real> inv_std, std::span<Real> gx,
                        std::span<Real> ggamma, std::span<Real> gbeta);

}  // namespace reference

namespace parallel {

template <typename Real>
void conv1d_forward(const Conv1dDims& d, std::span<const Real> x,
                    std::span<const Real> w, std::span<const Real> bias,
                    std::span<Real> y);

template <typename Real>
void conv1d_backward_input(const Conv1dDims& d, std::span<const Real> gy,
                           std::span<const Real> w, std::span<Real> gx);

template <typename Real>
void conv1d_backward_weight(const Conv1dDims& d, std::span<const Real> x,
                            std::span<const Real> gy, std::span<Real> gw);

template <typename Real>
void batchnorm_forward_train(const BatchNormDims& d, std::span<const Real> x,
                             std::span<const Real> gamma,
                             std::span<const Real> beta, Real eps,
                             std::span<Real> y, std::span<Real> mean,
                             std::span<Real> inv_std);

template <typename Real>
void batchnorm_backward(const BatchNormDims& d, std::span<const Real> x,
                        std::span<const Real> gy, std::span<const Real> gamma,
                        std::span<const Real> mean,
                        std::span<const Real> inv_std, std::span<Real> gx,
                        std::span<Real> ggamma, std::span<Real> gbeta);

}  // namespace parallel

/// Number of OpenMP threads the parallel kernels use. Honors LSE_NUM_THREADS.
int thread_count();
void set_thread_count(int n);

/// Asks the C allocator to keep freed activation-sized blocks instead of
/// returning them to the OS, so each training step reuses warm pages. No-op
/// outside glibc. Idempotent.
void retain_heap_memory();

}  // namespace lse::kernels
