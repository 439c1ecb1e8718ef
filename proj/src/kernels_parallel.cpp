#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

#include <Eigen/Core>
#include <omp.h>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "lse/kernels.hpp"
#include "lse/tensor.hpp"

namespace lse::kernels {

namespace {

int initial_thread_count() {
  // Eigen must not spawn its own threads: the kernels own the parallelism.
  Eigen::setNbThreads(1);
  if (const char* env = std::getenv("LSE_NUM_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return omp_get_max_threads();
}

int& threads_ref() {
  static int n = initial_thread_count();
  return n;
}

// Samples per GEMM block. Also the granularity of the weight-gradient
// partial sums, fixed so the reduction order does not depend on how many
// threads run.
constexpr std::size_t kBlock = 32;

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using Map = Eigen::Map<RowMat<Real>>;
template <typename Real>
using ConstMap = Eigen::Map<const RowMat<Real>>;

// cols[(i*L + t), b*K + k] = x[b, i, k + t - pad] for the samples of a block
// (zero outside).
template <typename Real>
void im2col(const Conv1dDims& d, const Real* x, std::size_t count, Real* cols) {
  const auto K = static_cast<long>(d.length);
  const auto P = static_cast<long>(d.pad());
  const std::size_t stride = count * d.length;
  for (std::size_t b = 0; b < count; ++b) {
    const Real* xb = x + b * d.in_channels * d.length;
    for (std::size_t i = 0; i < d.in_channels; ++i) {
      const Real* xi = xb + i * d.length;
      for (std::size_t t = 0; t < d.kernel; ++t) {
        Real* row = cols + (i * d.kernel + t) * stride + b * d.length;
        const long shift = static_cast<long>(t) - P;
        for (long k = 0; k < K; ++k) {
          const long src = k + shift;
          row[k] = (src >= 0 && src < K) ? xi[src] : Real(0);
        }
      }
    }
  }
}

// Adjoint of im2col: x[b, i, k + t - pad] += cols[(i*L + t), b*K + k].
template <typename Real>
void col2im_add(const Conv1dDims& d, const Real* cols, std::size_t count, Real* x) {
  const auto K = static_cast<long>(d.length);
  const auto P = static_cast<long>(d.pad());
  const std::size_t stride = count * d.length;
  for (std::size_t b = 0; b < count; ++b) {
    Real* xb = x + b * d.in_channels * d.length;
    for (std::size_t i = 0; i < d.in_channels; ++i) {
      Real* xi = xb + i * d.length;
      for (std::size_t t = 0; t < d.kernel; ++t) {
        const Real* row = cols + (i * d.kernel + t) * stride + b * d.length;
        const long shift = static_cast<long>(t) - P;
        const long lo = std::max(0L, -shift);
        const long hi = std::min(K, K - shift);
        for (long k = lo; k < hi; ++k) xi[k + shift] += row[k];
      }
    }
  }
}

// (count, C, K) activations <-> (C, count*K) GEMM operand.
template <typename Real>
void gather(const Real* src, std::size_t count, std::size_t channels, std::size_t length,
            Real* dst) {
  for (std::size_t b = 0; b < count; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      std::copy_n(src + (b * channels + c) * length, length,
                  dst + c * count * length + b * length);
}

template <typename Real>
void scatter(const Real* src, std::size_t count, std::size_t channels, std::size_t length,
             Real* dst) {
  for (std::size_t b = 0; b < count; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      std::copy_n(src + c * count * length + b * length, length,
                  dst + (b * channels + c) * length);
}

// Layers with few output channels gain nothing from im2col, whose buffer is
// in_channels * kernel times the input; they run as direct loops instead.
constexpr std::size_t kDirectMaxOutChannels = 8;

bool use_direct(const Conv1dDims& d) { return d.out_channels <= kDirectMaxOutChannels; }

// y[o, k] += w[o, i, t] * x[i, k + t - pad] for one sample.
template <typename Real>
void direct_forward_sample(const Conv1dDims& d, const Real* x, const Real* w, Real* y) {
  const auto K = static_cast<long>(d.length);
  const auto P = static_cast<long>(d.pad());
  for (std::size_t o = 0; o < d.out_channels; ++o) {
    Real* yo = y + o * d.length;
    for (std::size_t i = 0; i < d.in_channels; ++i) {
      const Real* xi = x + i * d.length;
      const Real* wt = w + (o * d.in_channels + i) * d.kernel;
      for (std::size_t t = 0; t < d.kernel; ++t) {
        const long shift = static_cast<long>(t) - P;
        const long lo = std::max(0L, -shift);
        const long hi = std::min(K, K - shift);
        const Real wv = wt[t];
        for (long k = lo; k < hi; ++k) yo[k] += wv * xi[k + shift];
      }
    }
  }
}

// gx[i, k + t - pad] += w[o, i, t] * gy[o, k] for one sample.
template <typename Real>
void direct_backward_input_sample(const Conv1dDims& d, const Real* gy, const Real* w,
                                  Real* gx) {
  const auto K = static_cast<long>(d.length);
  const auto P = static_cast<long>(d.pad());
  for (std::size_t i = 0; i < d.in_channels; ++i) {
    Real* gi = gx + i * d.length;
    for (std::size_t o = 0; o < d.out_channels; ++o) {
      const Real* go = gy + o * d.length;
      const Real* wt = w + (o * d.in_channels + i) * d.kernel;
      for (std::size_t t = 0; t < d.kernel; ++t) {
        const long shift = static_cast<long>(t) - P;
        const long lo = std::max(0L, -shift);
        const long hi = std::min(K, K - shift);
        const Real wv = wt[t];
        for (long k = lo; k < hi; ++k) gi[k + shift] += wv * go[k];
      }
    }
  }
}

// gw[o, i, t] += sum_k gy[o, k] * x[i, k + t - pad] for one sample.
template <typename Real>
void direct_backward_weight_sample(const Conv1dDims& d, const Real* x, const Real* gy,
                                   Real* gw) {
  const auto K = static_cast<long>(d.length);
  const auto P = static_cast<long>(d.pad());
  for (std::size_t o = 0; o < d.out_channels; ++o) {
    const Real* go = gy + o * d.length;
    for (std::size_t i = 0; i < d.in_channels; ++i) {
      const Real* xi = x + i * d.length;
      Real* wt = gw + (o * d.in_channels + i) * d.kernel;
      for (std::size_t t = 0; t < d.kernel; ++t) {
        const long shift = static_cast<long>(t) - P;
        const long lo = std::max(0L, -shift);
        const long hi = std::min(K, K - shift);
        using Vec = Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>>;
        wt[t] += Vec(go + lo, hi - lo).dot(Vec(xi + lo + shift, hi - lo));
      }
    }
  }
}

}  // namespace

int thread_count() { return threads_ref(); }
void set_thread_count(int n) { threads_ref() = std::max(1, n); }

void retain_heap_memory() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 64 << 20);
    return true;
  }();
  (void)done;
#endif
}

namespace parallel {

template <typename Real>
void conv1d_forward(const Conv1dDims& d, std::span<const Real> x,
                    std::span<const Real> w, std::span<const Real> bias,
                    std::span<Real> y) {
  if (use_direct(d)) {
    const long N = static_cast<long>(d.batch);
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (long n = 0; n < N; ++n) {
      Real* yn = y.data() + n * d.out_channels * d.length;
      for (std::size_t o = 0; o < d.out_channels; ++o)
        std::fill_n(yn + o * d.length, d.length, bias.empty() ? Real(0) : bias[o]);
      direct_forward_sample(d, x.data() + n * d.in_channels * d.length, w.data(), yn);
    }
    return;
  }
  const long rows = static_cast<long>(d.in_channels * d.kernel);
  const long Co = static_cast<long>(d.out_channels);
  ConstMap<Real> W(w.data(), Co, rows);
  const long blocks = static_cast<long>((d.batch + kBlock - 1) / kBlock);
#pragma omp parallel num_threads(thread_count())
  {
    AlignedVector<Real> cols(rows * kBlock * d.length);
    RowMat<Real> out;
#pragma omp for schedule(static)
    for (long blk = 0; blk < blocks; ++blk) {
      const std::size_t n0 = static_cast<std::size_t>(blk) * kBlock;
      const std::size_t count = std::min(kBlock, d.batch - n0);
      const long width = static_cast<long>(count * d.length);
      im2col(d, x.data() + n0 * d.in_channels * d.length, count, cols.data());
      out.noalias() = W * ConstMap<Real>(cols.data(), rows, width);
      if (!bias.empty())
        for (long o = 0; o < Co; ++o) out.row(o).array() += bias[o];
      scatter(out.data(), count, d.out_channels, d.length,
              y.data() + n0 * d.out_channels * d.length);
    }
  }
}

template <typename Real>
void conv1d_backward_input(const Conv1dDims& d, std::span<const Real> gy,
                           std::span<const Real> w, std::span<Real> gx) {
  if (use_direct(d)) {
    const long N = static_cast<long>(d.batch);
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (long n = 0; n < N; ++n) {
      Real* gxn = gx.data() + n * d.in_channels * d.length;
      std::fill_n(gxn, d.in_channels * d.length, Real(0));
      direct_backward_input_sample(d, gy.data() + n * d.out_channels * d.length, w.data(), gxn);
    }
    return;
  }
  const long rows = static_cast<long>(d.in_channels * d.kernel);
  const long Co = static_cast<long>(d.out_channels);
  ConstMap<Real> W(w.data(), Co, rows);
  const long blocks = static_cast<long>((d.batch + kBlock - 1) / kBlock);
#pragma omp parallel num_threads(thread_count())
  {
    AlignedVector<Real> g(Co * kBlock * d.length);
    RowMat<Real> cols;
#pragma omp for schedule(static)
    for (long blk = 0; blk < blocks; ++blk) {
      const std::size_t n0 = static_cast<std::size_t>(blk) * kBlock;
      const std::size_t count = std::min(kBlock, d.batch - n0);
      const long width = static_cast<long>(count * d.length);
      gather(gy.data() + n0 * d.out_channels * d.length, count, d.out_channels, d.length,
             g.data());
      cols.noalias() = W.transpose() * ConstMap<Real>(g.data(), Co, width);
      Real* gxn = gx.data() + n0 * d.in_channels * d.length;
      std::fill(gxn, gxn + count * d.in_channels * d.length, Real(0));
      col2im_add(d, cols.data(), count, gxn);
    }
  }
}

template <typename Real>
void conv1d_backward_weight(const Conv1dDims& d, std::span<const Real> x,
                            std::span<const Real> gy, std::span<Real> gw) {
  const long rows = static_cast<long>(d.in_channels * d.kernel);
  const long Co = static_cast<long>(d.out_channels);
  const std::size_t blocks = (d.batch + kBlock - 1) / kBlock;
  std::vector<RowMat<Real>> partial(blocks);
  if (use_direct(d)) {
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (long blk = 0; blk < static_cast<long>(blocks); ++blk) {
      const std::size_t n0 = static_cast<std::size_t>(blk) * kBlock;
      const std::size_t end = std::min(d.batch, n0 + kBlock);
      partial[blk] = RowMat<Real>::Zero(Co, rows);
      for (std::size_t n = n0; n < end; ++n)
        direct_backward_weight_sample(d, x.data() + n * d.in_channels * d.length,
                                      gy.data() + n * d.out_channels * d.length,
                                      partial[blk].data());
    }
  } else {
#pragma omp parallel num_threads(thread_count())
  {
    AlignedVector<Real> cols(rows * kBlock * d.length);
    AlignedVector<Real> g(Co * kBlock * d.length);
#pragma omp for schedule(static)
    for (long blk = 0; blk < static_cast<long>(blocks); ++blk) {
      const std::size_t n0 = static_cast<std::size_t>(blk) * kBlock;
      const std::size_t count = std::min(kBlock, d.batch - n0);
      const long width = static_cast<long>(count * d.length);
      im2col(d, x.data() + n0 * d.in_channels * d.length, count, cols.data());
      gather(gy.data() + n0 * d.out_channels * d.length, count, d.out_channels, d.length,
             g.data());
      partial[blk].noalias() = ConstMap<Real>(g.data(), Co, width) *
                               ConstMap<Real>(cols.data(), rows, width).transpose();
    }
  }
  }
  Map<Real> GW(gw.data(), Co, rows);
  GW.setZero();
  for (const auto& p : partial) GW += p;
}

// Batchnorm rows are the K samples of one (n, c) pair. Each row is reduced
// with vectorized Real arithmetic and the row results are accumulated in
// double, in sample order.
template <typename Real>
using RowVec = Eigen::Map<const Eigen::Array<Real, Eigen::Dynamic, 1>>;
template <typename Real>
using RowVecOut = Eigen::Map<Eigen::Array<Real, Eigen::Dynamic, 1>>;

template <typename Real>
void batchnorm_forward_train(const BatchNormDims& d, std::span<const Real> x,
                             std::span<const Real> gamma,
                             std::span<const Real> beta, Real eps,
                             std::span<Real> y, std::span<Real> mean,
                             std::span<Real> inv_std) {
  const double count = static_cast<double>(d.batch * d.length);
  const long C = static_cast<long>(d.channels);
  const long K = static_cast<long>(d.length);
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (long c = 0; c < C; ++c) {
    auto row = [&](std::size_t n) { return RowVec<Real>(x.data() + (n * d.channels + c) * K, K); };
    double sum = 0.0;
    for (std::size_t n = 0; n < d.batch; ++n) sum += row(n).sum();
    const double mu = sum / count;
    const Real mu_r = static_cast<Real>(mu);
    double sq = 0.0;
    for (std::size_t n = 0; n < d.batch; ++n) sq += (row(n) - mu_r).square().sum();
    const double istd = 1.0 / std::sqrt(sq / count + static_cast<double>(eps));
    mean[c] = mu_r;
    inv_std[c] = static_cast<Real>(istd);
    const auto a = static_cast<Real>(gamma[c] * istd);
    const auto b = static_cast<Real>(beta[c] - gamma[c] * istd * mu);
    for (std::size_t n = 0; n < d.batch; ++n)
      RowVecOut<Real>(y.data() + (n * d.channels + c) * K, K) = a * row(n) + b;
  }
}

template <typename Real>
void batchnorm_backward(const BatchNormDims& d, std::span<const Real> x,
                        std::span<const Real> gy, std::span<const Real> gamma,
                        std::span<const Real> mean,
                        std::span<const Real> inv_std, std::span<Real> gx,
                        std::span<Real> ggamma, std::span<Real> gbeta) {
  const double count = static_cast<double>(d.batch * d.length);
  const long C = static_cast<long>(d.channels);
  const long K = static_cast<long>(d.length);
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (long c = 0; c < C; ++c) {
    const Real mu = mean[c];
    const Real istd = inv_std[c];
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t n = 0; n < d.batch; ++n) {
      const std::size_t off = (n * d.channels + c) * K;
      const RowVec<Real> g(gy.data() + off, K);
      sum_g += g.sum();
      sum_gx += (g * ((RowVec<Real>(x.data() + off, K) - mu) * istd)).sum();
    }
    gbeta[c] = static_cast<Real>(sum_g);
    ggamma[c] = static_cast<Real>(sum_gx);
    const double scale = gamma[c] * istd / count;
    const auto s = static_cast<Real>(scale * count);
    const auto s0 = static_cast<Real>(scale * sum_g);
    const auto s1 = static_cast<Real>(scale * sum_gx);
    for (std::size_t n = 0; n < d.batch; ++n) {
      const std::size_t off = (n * d.channels + c) * K;
      const auto xhat = (RowVec<Real>(x.data() + off, K) - mu) * istd;
      RowVecOut<Real>(gx.data() + off, K) = s * RowVec<Real>(gy.data() + off, K) - s0 - s1 * xhat;
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

}  // namespace parallel
}  // namespace lse::kernels
