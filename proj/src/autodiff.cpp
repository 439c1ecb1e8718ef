#include "lse/autodiff.hpp"

#include <cmath>
#include <unordered_set>

#include <Eigen/Core>

#include "lse/kernels.hpp"

namespace lse::ad {

namespace {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using Map = Eigen::Map<RowMat<Real>>;
template <typename Real>
using ConstMap = Eigen::Map<const RowMat<Real>>;

constexpr long kParallelThreshold = 1 << 15;

// Elementwise transcendental functions go through Eigen's vectorized array
// expressions, in fixed-size chunks so they can spread over threads.
constexpr long kChunk = 1 << 12;

template <typename Real>
Eigen::Map<Eigen::Array<Real, Eigen::Dynamic, 1>> array_out(Real* p, long n) {
  return {p, n};
}
template <typename Real>
Eigen::Map<const Eigen::Array<Real, Eigen::Dynamic, 1>> array_in(const Real* p, long n) {
  return {p, n};
}

template <typename F>
void for_chunks(long n, F&& f) {
  const long chunks = (n + kChunk - 1) / kChunk;
#pragma omp parallel for if (n > kParallelThreshold) num_threads(kernels::thread_count())
  for (long c = 0; c < chunks; ++c) f(c * kChunk, std::min(kChunk, n - c * kChunk));
}

thread_local bool g_grad_enabled = true;

template <typename Real>
Var<Real> make_node(Tensor<Real> value, std::vector<Var<Real>> parents,
                    const char* op, std::function<void(Node<Real>&)> fn) {
  auto node = std::make_shared<Node<Real>>();
  node->value = std::move(value);
  node->op = op;
  if (g_grad_enabled)
    for (const auto& p : parents) node->requires_grad |= p->requires_grad;
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return node;
}

template <typename Real>
void require_same_shape(const Var<Real>& a, const Var<Real>& b, const char* op) {
  if (a->shape() != b->shape()) {
    throw StructuralError(std::string(op) + ": shape mismatch " +
                          shape_str(a->shape()) + " vs " + shape_str(b->shape()));
  }
}

template <typename Real>
void require_rank(const Var<Real>& a, std::size_t rank, const char* op) {
  if (a->value.rank() != rank) {
    throw StructuralError(std::string(op) + ": expected rank " +
                          std::to_string(rank) + ", got shape " +
                          shape_str(a->shape()));
  }
}

template <typename Real>
void add_into(Node<Real>& target, std::span<const Real> delta) {
  auto g = target.grad_buffer().data();
  const long n = static_cast<long>(g.size());
#pragma omp parallel for if (n > kParallelThreshold) num_threads(kernels::thread_count())
  for (long i = 0; i < n; ++i) g[i] += delta[i];
}

// Takes ownership of `delta` when the target has no gradient yet.
template <typename Real>
void add_into(Node<Real>& target, Tensor<Real>&& delta) {
  if (!target.has_grad() && delta.shape() == target.shape()) {
    target.grad = std::move(delta);
    return;
  }
  add_into<Real>(target, std::span<const Real>(delta.data()));
}

// Applies g[i] += f(i) over a parent's gradient buffer.
template <typename Real, typename F>
void accumulate(Node<Real>& target, F&& f) {
  auto g = target.grad_buffer().data();
  const long n = static_cast<long>(g.size());
#pragma omp parallel for if (n > kParallelThreshold) num_threads(kernels::thread_count())
  for (long i = 0; i < n; ++i) g[i] += f(i);
}

template <typename Real>
Real scalar_grad(const Node<Real>& node) {
  return node.grad[0];
}

}  // namespace

NoGradGuard::NoGradGuard() noexcept : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() noexcept { return g_grad_enabled; }

template <typename Real>
Var<Real> constant(Tensor<Real> value) {
  auto node = std::make_shared<Node<Real>>();
  node->value = std::move(value);
  node->op = "constant";
  return node;
}

template <typename Real>
Var<Real> parameter(Tensor<Real> value) {
  auto node = std::make_shared<Node<Real>>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->op = "parameter";
  return node;
}

template <typename Real>
Var<Real> detach(const Var<Real>& x) {
  return constant(x->value);
}

template <typename Real>
void backward(const Var<Real>& root) {
  if (root->size() != 1) {
    throw StructuralError("backward: root must be a scalar, got shape " +
                          shape_str(root->shape()));
  }
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order without deep recursion.
  std::vector<Node<Real>*> order;
  std::unordered_set<Node<Real>*> visited;
  std::vector<std::pair<Node<Real>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<Real>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Real>* node = *it;
    if (node->backward_fn && node->has_grad()) node->backward_fn(*node);
  }
}

template <typename Real>
void zero_grad(std::span<const Var<Real>> params) {
  for (const auto& p : params) {
    if (p->has_grad()) p->grad.fill(Real(0));
  }
}

// --- elementwise and reductions -------------------------------------------

template <typename Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b) {
  require_same_shape(a, b, "add");
  Tensor<Real> out(a->shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return make_node<Real>(std::move(out), {a, b}, "add", [](Node<Real>& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) add_into<Real>(*p, self.grad.data());
  });
}

template <typename Real>
Var<Real> sub(const Var<Real>& a, const Var<Real>& b) {
  require_same_shape(a, b, "sub");
  Tensor<Real> out(a->shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
  return make_node<Real>(std::move(out), {a, b}, "sub", [](Node<Real>& self) {
    const auto& g = self.grad;
    if (self.parents[0]->requires_grad) add_into<Real>(*self.parents[0], g.data());
    if (self.parents[1]->requires_grad)
      accumulate(*self.parents[1], [&](long i) { return -g[i]; });
  });
}

template <typename Real>
Var<Real> mul(const Var<Real>& a, const Var<Real>& b) {
  require_same_shape(a, b, "mul");
  Tensor<Real> out(a->shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return make_node<Real>(std::move(out), {a, b}, "mul", [](Node<Real>& self) {
    const auto& g = self.grad;
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa, [&](long i) { return g[i] * pb.value[i]; });
    if (pb.requires_grad) accumulate(pb, [&](long i) { return g[i] * pa.value[i]; });
  });
}

template <typename Real>
Var<Real> scale(const Var<Real>& a, Real s) {
  Tensor<Real> out(a->shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * s;
  return make_node<Real>(std::move(out), {a}, "scale", [s](Node<Real>& self) {
    const auto& g = self.grad;
    accumulate(*self.parents[0], [&](long i) { return g[i] * s; });
  });
}

template <typename Real>
Var<Real> sum(const Var<Real>& a) {
  double acc = 0.0;
  for (Real v : a->value.data()) acc += v;
  return make_node<Real>(Tensor<Real>(Shape{1}, static_cast<Real>(acc)), {a}, "sum",
                         [](Node<Real>& self) {
                           const Real g = scalar_grad(self);
                           accumulate(*self.parents[0], [g](long) { return g; });
                         });
}

template <typename Real>
Var<Real> mean(const Var<Real>& a) {
  double acc = 0.0;
  for (Real v : a->value.data()) acc += v;
  const Real inv_n = Real(1) / static_cast<Real>(a->size());
  return make_node<Real>(Tensor<Real>(Shape{1}, static_cast<Real>(acc) * inv_n), {a},
                         "mean", [inv_n](Node<Real>& self) {
                           const Real g = scalar_grad(self) * inv_n;
                           accumulate(*self.parents[0], [g](long) { return g; });
                         });
}

template <typename Real>
Var<Real> mse(const Var<Real>& a, const Var<Real>& b) {
  require_same_shape(a, b, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a->size(); ++i) {
    const double d = static_cast<double>(a->value[i]) - b->value[i];
    acc += d * d;
  }
  const double n = static_cast<double>(a->size());
  return make_node<Real>(Tensor<Real>(Shape{1}, static_cast<Real>(acc / n)), {a, b},
                         "mse", [n](Node<Real>& self) {
                           const Real g = scalar_grad(self) * static_cast<Real>(2.0 / n);
                           auto& pa = *self.parents[0];
                           auto& pb = *self.parents[1];
                           auto diff = [&](long i) { return pa.value[i] - pb.value[i]; };
                           if (pa.requires_grad) accumulate(pa, [&](long i) { return g * diff(i); });
                           if (pb.requires_grad) accumulate(pb, [&](long i) { return -g * diff(i); });
                         });
}

template <typename Real>
Var<Real> mean_abs(const Var<Real>& a) {
  double acc = 0.0;
  for (Real v : a->value.data()) acc += std::abs(static_cast<double>(v));
  const double n = static_cast<double>(a->size());
  return make_node<Real>(Tensor<Real>(Shape{1}, static_cast<Real>(acc / n)), {a},
                         "mean_abs", [n](Node<Real>& self) {
                           const Real g = scalar_grad(self) / static_cast<Real>(n);
                           auto& p = *self.parents[0];
                           accumulate(p, [&](long i) {
                             const Real v = p.value[i];
                             return v > 0 ? g : (v < 0 ? -g : Real(0));
                           });
                         });
}

template <typename Real>
Var<Real> pointwise(Activation op, const Var<Real>& x) {
  Tensor<Real> out(x->shape());
  const long n = static_cast<long>(out.size());
  const Real* in = x->value.raw();
  Real* o = out.raw();
  switch (op) {
    case Activation::tanh:
      for_chunks(n, [&](long b, long c) { array_out(o + b, c) = array_in(in + b, c).tanh(); });
      break;
    case Activation::sigmoid:
      for_chunks(n, [&](long b, long c) {
        array_out(o + b, c) = array_in(in + b, c).logistic();
      });
      break;
    case Activation::hard_tanh:
      for (long i = 0; i < n; ++i) o[i] = std::clamp(in[i], Real(-1), Real(1));
      break;
  }
  return make_node<Real>(std::move(out), {x}, "pointwise", [op](Node<Real>& self) {
    const auto& g = self.grad;
    const auto& y = self.value;
    auto& p = *self.parents[0];
    switch (op) {
      case Activation::tanh:
        accumulate(p, [&](long i) { return g[i] * (Real(1) - y[i] * y[i]); });
        break;
      case Activation::sigmoid:
        accumulate(p, [&](long i) { return g[i] * y[i] * (Real(1) - y[i]); });
        break;
      case Activation::hard_tanh:
        accumulate(p, [&](long i) {
          const Real v = p.value[i];
          return (v >= Real(-1) && v <= Real(1)) ? g[i] : Real(0);
        });
        break;
    }
  });
}

// --- layers ---------------------------------------------------------------

template <typename Real>
Var<Real> linear(const Var<Real>& x, const Var<Real>& weight) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const long N = static_cast<long>(x->value.dim(0));
  const long I = static_cast<long>(x->value.dim(1));
  const long H = static_cast<long>(weight->value.dim(0));
  if (weight->value.dim(1) != static_cast<std::size_t>(I)) {
    throw StructuralError("linear: weight " + shape_str(weight->shape()) +
                          " incompatible with input " + shape_str(x->shape()));
  }
  Tensor<Real> out(Shape{static_cast<std::size_t>(N), static_cast<std::size_t>(H)});
  ConstMap<Real> X(x->value.raw(), N, I);
  ConstMap<Real> W(weight->value.raw(), H, I);
  Map<Real>(out.raw(), N, H).noalias() = X * W.transpose();
  return make_node<Real>(std::move(out), {x, weight}, "linear",
                         [N, I, H](Node<Real>& self) {
                           auto& px = *self.parents[0];
                           auto& pw = *self.parents[1];
                           ConstMap<Real> G(self.grad.raw(), N, H);
                           if (px.requires_grad) {
                             Map<Real> GX(px.grad_buffer().raw(), N, I);
                             GX.noalias() += G * ConstMap<Real>(pw.value.raw(), H, I);
                           }
                           if (pw.requires_grad) {
                             Map<Real> GW(pw.grad_buffer().raw(), H, I);
                             GW.noalias() += G.transpose() * ConstMap<Real>(px.value.raw(), N, I);
                           }
                         });
}

namespace {

template <typename Real>
void add_bias_grad(Node<Real>& bias, const Tensor<Real>& g, std::size_t batch,
                   std::size_t channels, std::size_t length) {
  auto gb = bias.grad_buffer().data();
  for (std::size_t c = 0; c < channels; ++c) {
    double acc = 0.0;
    for (std::size_t n = 0; n < batch; ++n)
      acc += array_in(g.raw() + (n * channels + c) * length, static_cast<long>(length)).sum();
    gb[c] += static_cast<Real>(acc);
  }
}

template <typename Real>
void check_conv(const Var<Real>& x, const Var<Real>& weight, const Var<Real>& bias,
                std::size_t weight_in_axis, std::size_t out_axis, const char* op) {
  require_rank(x, 3, op);
  require_rank(weight, 3, op);
  const auto L = weight->value.dim(2);
  if (L % 2 == 0) throw StructuralError(std::string(op) + ": kernel length must be odd");
  if (weight->value.dim(weight_in_axis) != x->value.dim(1)) {
    throw StructuralError(std::string(op) + ": weight " + shape_str(weight->shape()) +
                          " incompatible with input " + shape_str(x->shape()));
  }
  if (bias && bias->shape() != Shape{weight->value.dim(out_axis)}) {
    throw StructuralError(std::string(op) + ": bias shape " + shape_str(bias->shape()));
  }
}

}  // namespace

template <typename Real>
Var<Real> conv1d(const Var<Real>& x, const Var<Real>& weight, const Var<Real>& bias) {
  check_conv(x, weight, bias, 1, 0, "conv1d");
  kernels::Conv1dDims d{x->value.dim(0), x->value.dim(1), weight->value.dim(0),
                        x->value.dim(2), weight->value.dim(2)};
  Tensor<Real> out(Shape{d.batch, d.out_channels, d.length});
  std::span<const Real> b = bias ? bias->value.data() : std::span<const Real>{};
  kernels::parallel::conv1d_forward<Real>(d, x->value.data(), weight->value.data(), b,
                                          out.data());
  std::vector<Var<Real>> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_node<Real>(std::move(out), std::move(parents), "conv1d",
                         [d](Node<Real>& self) {
                           auto& px = *self.parents[0];
                           auto& pw = *self.parents[1];
                           if (px.requires_grad) {
                             Tensor<Real> gx(px.shape());
                             kernels::parallel::conv1d_backward_input<Real>(
                                 d, self.grad.data(), pw.value.data(), gx.data());
                             add_into<Real>(px, std::move(gx));
                           }
                           if (pw.requires_grad) {
                             Tensor<Real> gw(pw.shape());
                             kernels::parallel::conv1d_backward_weight<Real>(
                                 d, px.value.data(), self.grad.data(), gw.data());
                             add_into<Real>(pw, std::move(gw));
                           }
                           if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
                             add_bias_grad(*self.parents[2], self.grad, d.batch,
                                           d.out_channels, d.length);
                           }
                         });
}

template <typename Real>
Var<Real> conv1d_transpose(const Var<Real>& x, const Var<Real>& weight,
                           const Var<Real>& bias) {
  check_conv(x, weight, bias, 0, 1, "conv1d_transpose");
  // Viewed as the conv1d whose input gradient this is: that conv maps
  // weight.dim(1) channels to weight.dim(0) = x channels.
  kernels::Conv1dDims d{x->value.dim(0), weight->value.dim(1), weight->value.dim(0),
                        x->value.dim(2), weight->value.dim(2)};
  Tensor<Real> out(Shape{d.batch, d.in_channels, d.length});
  kernels::parallel::conv1d_backward_input<Real>(d, x->value.data(),
                                                 weight->value.data(), out.data());
  if (bias) {
    for (std::size_t n = 0; n < d.batch; ++n)
      for (std::size_t c = 0; c < d.in_channels; ++c) {
        Real* row = out.raw() + (n * d.in_channels + c) * d.length;
        for (std::size_t k = 0; k < d.length; ++k) row[k] += bias->value[c];
      }
  }
  std::vector<Var<Real>> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_node<Real>(
      std::move(out), std::move(parents), "conv1d_transpose", [d](Node<Real>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        if (px.requires_grad) {
          Tensor<Real> gx(px.shape());
          kernels::parallel::conv1d_forward<Real>(d, self.grad.data(), pw.value.data(),
                                                  {}, gx.data());
          add_into<Real>(px, std::move(gx));
        }
        if (pw.requires_grad) {
          Tensor<Real> gw(pw.shape());
          kernels::parallel::conv1d_backward_weight<Real>(d, self.grad.data(),
                                                          px.value.data(), gw.data());
          add_into<Real>(pw, std::move(gw));
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          add_bias_grad(*self.parents[2], self.grad, d.batch, d.in_channels, d.length);
        }
      });
}

template <typename Real>
Var<Real> batchnorm1d(const Var<Real>& x, const Var<Real>& scale_param,
                      const Var<Real>& shift, BatchNormStats<Real>& stats, Mode mode,
                      Real momentum, Real eps) {
  require_rank(x, 3, "batchnorm1d");
  const kernels::BatchNormDims d{x->value.dim(0), x->value.dim(1), x->value.dim(2)};
  const Shape cshape{d.channels};
  require_shape(scale_param->value, cshape, "batchnorm1d scale");
  require_shape(shift->value, cshape, "batchnorm1d shift");
  require_shape(stats.running_mean, cshape, "batchnorm1d running mean");

  Tensor<Real> out(x->shape());
  auto batch_mean = std::make_shared<Tensor<Real>>(cshape);
  auto inv_std = std::make_shared<Tensor<Real>>(cshape);

  if (mode == Mode::train) {
    if (d.batch == 0) throw StructuralError("batchnorm1d: empty batch in train mode");
    kernels::parallel::batchnorm_forward_train<Real>(
        d, x->value.data(), scale_param->value.data(), shift->value.data(), eps,
        out.data(), batch_mean->data(), inv_std->data());
    const double count = static_cast<double>(d.batch * d.length);
    const double unbias = count > 1 ? count / (count - 1) : 1.0;
    for (std::size_t c = 0; c < d.channels; ++c) {
      const double istd = (*inv_std)[c];
      const double var = std::max(0.0, 1.0 / (istd * istd) - static_cast<double>(eps));
      stats.running_mean[c] = static_cast<Real>((1 - momentum) * stats.running_mean[c] +
                                                momentum * (*batch_mean)[c]);
      stats.running_var[c] =
          static_cast<Real>((1 - momentum) * stats.running_var[c] + momentum * var * unbias);
    }
    return make_node<Real>(
        std::move(out), {x, scale_param, shift}, "batchnorm1d",
        [d, batch_mean, inv_std](Node<Real>& self) {
          auto& px = *self.parents[0];
          auto& pg = *self.parents[1];
          auto& pb = *self.parents[2];
          Tensor<Real> gx(px.shape());
          Tensor<Real> gg(pg.shape());
          Tensor<Real> gb(pb.shape());
          kernels::parallel::batchnorm_backward<Real>(
              d, px.value.data(), self.grad.data(), pg.value.data(), batch_mean->data(),
              inv_std->data(), gx.data(), gg.data(), gb.data());
          if (px.requires_grad) add_into<Real>(px, std::move(gx));
          if (pg.requires_grad) add_into<Real>(pg, gg.data());
          if (pb.requires_grad) add_into<Real>(pb, gb.data());
        });
  }

  // Eval: a fixed per-channel affine map.
  for (std::size_t c = 0; c < d.channels; ++c) {
    (*batch_mean)[c] = stats.running_mean[c];
    (*inv_std)[c] = Real(1) / std::sqrt(stats.running_var[c] + eps);
  }
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t c = 0; c < d.channels; ++c) {
      const Real a = scale_param->value[c] * (*inv_std)[c];
      const Real b = shift->value[c] - a * (*batch_mean)[c];
      const std::size_t off = (n * d.channels + c) * d.length;
      for (std::size_t k = 0; k < d.length; ++k) out[off + k] = a * x->value[off + k] + b;
    }
  return make_node<Real>(
      std::move(out), {x, scale_param, shift}, "batchnorm1d_eval",
      [d, batch_mean, inv_std](Node<Real>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const auto& g = self.grad;
        for (std::size_t c = 0; c < d.channels; ++c) {
          double sg = 0.0;
          double sgx = 0.0;
          const Real istd = (*inv_std)[c];
          for (std::size_t n = 0; n < d.batch; ++n) {
            const std::size_t off = (n * d.channels + c) * d.length;
            for (std::size_t k = 0; k < d.length; ++k) {
              sg += g[off + k];
              sgx += g[off + k] * (px.value[off + k] - (*batch_mean)[c]) * istd;
              if (px.requires_grad)
                px.grad_buffer()[off + k] += g[off + k] * pg.value[c] * istd;
            }
          }
          if (pg.requires_grad) pg.grad_buffer()[c] += static_cast<Real>(sgx);
          if (pb.requires_grad) pb.grad_buffer()[c] += static_cast<Real>(sg);
        }
      });
}

template <typename Real>
Var<Real> spike_threshold_ste(const Var<Real>& x, Real tau) {
  if (!(tau > Real(0))) throw InputDomainError("spike_threshold_ste: tau must be > 0");
  Tensor<Real> out(x->shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Real v = x->value[i];
    out[i] = std::abs(v) >= tau ? (v > 0 ? Real(1) : Real(-1)) : Real(0);
  }
  return make_node<Real>(std::move(out), {x}, "spike_threshold_ste", [](Node<Real>& self) {
    const auto& g = self.grad;
    auto& p = *self.parents[0];
    accumulate(p, [&](long i) {
      const Real v = p.value[i];
      return (v >= Real(-1) && v <= Real(1)) ? g[i] : Real(0);
    });
  });
}

template <typename Real>
Var<Real> time_slice(const Var<Real>& z, std::size_t k) {
  require_rank(z, 3, "time_slice");
  const std::size_t N = z->value.dim(0);
  const std::size_t C = z->value.dim(1);
  const std::size_t K = z->value.dim(2);
  if (k >= K) throw StructuralError("time_slice: step out of range");
  Tensor<Real> out(Shape{N, C});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) out[n * C + c] = z->value[(n * C + c) * K + k];
  return make_node<Real>(std::move(out), {z}, "time_slice", [N, C, K, k](Node<Real>& self) {
    auto& gz = self.parents[0]->grad_buffer();
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) gz[(n * C + c) * K + k] += self.grad[n * C + c];
  });
}

// --- leaky integrate-and-fire ---------------------------------------------

template <typename Real>
Var<Real> lif_membrane(const Var<Real>& u_prev, const Var<Real>& s_prev,
                       const Var<Real>& current, const Var<Real>& beta,
                       const Var<Real>& theta) {
  require_rank(current, 2, "lif_membrane");
  require_same_shape(u_prev, current, "lif_membrane");
  require_same_shape(s_prev, current, "lif_membrane");
  const std::size_t N = current->value.dim(0);
  const std::size_t H = current->value.dim(1);
  require_shape(beta->value, Shape{H}, "lif_membrane beta");
  require_shape(theta->value, Shape{H}, "lif_membrane theta");

  Tensor<Real> out(current->shape());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t i = n * H + h;
      out[i] = beta->value[h] * u_prev->value[i] + current->value[i] -
               theta->value[h] * s_prev->value[i];
    }
  // s_prev is deliberately not a parent: the reset carries no gradient.
  auto reset = s_prev;
  return make_node<Real>(
      std::move(out), {u_prev, current, beta, theta}, "lif_membrane",
      [N, H, reset](Node<Real>& self) {
        auto& pu = *self.parents[0];
        auto& pi = *self.parents[1];
        auto& pbeta = *self.parents[2];
        auto& ptheta = *self.parents[3];
        const auto& g = self.grad;
        if (pu.requires_grad) {
          auto& gu = pu.grad_buffer();
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t h = 0; h < H; ++h) gu[n * H + h] += pbeta.value[h] * g[n * H + h];
        }
        if (pi.requires_grad) add_into<Real>(pi, g.data());
        if (pbeta.requires_grad || ptheta.requires_grad) {
          for (std::size_t h = 0; h < H; ++h) {
            double sb = 0.0;
            double st = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
              sb += g[n * H + h] * pu.value[n * H + h];
              st += g[n * H + h] * reset->value[n * H + h];
            }
            if (pbeta.requires_grad) pbeta.grad_buffer()[h] += static_cast<Real>(sb);
            if (ptheta.requires_grad) ptheta.grad_buffer()[h] -= static_cast<Real>(st);
          }
        }
      });
}

template <typename Real>
Var<Real> lif_fire(const Var<Real>& u, const Var<Real>& theta, Real alpha) {
  require_rank(u, 2, "lif_fire");
  const std::size_t N = u->value.dim(0);
  const std::size_t H = u->value.dim(1);
  require_shape(theta->value, Shape{H}, "lif_fire theta");
  Tensor<Real> out(u->shape());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t h = 0; h < H; ++h)
      out[n * H + h] = u->value[n * H + h] >= theta->value[h] ? Real(1) : Real(0);
  return make_node<Real>(
      std::move(out), {u, theta}, "lif_fire", [N, H, alpha](Node<Real>& self) {
        auto& pu = *self.parents[0];
        auto& ptheta = *self.parents[1];
        const auto& g = self.grad;
        std::vector<double> dtheta(H, 0.0);
        Tensor<Real>* gu = pu.requires_grad ? &pu.grad_buffer() : nullptr;
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t h = 0; h < H; ++h) {
            const std::size_t i = n * H + h;
            const Real v = alpha * (pu.value[i] - ptheta.value[h]);
            const Real sg = g[i] / (Real(1) + v * v);
            if (gu) (*gu)[i] += sg;
            dtheta[h] -= sg;
          }
        if (ptheta.requires_grad) {
          auto& gt = ptheta.grad_buffer();
          for (std::size_t h = 0; h < H; ++h) gt[h] += static_cast<Real>(dtheta[h]);
        }
      });
}

template <typename Real>
LifState<Real> lif_initial_state(std::size_t batch, std::size_t neurons) {
  return {constant(Tensor<Real>(Shape{batch, neurons})),
          constant(Tensor<Real>(Shape{batch, neurons}))};
}

template <typename Real>
LifState<Real> lif_step(const LifState<Real>& prev, const Var<Real>& s_in,
                        const Var<Real>& weight, const Var<Real>& beta,
                        const Var<Real>& theta, Real alpha) {
  auto current = linear(s_in, weight);
  auto u = lif_membrane(prev.u, prev.s, current, beta, theta);
  auto s = lif_fire(u, theta, alpha);
  return {std::move(u), std::move(s)};
}

#define LSE_INSTANTIATE(Real)                                                        \
  template Var<Real> constant<Real>(Tensor<Real>);                                   \
  template Var<Real> parameter<Real>(Tensor<Real>);                                  \
  template Var<Real> detach<Real>(const Var<Real>&);                                 \
  template void backward<Real>(const Var<Real>&);                                    \
  template void zero_grad<Real>(std::span<const Var<Real>>);                         \
  template Var<Real> add<Real>(const Var<Real>&, const Var<Real>&);                  \
  template Var<Real> sub<Real>(const Var<Real>&, const Var<Real>&);                  \
  template Var<Real> mul<Real>(const Var<Real>&, const Var<Real>&);                  \
  template Var<Real> scale<Real>(const Var<Real>&, Real);                            \
  template Var<Real> sum<Real>(const Var<Real>&);                                    \
  template Var<Real> mean<Real>(const Var<Real>&);                                   \
  template Var<Real> mse<Real>(const Var<Real>&, const Var<Real>&);                  \
  template Var<Real> mean_abs<Real>(const Var<Real>&);                               \
  template Var<Real> pointwise<Real>(Activation, const Var<Real>&);                  \
  template Var<Real> linear<Real>(const Var<Real>&, const Var<Real>&);               \
  template Var<Real> conv1d<Real>(const Var<Real>&, const Var<Real>&,                \
                                  const Var<Real>&);                                 \
  template Var<Real> conv1d_transpose<Real>(const Var<Real>&, const Var<Real>&,      \
                                            const Var<Real>&);                       \
  template Var<Real> batchnorm1d<Real>(const Var<Real>&, const Var<Real>&,           \
                                       const Var<Real>&, BatchNormStats<Real>&,      \
                                       Mode, Real, Real);                            \
  template Var<Real> spike_threshold_ste<Real>(const Var<Real>&, Real);              \
  template Var<Real> time_slice<Real>(const Var<Real>&, std::size_t);                \
  template Var<Real> lif_membrane<Real>(const Var<Real>&, const Var<Real>&,          \
                                        const Var<Real>&, const Var<Real>&,          \
                                        const Var<Real>&);                           \
  template Var<Real> lif_fire<Real>(const Var<Real>&, const Var<Real>&, Real);       \
  template LifState<Real> lif_initial_state<Real>(std::size_t, std::size_t);         \
  template LifState<Real> lif_step<Real>(const LifState<Real>&, const Var<Real>&,    \
                                         const Var<Real>&, const Var<Real>&,         \
                                         const Var<Real>&, Real);

LSE_INSTANTIATE(float)
LSE_INSTANTIATE(double)
#undef LSE_INSTANTIATE

}  // namespace lse::ad
