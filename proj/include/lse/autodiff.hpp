#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A graph is a DAG of shared Node objects. Each operator allocates a node
// holding its forward value, links its parents, and records a closure that
// pushes the node's gradient into its parents' gradients. backward() walks
// the graph in reverse topological order from a scalar root. Gradients
// accumulate additively, so a tensor consumed by several operators receives
// the sum of their contributions.
//
// Parameters are long-lived leaf nodes owned by a model; every forward pass
// builds a fresh graph on top of them and drops it afterwards.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lse/tensor.hpp"

namespace lse::ad {

template <typename Real>
struct Node;

template <typename Real>
using Var = std::shared_ptr<Node<Real>>;

template <typename Real>
struct Node {
  Tensor<Real> value;
  Tensor<Real> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<Var<Real>> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  const Shape& shape() const noexcept { return value.shape(); }
  std::size_t size() const noexcept { return value.size(); }

  Tensor<Real>& grad_buffer() {
    if (grad.size() != value.size()) grad = Tensor<Real>(value.shape());
    return grad;
  }
  bool has_grad() const noexcept { return grad.size() == value.size() && !grad.empty(); }
};

/// While alive on a thread, operators on that thread record no backward
/// closures (inference mode). Nests.
class NoGradGuard {
 public:
  NoGradGuard() noexcept;
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled() noexcept;

template <typename Real>
Var<Real> constant(Tensor<Real> value);

template <typename Real>
Var<Real> parameter(Tensor<Real> value);

/// Same value, no gradient path.
template <typename Real>
Var<Real> detach(const Var<Real>& x);

/// Seeds d(root)/d(root) = 1 and propagates. root must hold one element.
template <typename Real>
void backward(const Var<Real>& root);

template <typename Real>
void zero_grad(std::span<const Var<Real>> params);

// --- elementwise and reductions -------------------------------------------

template <typename Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b);
template <typename Real>
Var<Real> sub(const Var<Real>& a, const Var<Real>& b);
template <typename Real>
Var<Real> mul(const Var<Real>& a, const Var<Real>& b);
template <typename Real>
Var<Real> scale(const Var<Real>& a, Real s);

template <typename Real>
Var<Real> sum(const Var<Real>& a);
template <typename Real>
Var<Real> mean(const Var<Real>& a);

/// mean((a - b)^2) over all elements.
template <typename Real>
Var<Real> mse(const Var<Real>& a, const Var<Real>& b);

/// mean(|a|) over all elements; derivative sign(a) with sign(0) = 0.
template <typename Real>
Var<Real> mean_abs(const Var<Real>& a);

enum class Activation { tanh, sigmoid, hard_tanh };

template <typename Real>
Var<Real> pointwise(Activation op, const Var<Real>& x);

template <typename Real>
Var<Real> tanh(const Var<Real>& x) { return pointwise(Activation::tanh, x); }
template <typename Real>
Var<Real> sigmoid(const Var<Real>& x) { return pointwise(Activation::sigmoid, x); }
template <typename Real>
Var<Real> hard_tanh(const Var<Real>& x) { return pointwise(Activation::hard_tanh, x); }

// --- layers ---------------------------------------------------------------

/// x: (N, I), weight: (H, I) -> x * weight^T : (N, H). No bias.
template <typename Real>
Var<Real> linear(const Var<Real>& x, const Var<Real>& weight);

/// x: (N, C_in, K), weight: (C_out, C_in, L) with L odd, bias: (C_out).
/// Stride 1, zero padding L/2: output (N, C_out, K).
template <typename Real>
Var<Real> conv1d(const Var<Real>& x, const Var<Real>& weight,
                 const Var<Real>& bias);

/// x: (N, C_in, K), weight: (C_in, C_out, L), bias: (C_out). The adjoint of
/// conv1d with the same stride and padding: output (N, C_out, K).
template <typename Real>
Var<Real> conv1d_transpose(const Var<Real>& x, const Var<Real>& weight,
                           const Var<Real>& bias);

template <typename Real>
struct BatchNormStats {
  Tensor<Real> running_mean;
  Tensor<Real> running_var;

  explicit BatchNormStats(std::size_t channels = 0)
      : running_mean(Shape{channels}, Real(0)),
        running_var(Shape{channels}, Real(1)) {}
};

enum class Mode { train, eval };

/// Per-channel normalization of (N, C, K) input. Train mode uses batch
/// statistics and updates `stats` (unbiased variance, exponential momentum);
/// eval mode uses the running statistics.
template <typename Real>
Var<Real> batchnorm1d(const Var<Real>& x, const Var<Real>& scale,
                      const Var<Real>& shift, BatchNormStats<Real>& stats,
                      Mode mode, Real momentum = Real(0.1), Real eps = Real(1e-5));

/// Ternary hard threshold: sign(y) where |y| >= tau, else 0. The backward
/// pass is the derivative of hard_tanh at the input (straight-through).
template <typename Real>
Var<Real> spike_threshold_ste(const Var<Real>& x, Real tau);

/// z: (N, C, K) -> z[:, :, k] as (N, C).
template <typename Real>
Var<Real> time_slice(const Var<Real>& z, std::size_t k);

// --- leaky integrate-and-fire ---------------------------------------------

/// u = beta * u_prev + current - theta * s_prev, with beta, theta (H)
/// broadcast over the batch of (N, H) states. The reset term uses s_prev as
/// a constant (no gradient through the previous spikes).
template <typename Real>
Var<Real> lif_membrane(const Var<Real>& u_prev, const Var<Real>& s_prev,
                       const Var<Real>& current, const Var<Real>& beta,
                       const Var<Real>& theta);

/// s = 1 where u >= theta else 0. Backward replaces the step derivative with
/// the arctangent surrogate 1 / (1 + (alpha * (u - theta))^2).
template <typename Real>
Var<Real> lif_fire(const Var<Real>& u, const Var<Real>& theta, Real alpha);

template <typename Real>
struct LifState {
  Var<Real> u;
  Var<Real> s;
};

template <typename Real>
LifState<Real> lif_initial_state(std::size_t batch, std::size_t neurons);

/// One timestep of a spiking LIF layer driven by input spikes s_in (N, I)
/// through weight (H, I).
template <typename Real>
LifState<Real> lif_step(const LifState<Real>& prev, const Var<Real>& s_in,
                        const Var<Real>& weight, const Var<Real>& beta,
                        const Var<Real>& theta, Real alpha);

}  // namespace lse::ad
