#pragma once

// The learned spike encoder: a convolutional encoder, a ternary spike
// bottleneck, a transposed-convolution decoder, and a two-headed LIF spiking
// network that regresses sinusoid frequencies and amplitudes from the spikes.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lse/autodiff.hpp"

namespace lse::model {

struct ModelConfig {
  std::size_t window_length = 64;  // K
  std::size_t channels = 2;
  std::size_t conv_features = 128;
  std::size_t kernel = 7;
  std::size_t snn_input = 128;
  std::size_t snn_hidden = 64;
  std::size_t outputs = 5;  // M_max
  double tau = 0.1;
  double surrogate_alpha = 2.0;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  double beta_init = 0.9;
  double theta_init = 1.0;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ParamCounts {
  std::size_t encoder = 0;
  std::size_t decoder = 0;
  std::size_t snn = 0;
  std::size_t total() const noexcept { return encoder + decoder + snn; }
};

/// Learnable scalar count of a conv layer with bias: c_in * c_out * kernel + c_out.
constexpr std::size_t conv_param_count(std::size_t c_in, std::size_t c_out,
                                       std::size_t kernel) {
  return c_in * c_out * kernel + c_out;
}

template <typename Real>
struct ForwardResult {
  ad::Var<Real> features;        // Y  (N, 2, K)
  ad::Var<Real> spikes;          // Z  (N, 2, K), ternary
  ad::Var<Real> reconstruction;  // X_hat (N, 2, K), in (0, 1)
  ad::Var<Real> freq;            // (N, M)
  ad::Var<Real> amp;             // (N, M)
};

/// Named copy of every parameter and batchnorm running statistic.
template <typename Real>
using ModelState = std::vector<std::pair<std::string, Tensor<Real>>>;

template <typename Real>
class LseModel {
 public:
  LseModel(ModelConfig cfg, std::uint64_t seed);

  LseModel(const LseModel&) = delete;
  LseModel& operator=(const LseModel&) = delete;
  LseModel(LseModel&&) noexcept = default;
  LseModel& operator=(LseModel&&) noexcept = default;

  /// x: (N, 2, K) with values in [0, 1].
  ForwardResult<Real> forward(const ad::Var<Real>& x, ad::Mode mode);

  ad::Var<Real> encode(const ad::Var<Real>& x, ad::Mode mode);
  ad::Var<Real> spike_encode(const ad::Var<Real>& features) const;
  ad::Var<Real> decode(const ad::Var<Real>& spikes, ad::Mode mode);
  /// Runs the LIF network over the K timesteps of `spikes`; returns the
  /// sigmoid of the two heads' final membrane potentials.
  std::pair<ad::Var<Real>, ad::Var<Real>> snn(const ad::Var<Real>& spikes) const;

  std::vector<std::pair<std::string, ad::Var<Real>>> named_parameters() const;
  std::vector<ad::Var<Real>> parameters() const;
  /// Batchnorm running mean/var, in a fixed order.
  std::vector<std::pair<std::string, Tensor<Real>*>> named_buffers();

  ModelState<Real> state() const;
  /// Throws StructuralError on any name or shape mismatch.
  void load_state(const ModelState<Real>& s);

  ParamCounts param_count() const;
  const ModelConfig& config() const noexcept { return cfg_; }

 private:
  struct Conv {
    ad::Var<Real> weight;
    ad::Var<Real> bias;
  };
  struct BatchNorm {
    ad::Var<Real> scale;
    ad::Var<Real> shift;
    ad::BatchNormStats<Real> stats;
  };
  struct Lif {
    ad::Var<Real> weight;
    ad::Var<Real> beta;
    ad::Var<Real> theta;
  };

  ModelConfig cfg_;
  Conv enc_[3];
  BatchNorm enc_bn_[2];
  Conv dec_[3];
  BatchNorm dec_bn_[2];
  Lif snn_in_;
  Lif snn_hidden_;
  Lif head_freq_;
  Lif head_amp_;
};

}  // namespace lse::model
