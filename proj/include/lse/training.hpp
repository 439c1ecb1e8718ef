#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lse/adam.hpp"
#include "lse/model.hpp"
#include "lse/signal_gen.hpp"

namespace lse::training {

enum class Precision { f32, f64 };

std::string to_string(Precision p);
/// "f32"/"float32"/"float" or "f64"/"float64"/"double".
Precision precision_from_string(const std::string& s);

struct TrainConfig {
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  double lambda = 0.2;  // sparsity weight
  double tau = 0.1;     // spike threshold
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  Precision precision = Precision::f32;

  /// Throws InputDomainError.
  void validate() const;
};

struct LossBreakdown {
  double l1 = 0.0;     // reconstruction MSE
  double l2 = 0.0;     // frequency MSE
  double l3 = 0.0;     // amplitude MSE
  double omega = 0.0;  // spike density
  double total = 0.0;
};

template <typename Real>
struct LossTerms {
  ad::Var<Real> l1, l2, l3, omega, total;

  LossBreakdown values() const;
};

/// total = l1 + l2 + l3 + lambda * omega, all as graph nodes.
template <typename Real>
LossTerms<Real> compute_loss(const ad::Var<Real>& x, const ad::Var<Real>& x_hat,
                             const ad::Var<Real>& f, const ad::Var<Real>& f_hat,
                             const ad::Var<Real>& a, const ad::Var<Real>& a_hat,
                             const ad::Var<Real>& z, double lambda);

/// Network inputs and targets of a set of windows.
template <typename Real>
struct Batch {
  Tensor<Real> x;     // (N, 2, K)
  Tensor<Real> freq;  // (N, M)
  Tensor<Real> amp;   // (N, M)
};

template <typename Real>
Batch<Real> make_batch(std::span<const signal::RealWindow> windows,
                       std::span<const std::size_t> indices);

/// Loss over `indices` in eval mode and without gradient tracking, as the
/// size-weighted mean of batch losses.
template <typename Real>
LossBreakdown evaluate_loss(model::LseModel<Real>& model,
                            std::span<const signal::RealWindow> windows,
                            std::span<const std::size_t> indices, double lambda,
                            std::size_t batch_size);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown train;
  LossBreakdown val;
};

template <typename Real>
struct TrainResult {
  model::LseModel<Real> model;  // parameters of the best validation epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  LossBreakdown best_val;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam on shuffled mini-batches of the train partition (reshuffled every
/// epoch, last partial batch kept). After each epoch the validation loss is
/// computed in eval mode; the best epoch's state is kept. Training stops once
/// more than `patience` consecutive epochs fail to improve on the best
/// validation total, or after max_epochs. Throws TrainingError on a
/// non-finite batch loss.
template <typename Real>
TrainResult<Real> train(const signal::Dataset& ds, const TrainConfig& cfg,
                        model::ModelConfig model_cfg = {},
                        const EpochCallback& on_epoch = {});

/// CSV header: epoch,split,L1,L2,L3,omega,total
void write_log_header(std::ostream& os);
/// Two rows per epoch (train, val), fixed 10 significant digits.
void write_log_rows(std::ostream& os, const EpochRecord& r);

}  // namespace lse::training
