#include "lse/training.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "lse/error.hpp"
#include "lse/kernels.hpp"
#include "lse/rng.hpp"

namespace lse::training {

std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision precision_from_string(const std::string& s) {
  std::string v(s);
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "f32" || v == "float32" || v == "float") return Precision::f32;
  if (v == "f64" || v == "float64" || v == "double") return Precision::f64;
  throw InputDomainError("unknown precision '" + s + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InputDomainError("batch_size must be >= 1");
  if (!(learning_rate > 0)) throw InputDomainError("learning_rate must be > 0");
  if (!(lambda >= 0 && lambda <= 1)) throw InputDomainError("lambda must lie in [0, 1]");
  if (!(tau > 0)) throw InputDomainError("tau must be > 0");
  if (max_epochs < 1) throw InputDomainError("max_epochs must be >= 1");
}

template <typename Real>
LossBreakdown LossTerms<Real>::values() const {
  return {l1->value[0], l2->value[0], l3->value[0], omega->value[0], total->value[0]};
}

template <typename Real>
LossTerms<Real> compute_loss(const ad::Var<Real>& x, const ad::Var<Real>& x_hat,
                             const ad::Var<Real>& f, const ad::Var<Real>& f_hat,
                             const ad::Var<Real>& a, const ad::Var<Real>& a_hat,
                             const ad::Var<Real>& z, double lambda) {
  LossTerms<Real> t;
  t.l1 = ad::mse(x, x_hat);
  t.l2 = ad::mse(f, f_hat);
  t.l3 = ad::mse(a, a_hat);
  t.omega = ad::mean_abs(z);
  t.total = ad::add(ad::add(ad::add(t.l1, t.l2), t.l3),
                    ad::scale(t.omega, static_cast<Real>(lambda)));
  return t;
}

template <typename Real>
Batch<Real> make_batch(std::span<const signal::RealWindow> windows,
                       std::span<const std::size_t> indices) {
  if (indices.empty()) throw StructuralError("make_batch: no windows");
  const auto& first = windows[indices[0]];
  const std::size_t C = first.values.dim(0);
  const std::size_t K = first.length();
  const std::size_t M = first.target.freqs.size();
  const std::size_t N = indices.size();
  Batch<Real> b{Tensor<Real>({N, C, K}), Tensor<Real>({N, M}), Tensor<Real>({N, M})};
  for (std::size_t n = 0; n < N; ++n) {
    const auto& w = windows[indices[n]];
    require_shape(w.values, first.values.shape(), "make_batch window");
    if (w.target.freqs.size() != M || w.target.amps.size() != M)
      throw StructuralError("make_batch: inconsistent target length");
    std::copy(w.values.data().begin(), w.values.data().end(), b.x.raw() + n * C * K);
    std::copy(w.target.freqs.begin(), w.target.freqs.end(), b.freq.raw() + n * M);
    std::copy(w.target.amps.begin(), w.target.amps.end(), b.amp.raw() + n * M);
  }
  return b;
}

namespace {

void accumulate(LossBreakdown& acc, const LossBreakdown& v, double weight) {
  acc.l1 += weight * v.l1;
  acc.l2 += weight * v.l2;
  acc.l3 += weight * v.l3;
  acc.omega += weight * v.omega;
  acc.total += weight * v.total;
}

void scale(LossBreakdown& acc, double s) {
  acc.l1 *= s;
  acc.l2 *= s;
  acc.l3 *= s;
  acc.omega *= s;
  acc.total *= s;
}

bool finite(const LossBreakdown& v) {
  return std::isfinite(v.l1) && std::isfinite(v.l2) && std::isfinite(v.l3) &&
         std::isfinite(v.omega) && std::isfinite(v.total);
}

}  // namespace

template <typename Real>
LossBreakdown evaluate_loss(model::LseModel<Real>& model,
                            std::span<const signal::RealWindow> windows,
                            std::span<const std::size_t> indices, double lambda,
                            std::size_t batch_size) {
  if (indices.empty()) throw StructuralError("evaluate_loss: empty partition");
  ad::NoGradGuard no_grad;
  LossBreakdown acc;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const auto chunk = indices.subspan(start, std::min(batch_size, indices.size() - start));
    auto b = make_batch<Real>(windows, chunk);
    auto x = ad::constant(std::move(b.x));
    auto out = model.forward(x, ad::Mode::eval);
    auto loss = compute_loss(x, out.reconstruction, ad::constant(std::move(b.freq)), out.freq,
                             ad::constant(std::move(b.amp)), out.amp, out.spikes, lambda);
    accumulate(acc, loss.values(), static_cast<double>(chunk.size()));
  }
  scale(acc, 1.0 / static_cast<double>(indices.size()));
  return acc;
}

template <typename Real>
TrainResult<Real> train(const signal::Dataset& ds, const TrainConfig& cfg,
                        model::ModelConfig model_cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  kernels::retain_heap_memory();
  if (ds.train.empty()) throw StructuralError("train: empty training partition");
  if (ds.val.empty()) throw StructuralError("train: empty validation partition");
  model_cfg.tau = cfg.tau;
  model_cfg.window_length = ds.config.window_length;
  model_cfg.outputs = ds.config.max_components;

  TrainResult<Real> result{model::LseModel<Real>(model_cfg, cfg.seed), {}, 0, {}};
  auto& model = result.model;
  ad::Adam<Real> opt(model.parameters(), {cfg.learning_rate, 0.9, 0.999, 1e-8});
  auto best_state = model.state();
  double best_total = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  std::vector<std::size_t> order(ds.train);
  Rng shuffle_rng(cfg.seed, 0x7368756666ULL);
  const std::span<const signal::RealWindow> windows(ds.windows);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    LossBreakdown train_acc;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::span<const std::size_t> chunk(
          order.data() + start, std::min(cfg.batch_size, order.size() - start));
      auto b = make_batch<Real>(windows, chunk);
      auto x = ad::constant(std::move(b.x));
      auto out = model.forward(x, ad::Mode::train);
      auto loss = compute_loss(x, out.reconstruction, ad::constant(std::move(b.freq)),
                               out.freq, ad::constant(std::move(b.amp)), out.amp,
                               out.spikes, cfg.lambda);
      const auto v = loss.values();
      if (!finite(v))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(batch_index),
                            epoch, batch_index);
      opt.zero_grad();
      ad::backward(loss.total);
      opt.step();
      accumulate(train_acc, v, static_cast<double>(chunk.size()));
    }
    scale(train_acc, 1.0 / static_cast<double>(order.size()));

    EpochRecord rec{epoch, train_acc,
                    evaluate_loss(model, windows, ds.val, cfg.lambda, cfg.batch_size)};
    if (!finite(rec.val))
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch), epoch,
                          0);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val.total < best_total) {
      best_total = rec.val.total;
      best_state = model.state();
      result.best_epoch = epoch;
      result.best_val = rec.val;
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      break;
    }
  }
  model.load_state(best_state);
  return result;
}

void write_log_header(std::ostream& os) { os << "epoch,split,L1,L2,L3,omega,total\n"; }

void write_log_rows(std::ostream& os, const EpochRecord& r) {
  char line[256];
  for (const auto& [split, v] : {std::pair{"train", &r.train}, std::pair{"val", &r.val}}) {
    std::snprintf(line, sizeof line, "%zu,%s,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.epoch, split,
                  v->l1, v->l2, v->l3, v->omega, v->total);
    os << line;
  }
}

#define LSE_INSTANTIATE(Real)                                                               \
  template struct LossTerms<Real>;                                                          \
  template LossTerms<Real> compute_loss(const ad::Var<Real>&, const ad::Var<Real>&,         \
                                        const ad::Var<Real>&, const ad::Var<Real>&,         \
                                        const ad::Var<Real>&, const ad::Var<Real>&,         \
                                        const ad::Var<Real>&, double);                      \
  template Batch<Real> make_batch(std::span<const signal::RealWindow>,                      \
                                  std::span<const std::size_t>);                            \
  template LossBreakdown evaluate_loss(model::LseModel<Real>&,                              \
                                       std::span<const signal::RealWindow>,                 \
                                       std::span<const std::size_t>, double, std::size_t);  \
  template TrainResult<Real> train(const signal::Dataset&, const TrainConfig&,              \
                                   model::ModelConfig, const EpochCallback&);

LSE_INSTANTIATE(float)
LSE_INSTANTIATE(double)

}  // namespace lse::training
