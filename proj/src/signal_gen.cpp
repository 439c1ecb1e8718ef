#include "lse/signal_gen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "lse/error.hpp"
#include "lse/kernels.hpp"

namespace lse::signal {

namespace {

// Stream ids above this are reserved for non-window draws.
constexpr std::uint64_t kShuffleStream = 0xffff'ffff'0000'0001ULL;
constexpr std::uint64_t kFixedSnrSalt = 0x5a17'0000'0000'0000ULL;

RealWindow make_window(std::size_t m_active, double snr_db, const GeneratorConfig& cfg,
                       Rng& rng) {
  GroundTruth gt = sample_ground_truth(m_active, cfg, rng);
  gt.snr_db = snr_db;
  return to_real_window(generate_window(gt, cfg, rng), cfg);
}

}  // namespace

void GeneratorConfig::validate() const {
  if (!(sampling_period > 0)) throw InputDomainError("generator: T must be > 0");
  if (window_length < 2) throw InputDomainError("generator: K must be >= 2");
  if (max_components < 1) throw InputDomainError("generator: M_max must be >= 1");
  if (snr_db_set.empty()) throw InputDomainError("generator: snr_db_set is empty");
  for (double f : split)
    if (f < 0) throw InputDomainError("generator: negative split fraction");
  if (std::abs(split[0] + split[1] + split[2] - 1.0) > 1e-9)
    throw InputDomainError("generator: split fractions must sum to 1");
}

const std::vector<std::size_t>& Dataset::partition(Split s) const {
  switch (s) {
    case Split::train:
      return train;
    case Split::val:
      return val;
    case Split::test:
      return test;
  }
  return test;
}

GroundTruth sample_ground_truth(std::size_t m_active, const GeneratorConfig& cfg,
                                Rng& rng) {
  if (m_active < 1 || m_active > cfg.max_components) {
    throw InputDomainError("sample_ground_truth: m_active=" + std::to_string(m_active) +
                           " outside [1, " + std::to_string(cfg.max_components) + "]");
  }
  struct Component {
    double f, a, phi;
  };
  std::vector<Component> comps(m_active);
  const double f_max = cfg.max_frequency_hz();
  for (auto& c : comps) {
    c.f = rng.uniform(0.0, f_max);
    c.phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    c.a = 1.0 - rng.uniform();  // (0, 1]
  }
  const double a_max =
      std::max_element(comps.begin(), comps.end(),
                       [](const auto& l, const auto& r) { return l.a < r.a; })
          ->a;
  std::sort(comps.begin(), comps.end(),
            [](const auto& l, const auto& r) { return l.f < r.f; });

  GroundTruth gt;
  gt.m_active = m_active;
  gt.freqs.assign(cfg.max_components, 0.0);
  gt.amps.assign(cfg.max_components, 0.0);
  gt.phases.assign(cfg.max_components, 0.0);
  for (std::size_t m = 0; m < m_active; ++m) {
    gt.freqs[m] = comps[m].f;
    gt.amps[m] = comps[m].a / a_max;
    gt.phases[m] = comps[m].phi;
  }
  return gt;
}

ChannelWindow generate_window(const GroundTruth& gt, const GeneratorConfig& cfg,
                              Rng& rng) {
  const std::size_t K = cfg.window_length;
  ChannelWindow w;
  w.gt = gt;
  w.samples.assign(K, {0.0, 0.0});
  double power = 0.0;
  for (std::size_t m = 0; m < gt.amps.size(); ++m) {
    if (gt.amps[m] == 0.0) continue;
    power += gt.amps[m] * gt.amps[m];
    for (std::size_t k = 0; k < K; ++k) {
      const double arg = 2.0 * std::numbers::pi * gt.freqs[m] * static_cast<double>(k) *
                             cfg.sampling_period +
                         gt.phases[m];
      w.samples[k] += gt.amps[m] * std::polar(1.0, arg);
    }
  }
  if (std::isfinite(gt.snr_db)) {
    const double noise_var = power / std::pow(10.0, gt.snr_db / 10.0);
    const double sd = std::sqrt(noise_var / 2.0);  // per real dimension
    for (auto& s : w.samples) s += std::complex<double>(rng.normal(0.0, sd), rng.normal(0.0, sd));
  }
  return w;
}

RealWindow to_real_window(const ChannelWindow& w, const GeneratorConfig& cfg) {
  const std::size_t K = w.samples.size();
  RealWindow out;
  out.values = Tensor<double>(Shape{2, K});
  for (std::size_t k = 0; k < K; ++k) {
    out.values[k] = w.samples[k].real();
    out.values[K + k] = w.samples[k].imag();
  }
  const auto [lo, hi] = std::minmax_element(out.values.data().begin(), out.values.data().end());
  out.norm.offset = *lo;
  out.norm.scale = (*hi > *lo) ? (*hi - *lo) : 1.0;
  for (auto& v : out.values.data()) v = (v - out.norm.offset) / out.norm.scale;

  out.target = w.gt;
  for (auto& f : out.target.freqs) f *= 2.0 * cfg.sampling_period;
  return out;
}

Tensor<double> denormalize(const RealWindow& w) {
  Tensor<double> raw = w.values;
  for (auto& v : raw.data()) v = v * w.norm.scale + w.norm.offset;
  return raw;
}

Dataset build_dataset(const GeneratorConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.config = cfg;
  const std::size_t total = cfg.total_windows();
  ds.windows.resize(total);
  const long n = static_cast<long>(total);
#pragma omp parallel for schedule(static) num_threads(kernels::thread_count())
  for (long i = 0; i < n; ++i) {
    Rng rng(cfg.seed, static_cast<std::uint64_t>(i));
    const std::size_t m_active = static_cast<std::size_t>(i) / cfg.windows_per_count + 1;
    const double snr = cfg.snr_db_set[rng.index(cfg.snr_db_set.size())];
    ds.windows[i] = make_window(m_active, snr, cfg, rng);
  }

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(cfg.seed, kShuffleStream);
  std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

  const auto n_train = static_cast<std::size_t>(std::llround(cfg.split[0] * total));
  const auto n_val = std::min(total - n_train,
                              static_cast<std::size_t>(std::llround(cfg.split[1] * total)));
  ds.train.assign(order.begin(), order.begin() + n_train);
  ds.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  ds.test.assign(order.begin() + n_train + n_val, order.end());
  return ds;
}

std::vector<RealWindow> build_fixed_snr_windows(const GeneratorConfig& cfg,
                                                double snr_db, std::size_t n_windows,
                                                std::uint64_t seed) {
  cfg.validate();
  std::vector<RealWindow> out(n_windows);
  const long n = static_cast<long>(n_windows);
#pragma omp parallel for schedule(static) num_threads(kernels::thread_count())
  for (long i = 0; i < n; ++i) {
    Rng rng(seed, kFixedSnrSalt + static_cast<std::uint64_t>(i));
    const std::size_t m_active = static_cast<std::size_t>(i) % cfg.max_components + 1;
    out[i] = make_window(m_active, snr_db, cfg, rng);
  }
  return out;
}

}  // namespace lse::signal
