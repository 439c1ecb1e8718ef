#include "lse/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <ostream>

#include "lse/error.hpp"
#include "lse/kernels.hpp"

namespace lse::eval {

std::vector<std::complex<double>> dft(std::span<const std::complex<double>> x) {
  const std::size_t K = x.size();
  std::vector<std::complex<double>> out(K);
  // Twiddles by (m * k) mod K keep the phase argument small and exact.
  std::vector<std::complex<double>> tw(K);
  for (std::size_t i = 0; i < K; ++i)
    tw[i] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(K));
  for (std::size_t m = 0; m < K; ++m) {
    std::complex<double> acc = 0.0;
    for (std::size_t k = 0; k < K; ++k) acc += x[k] * tw[(m * k) % K];
    out[m] = acc;
  }
  return out;
}

double rec_rmse(std::span<const double> x, std::span<const double> x_hat) {
  if (x.size() != x_hat.size() || x.empty())
    throw StructuralError("rec_rmse: size mismatch (" + std::to_string(x.size()) + " vs " +
                          std::to_string(x_hat.size()) + ")");
  double se = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) se += (x[i] - x_hat[i]) * (x[i] - x_hat[i]);
  return std::sqrt(se / static_cast<double>(x.size()));
}

namespace {

std::vector<std::complex<double>> as_complex(const Tensor<double>& w) {
  if (w.rank() != 2 || w.dim(0) != 2)
    throw StructuralError("expected a (2, K) window, got " + shape_str(w.shape()));
  const std::size_t K = w.dim(1);
  std::vector<std::complex<double>> c(K);
  for (std::size_t k = 0; k < K; ++k) c[k] = {w[k], w[K + k]};
  return c;
}

}  // namespace

double dft_mag_rmse(const Tensor<double>& x, const Tensor<double>& x_hat) {
  require_shape(x_hat, x.shape(), "dft_mag_rmse");
  const auto fx = dft(as_complex(x));
  const auto fy = dft(as_complex(x_hat));
  double peak = 0.0;
  for (const auto& v : fx) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) peak = 1.0;
  double se = 0.0;
  for (std::size_t m = 0; m < fx.size(); ++m) {
    const double d = (std::abs(fx[m]) - std::abs(fy[m])) / peak;
    se += d * d;
  }
  return std::sqrt(se / static_cast<double>(fx.size()));
}

double sparsity(std::span<const double> z) {
  if (z.empty()) throw StructuralError("sparsity of an empty tensor");
  const auto zeros = std::count(z.begin(), z.end(), 0.0);
  return static_cast<double>(zeros) / static_cast<double>(z.size());
}

double spike_density(std::span<const double> z) {
  if (z.empty()) throw StructuralError("spike density of an empty tensor");
  double s = 0.0;
  for (double v : z) s += std::abs(v);
  return s / static_cast<double>(z.size());
}

Summary Summary::of(std::span<const double> v) {
  if (v.empty()) throw StructuralError("cannot summarize an empty set of values");
  Summary s;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = std::clamp(sum / static_cast<double>(v.size()), s.min, s.max);
  double var = 0.0;
  for (double x : v) var += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(var / static_cast<double>(v.size()));
  return s;
}

MetricsReport make_report(std::string method, std::vector<WindowMetrics> windows,
                          nlohmann::json config) {
  if (windows.empty()) throw StructuralError("metrics report over an empty test set");
  MetricsReport r;
  r.method = std::move(method);
  r.config = std::move(config);
  auto collect = [&](auto get) {
    std::vector<double> v;
    v.reserve(windows.size());
    for (const auto& w : windows) v.push_back(get(w));
    return Summary::of(v);
  };
  r.rec = collect([](const WindowMetrics& w) { return w.rec_rmse; });
  r.dft = collect([](const WindowMetrics& w) { return w.dft_rmse; });
  r.sparsity = collect([](const WindowMetrics& w) { return w.sparsity; });
  if (windows.front().freq_rmse) {
    r.freq = collect([](const WindowMetrics& w) { return w.freq_rmse.value(); });
    r.amp = collect([](const WindowMetrics& w) { return w.amp_rmse.value(); });
  }
  r.windows = std::move(windows);
  return r;
}

std::vector<signal::RealWindow> select(const signal::Dataset& ds, signal::Split split) {
  std::vector<signal::RealWindow> out;
  const auto& idx = ds.partition(split);
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(ds.windows.at(i));
  return out;
}

MetricsReport evaluate_baseline(const baseline::BaselineParams& p,
                                std::span<const signal::RealWindow> windows) {
  p.validate();
  std::vector<WindowMetrics> m(windows.size());
  const long n = static_cast<long>(windows.size());
#pragma omp parallel for schedule(static) num_threads(kernels::thread_count())
  for (long i = 0; i < n; ++i) {
    const auto& w = windows[i];
    const auto enc = baseline::encode_window(p, w);
    m[i].rec_rmse = rec_rmse(w.values.data(), enc.reconstruction.data());
    m[i].dft_rmse = dft_mag_rmse(w.values, enc.reconstruction);
    m[i].sparsity = sparsity(enc.spikes.data());
  }
  nlohmann::json cfg{{"method", baseline::to_string(p.method)}};
  if (p.method == baseline::Method::tbr)
    cfg["delta"] = p.delta;
  else
    cfg["threshold"] = p.threshold;
  if (p.method == baseline::Method::mw) cfg["window"] = p.window;
  return make_report(baseline::to_string(p.method), std::move(m), std::move(cfg));
}

template <typename Real>
MetricsReport evaluate_lse(model::LseModel<Real>& model,
                           std::span<const signal::RealWindow> windows,
                           std::size_t batch_size) {
  if (windows.empty()) throw StructuralError("metrics report over an empty test set");
  if (batch_size == 0) throw InputDomainError("evaluate_lse: batch_size must be >= 1");
  ad::NoGradGuard no_grad;
  std::vector<WindowMetrics> m(windows.size());
  std::vector<std::size_t> idx(windows.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const std::size_t C = windows[0].values.dim(0);
  const std::size_t K = windows[0].length();

  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, idx.size() - start);
    auto b = training::make_batch<Real>(windows, std::span(idx).subspan(start, n));
    const std::size_t M = b.freq.dim(1);
    auto out = model.forward(ad::constant(std::move(b.x)), ad::Mode::eval);
    const auto& rec = out.reconstruction->value;
    const auto& z = out.spikes->value;
    for (std::size_t j = 0; j < n; ++j) {
      const auto& w = windows[start + j];
      Tensor<double> x_hat({C, K});
      std::vector<double> spikes(C * K);
      for (std::size_t e = 0; e < C * K; ++e) {
        x_hat[e] = static_cast<double>(rec[j * C * K + e]);
        spikes[e] = static_cast<double>(z[j * C * K + e]);
      }
      auto& wm = m[start + j];
      wm.rec_rmse = rec_rmse(w.values.data(), x_hat.data());
      wm.dft_rmse = dft_mag_rmse(w.values, x_hat);
      wm.sparsity = sparsity(spikes);
      double fe = 0.0, ae = 0.0;
      for (std::size_t k = 0; k < M; ++k) {
        const double df = w.target.freqs[k] - static_cast<double>(out.freq->value[j * M + k]);
        const double da = w.target.amps[k] - static_cast<double>(out.amp->value[j * M + k]);
        fe += df * df;
        ae += da * da;
      }
      wm.freq_rmse = std::sqrt(fe / static_cast<double>(M));
      wm.amp_rmse = std::sqrt(ae / static_cast<double>(M));
    }
  }
  return make_report("LSE", std::move(m), {{"tau", model.config().tau}});
}

namespace {

void write_summary_cols(std::ostream& os, const std::optional<Summary>& s) {
  if (s)
    os << ',' << s->mean << ',' << s->std;
  else
    os << ",,";
}

nlohmann::json summary_json(const Summary& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"min", s.min}, {"max", s.max}};
}

}  // namespace

void write_reports_csv(std::ostream& os, std::span<const MetricsReport> reports) {
  os << "method,n,rec_rmse_mean,rec_rmse_std,dft_rmse_mean,dft_rmse_std,sparsity_mean,"
        "sparsity_std,freq_rmse_mean,freq_rmse_std,amp_rmse_mean,amp_rmse_std\n";
  const auto prec = os.precision(10);
  for (const auto& r : reports) {
    os << r.method << ',' << r.windows.size();
    write_summary_cols(os, r.rec);
    write_summary_cols(os, r.dft);
    write_summary_cols(os, r.sparsity);
    write_summary_cols(os, r.freq);
    write_summary_cols(os, r.amp);
    os << '\n';
  }
  os.precision(prec);
}

nlohmann::json report_to_json(const MetricsReport& r, bool per_window) {
  nlohmann::json j{{"method", r.method},
                   {"n", r.windows.size()},
                   {"config", r.config},
                   {"rec_rmse", summary_json(r.rec)},
                   {"dft_rmse", summary_json(r.dft)},
                   {"sparsity", summary_json(r.sparsity)}};
  if (r.freq) j["freq_rmse"] = summary_json(*r.freq);
  if (r.amp) j["amp_rmse"] = summary_json(*r.amp);
  if (per_window) {
    nlohmann::json w{{"rec_rmse", nlohmann::json::array()},
                     {"dft_rmse", nlohmann::json::array()},
                     {"sparsity", nlohmann::json::array()}};
    for (const auto& m : r.windows) {
      w["rec_rmse"].push_back(m.rec_rmse);
      w["dft_rmse"].push_back(m.dft_rmse);
      w["sparsity"].push_back(m.sparsity);
      if (m.freq_rmse) w["freq_rmse"].push_back(*m.freq_rmse);
      if (m.amp_rmse) w["amp_rmse"].push_back(*m.amp_rmse);
    }
    j["windows"] = std::move(w);
  }
  return j;
}

void write_plot_data(const std::filesystem::path& path, std::span<const double> x,
                     std::span<const double> y, std::span<const double> y_std) {
  if (x.size() != y.size() || (!y_std.empty() && y_std.size() != y.size()))
    throw StructuralError("write_plot_data: column lengths differ");
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.precision(10);
  for (std::size_t i = 0; i < x.size(); ++i) {
    os << x[i] << ' ' << y[i];
    if (!y_std.empty()) os << ' ' << y_std[i];
    os << '\n';
  }
}

LambdaSweep lambda_sweep(const signal::Dataset& ds, std::span<const double> lambdas,
                         std::size_t n_seeds, const training::TrainConfig& base,
                         const model::ModelConfig& model_cfg, int workers) {
  if (lambdas.empty() || n_seeds == 0) throw InputDomainError("lambda_sweep: nothing to run");
  for (double l : lambdas)
    if (!(l >= 0 && l <= 1)) throw InputDomainError("lambda_sweep: lambda outside [0, 1]");

  LambdaSweep sweep;
  for (double l : lambdas)
    for (std::size_t s = 0; s < n_seeds; ++s)
      sweep.runs.push_back({l, base.seed + s, 0.0, 0.0, 0});

  const auto val = select(ds, signal::Split::val);
  const long n = static_cast<long>(sweep.runs.size());
  std::vector<std::exception_ptr> errors(sweep.runs.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(1, workers))
  for (long i = 0; i < n; ++i) {
    try {
      auto& run = sweep.runs[i];
      auto cfg = base;
      cfg.lambda = run.lambda;
      cfg.seed = run.seed;
      auto score = [&](auto result) {
        const auto report = evaluate_lse(result.model, val, cfg.batch_size);
        run.val_sparsity = report.sparsity.mean;
        run.val_mse = result.best_val.l1;
        run.epochs = result.history.size();
      };
      if (cfg.precision == training::Precision::f64)
        score(training::train<double>(ds, cfg, model_cfg));
      else
        score(training::train<float>(ds, cfg, model_cfg));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (std::size_t li = 0; li < lambdas.size(); ++li) {
    std::vector<double> sp, mse;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      sp.push_back(sweep.runs[li * n_seeds + s].val_sparsity);
      mse.push_back(sweep.runs[li * n_seeds + s].val_mse);
    }
    sweep.points.push_back({lambdas[li], Summary::of(sp), Summary::of(mse)});
  }
  return sweep;
}

void write_lambda_csv(std::ostream& os, const LambdaSweep& s) {
  os << "lambda,seeds,sparsity_mean,sparsity_std,val_mse_mean,val_mse_std\n";
  const auto prec = os.precision(10);
  const std::size_t seeds = s.points.empty() ? 0 : s.runs.size() / s.points.size();
  for (const auto& p : s.points)
    os << p.lambda << ',' << seeds << ',' << p.sparsity.mean << ',' << p.sparsity.std << ','
       << p.mse.mean << ',' << p.mse.std << '\n';
  os.precision(prec);
}

template <typename Real>
std::vector<SnrRow> snr_sweep(const signal::GeneratorConfig& gen,
                              std::span<const baseline::BaselineParams> baselines,
                              model::LseModel<Real>* lse, std::span<const double> snrs,
                              std::size_t n_windows, std::uint64_t seed) {
  if (n_windows == 0) throw InputDomainError("snr_sweep: n_windows must be >= 1");
  std::vector<SnrRow> rows;
  for (double snr : snrs) {
    const auto windows = signal::build_fixed_snr_windows(gen, snr, n_windows, seed);
    auto add = [&](const MetricsReport& r) {
      rows.push_back({r.method, snr, r.rec, r.dft, r.sparsity});
    };
    for (const auto& p : baselines) add(evaluate_baseline(p, windows));
    if (lse) add(evaluate_lse(*lse, windows));
  }
  return rows;
}

void write_snr_csv(std::ostream& os, std::span<const SnrRow> rows) {
  os << "method,snr_db,rec_rmse_mean,rec_rmse_std,dft_rmse_mean,dft_rmse_std,sparsity_mean\n";
  const auto prec = os.precision(10);
  for (const auto& r : rows)
    os << r.method << ',' << r.snr_db << ',' << r.rec.mean << ',' << r.rec.std << ','
       << r.dft.mean << ',' << r.dft.std << ',' << r.sparsity.mean << '\n';
  os.precision(prec);
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double rank_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw InputDomainError("rank_correlation: need two equal-length series of >= 2 values");
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::size_t decreasing_steps(std::span<const double> v) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < v.size(); ++i) n += v[i] < v[i - 1];
  return n;
}

std::size_t increasing_steps(std::span<const double> v) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < v.size(); ++i) n += v[i] > v[i - 1];
  return n;
}

template MetricsReport evaluate_lse(model::LseModel<float>&, std::span<const signal::RealWindow>,
                                    std::size_t);
template MetricsReport evaluate_lse(model::LseModel<double>&,
                                    std::span<const signal::RealWindow>, std::size_t);
template std::vector<SnrRow> snr_sweep(const signal::GeneratorConfig&,
                                       std::span<const baseline::BaselineParams>,
                                       model::LseModel<float>*, std::span<const double>,
                                       std::size_t, std::uint64_t);
template std::vector<SnrRow> snr_sweep(const signal::GeneratorConfig&,
                                       std::span<const baseline::BaselineParams>,
                                       model::LseModel<double>*, std::span<const double>,
                                       std::size_t, std::uint64_t);

}  // namespace lse::eval
