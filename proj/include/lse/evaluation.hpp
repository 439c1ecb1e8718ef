#pragma once

// Per-window metrics (reconstruction RMSE, DFT-magnitude RMSE, sparsity,
// frequency and amplitude RMSE), their aggregation, and the lambda and SNR
// experiment sweeps.

#include <complex>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "lse/baseline_encoders.hpp"
#include "lse/model.hpp"
#include "lse/signal_gen.hpp"
#include "lse/training.hpp"

namespace lse::eval {

/// Naive K-point DFT: X[m] = sum_k x[k] exp(-2 pi j m k / K).
std::vector<std::complex<double>> dft(std::span<const std::complex<double>> x);

/// sqrt(mean((x - x_hat)^2)). Throws StructuralError on size mismatch.
double rec_rmse(std::span<const double> x, std::span<const double> x_hat);

/// Rows 0 and 1 of the (2, K) windows form re + j im. Both magnitude spectra
/// are divided by the largest magnitude of the original's spectrum.
double dft_mag_rmse(const Tensor<double>& x, const Tensor<double>& x_hat);

/// Fraction of zero entries.
double sparsity(std::span<const double> z);
/// Mean absolute value.
double spike_density(std::span<const double> z);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population
  double min = 0.0;
  double max = 0.0;

  /// Throws StructuralError on empty input.
  static Summary of(std::span<const double> v);
};

struct WindowMetrics {
  double rec_rmse = 0.0;
  double dft_rmse = 0.0;
  double sparsity = 0.0;
  std::optional<double> freq_rmse;  // LSE only
  std::optional<double> amp_rmse;
};

struct MetricsReport {
  std::string method;
  std::vector<WindowMetrics> windows;
  Summary rec;
  Summary dft;
  Summary sparsity;
  std::optional<Summary> freq;
  std::optional<Summary> amp;
  nlohmann::json config = nlohmann::json::object();
};

/// Aggregates per-window metrics. Throws StructuralError when empty.
MetricsReport make_report(std::string method, std::vector<WindowMetrics> windows,
                          nlohmann::json config = nlohmann::json::object());

std::vector<signal::RealWindow> select(const signal::Dataset& ds, signal::Split split);

MetricsReport evaluate_baseline(const baseline::BaselineParams& p,
                                std::span<const signal::RealWindow> windows);

/// Eval-mode forward passes in batches of `batch_size`.
template <typename Real>
MetricsReport evaluate_lse(model::LseModel<Real>& model,
                           std::span<const signal::RealWindow> windows,
                           std::size_t batch_size = 256);

/// CSV, one row per report: method,n,rec_rmse_mean,rec_rmse_std,
/// dft_rmse_mean,dft_rmse_std,sparsity_mean,sparsity_std,freq_rmse_mean,
/// freq_rmse_std,amp_rmse_mean,amp_rmse_std (regression columns empty for
/// baselines).
void write_reports_csv(std::ostream& os, std::span<const MetricsReport> reports);
nlohmann::json report_to_json(const MetricsReport& r, bool per_window);

/// Whitespace-separated columns "x y" or "x y y_std", one point per line.
void write_plot_data(const std::filesystem::path& path, std::span<const double> x,
                     std::span<const double> y, std::span<const double> y_std = {});

// --- lambda sweep -------------------------------------------------------------

struct LambdaRun {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  double val_sparsity = 0.0;  // mean per-window sparsity on the validation set
  double val_mse = 0.0;       // reconstruction MSE (L1) on the validation set
  std::size_t epochs = 0;
};

struct LambdaPoint {
  double lambda = 0.0;
  Summary sparsity;
  Summary mse;
};

struct LambdaSweep {
  std::vector<LambdaRun> runs;
  std::vector<LambdaPoint> points;  // in lambda order
};

/// One independent training per (lambda, seed). Seeds are base_seed + i.
/// Runs execute on `workers` threads; results do not depend on that count.
LambdaSweep lambda_sweep(const signal::Dataset& ds, std::span<const double> lambdas,
                         std::size_t n_seeds, const training::TrainConfig& base,
                         const model::ModelConfig& model_cfg = {}, int workers = 1);

void write_lambda_csv(std::ostream& os, const LambdaSweep& s);

// --- SNR sweep ----------------------------------------------------------------

struct SnrRow {
  std::string method;
  double snr_db = 0.0;
  Summary rec;
  Summary dft;
  Summary sparsity;
};

/// Fresh single-SNR test sets of n_windows each. Every baseline in
/// `baselines` and, if given, the LSE model are scored on the same windows.
template <typename Real>
std::vector<SnrRow> snr_sweep(const signal::GeneratorConfig& gen,
                              std::span<const baseline::BaselineParams> baselines,
                              model::LseModel<Real>* lse, std::span<const double> snrs,
                              std::size_t n_windows, std::uint64_t seed);

void write_snr_csv(std::ostream& os, std::span<const SnrRow> rows);

/// Spearman rank correlation (average ranks on ties).
double rank_correlation(std::span<const double> x, std::span<const double> y);

/// Number of adjacent pairs with v[i+1] < v[i] (for a non-decreasing check)
/// or v[i+1] > v[i] (non-increasing).
std::size_t decreasing_steps(std::span<const double> v);
std::size_t increasing_steps(std::span<const double> v);

}  // namespace lse::eval
