#pragma once

// Temporal-contrast spike encoders (TBR, SF, MW), the cumulative-sum decoder
// used to score them, and the parameter grid search.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lse/signal_gen.hpp"

namespace lse::baseline {

enum class Method { tbr, sf, mw };

std::string to_string(Method m);
/// Accepts "tbr", "sf", "mw" (any case). Throws InputDomainError otherwise.
Method method_from_string(const std::string& s);

struct BaselineParams {
  Method method = Method::sf;
  double delta = 0.005;     // TBR multiplier
  double threshold = 0.2;   // SF / MW level, normalized signal units
  std::size_t window = 3;   // MW moving-average width

  void validate() const;
};

/// Optimal values found by the published grid search.
BaselineParams published_optimum(Method m);

struct BaselineEncoding {
  std::vector<std::int8_t> spikes;
  double effective_threshold = 0.0;
  double x0 = 0.0;
};

/// Threshold = mean(d) + delta * std(d) over the signed first differences d,
/// clamped at 0. Spike sign(d[k]) where |d[k]| > threshold.
BaselineEncoding encode_tbr(std::span<const double> x, double delta);

/// Step-forward: baseline starts at x[0]; a spike fires when x[k] leaves the
/// baseline by more than the threshold, and the baseline jumps to x[k].
BaselineEncoding encode_sf(std::span<const double> x, double threshold);

/// Like SF, but the baseline at step k is the mean of the last
/// min(k + 1, window) samples up to and including x[k].
BaselineEncoding encode_mw(std::span<const double> x, double threshold,
                           std::size_t window);

BaselineEncoding encode(const BaselineParams& p, std::span<const double> x);

/// x_hat[0] = x0, x_hat[k] = x_hat[k-1] + spikes[k] * threshold, clipped to [0, 1].
std::vector<double> decode_temporal_contrast(const BaselineEncoding& enc);

/// Both channels of a (2, K) window, encoded independently.
struct WindowEncoding {
  Tensor<double> spikes;          // (2, K), entries in {-1, 0, 1}
  Tensor<double> reconstruction;  // (2, K)
};

WindowEncoding encode_window(const BaselineParams& p, const signal::RealWindow& w);

struct Grid {
  Method method = Method::sf;
  std::vector<double> values;        // delta for TBR, threshold otherwise
  std::vector<std::size_t> windows;  // MW only

  std::vector<BaselineParams> points() const;
};

/// lo, lo + step, ... up to hi (inclusive within 1e-9).
std::vector<double> grid_range(double lo, double hi, double step);

/// The published search intervals and steps.
Grid default_grid(Method m);

struct GridPoint {
  BaselineParams params;
  double mean_mse = 0.0;
};

struct GridSearchResult {
  std::vector<GridPoint> points;
  std::size_t best = 0;

  const BaselineParams& optimum() const { return points.at(best).params; }
};

/// Evaluates every grid point by mean per-window reconstruction MSE over the
/// given partition and returns all points with the minimizer flagged. Ties go
/// to the earliest point.
GridSearchResult grid_search(const Grid& grid, const signal::Dataset& ds,
                             signal::Split split = signal::Split::val);

/// CSV: method,delta,threshold,window,mean_mse,optimal
void write_grid_csv(std::ostream& os, const GridSearchResult& r);

}  // namespace lse::baseline
