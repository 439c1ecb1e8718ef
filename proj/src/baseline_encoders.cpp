#include "lse/baseline_encoders.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <ostream>

#include "lse/error.hpp"
#include "lse/kernels.hpp"

namespace lse::baseline {

namespace {

std::int8_t contrast_spike(double x, double baseline, double threshold) {
  if (x - baseline > threshold) return 1;
  if (baseline - x > threshold) return -1;
  return 0;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::tbr:
      return "TBR";
    case Method::sf:
      return "SF";
    case Method::mw:
      return "MW";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "tbr") return Method::tbr;
  if (lower == "sf") return Method::sf;
  if (lower == "mw") return Method::mw;
  throw InputDomainError("unknown baseline method '" + s + "'");
}

void BaselineParams::validate() const {
  switch (method) {
    case Method::tbr:
      if (!(delta > 0)) throw InputDomainError("TBR: delta must be > 0");
      break;
    case Method::mw:
      if (window < 2) throw InputDomainError("MW: window must be >= 2");
      [[fallthrough]];
    case Method::sf:
      if (!(threshold > 0)) throw InputDomainError(to_string(method) + ": threshold must be > 0");
      break;
  }
}

BaselineParams published_optimum(Method m) {
  switch (m) {
    case Method::tbr:
      return {Method::tbr, 0.005, 0.0, 0};
    case Method::sf:
      return {Method::sf, 0.0, 0.2, 0};
    case Method::mw:
      return {Method::mw, 0.0, 0.06, 3};
  }
  return {};
}

BaselineEncoding encode_tbr(std::span<const double> x, double delta) {
  BaselineEncoding enc;
  enc.spikes.assign(x.size(), 0);
  if (x.empty()) return enc;
  enc.x0 = x[0];
  if (x.size() < 2) return enc;

  const std::size_t n = x.size() - 1;
  double mu = 0.0;
  for (std::size_t k = 1; k < x.size(); ++k) mu += x[k] - x[k - 1];
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t k = 1; k < x.size(); ++k) {
    const double d = (x[k] - x[k - 1]) - mu;
    var += d * d;
  }
  const double sigma = std::sqrt(var / static_cast<double>(n));
  enc.effective_threshold = std::max(0.0, mu + delta * sigma);

  for (std::size_t k = 1; k < x.size(); ++k) {
    const double d = x[k] - x[k - 1];
    if (std::abs(d) > enc.effective_threshold) enc.spikes[k] = d > 0 ? 1 : -1;
  }
  return enc;
}

BaselineEncoding encode_sf(std::span<const double> x, double threshold) {
  BaselineEncoding enc;
  enc.spikes.assign(x.size(), 0);
  enc.effective_threshold = threshold;
  if (x.empty()) return enc;
  enc.x0 = x[0];
  double base = x[0];
  for (std::size_t k = 1; k < x.size(); ++k) {
    enc.spikes[k] = contrast_spike(x[k], base, threshold);
    if (enc.spikes[k] != 0) base = x[k];
  }
  return enc;
}

BaselineEncoding encode_mw(std::span<const double> x, double threshold,
                           std::size_t window) {
  BaselineEncoding enc;
  enc.spikes.assign(x.size(), 0);
  enc.effective_threshold = threshold;
  if (x.empty()) return enc;
  enc.x0 = x[0];
  double running = x[0];
  for (std::size_t k = 1; k < x.size(); ++k) {
    running += x[k];
    if (k >= window) running -= x[k - window];
    const double base = running / static_cast<double>(std::min(k + 1, window));
    enc.spikes[k] = contrast_spike(x[k], base, threshold);
  }
  return enc;
}

BaselineEncoding encode(const BaselineParams& p, std::span<const double> x) {
  switch (p.method) {
    case Method::tbr:
      return encode_tbr(x, p.delta);
    case Method::sf:
      return encode_sf(x, p.threshold);
    case Method::mw:
      return encode_mw(x, p.threshold, p.window);
  }
  return {};
}

std::vector<double> decode_temporal_contrast(const BaselineEncoding& enc) {
  std::vector<double> out(enc.spikes.size());
  double level = enc.x0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (k > 0) level += enc.spikes[k] * enc.effective_threshold;
    out[k] = std::clamp(level, 0.0, 1.0);
  }
  return out;
}

WindowEncoding encode_window(const BaselineParams& p, const signal::RealWindow& w) {
  const std::size_t C = w.values.dim(0);
  const std::size_t K = w.length();
  WindowEncoding out{Tensor<double>(Shape{C, K}), Tensor<double>(Shape{C, K})};
  for (std::size_t c = 0; c < C; ++c) {
    const auto enc = encode(p, w.channel(c));
    const auto rec = decode_temporal_contrast(enc);
    for (std::size_t k = 0; k < K; ++k) {
      out.spikes[c * K + k] = enc.spikes[k];
      out.reconstruction[c * K + k] = rec[k];
    }
  }
  return out;
}

std::vector<BaselineParams> Grid::points() const {
  std::vector<BaselineParams> pts;
  for (double v : values) {
    BaselineParams p;
    p.method = method;
    if (method == Method::tbr) {
      p.delta = v;
      pts.push_back(p);
    } else if (method == Method::sf) {
      p.threshold = v;
      pts.push_back(p);
    } else {
      p.threshold = v;
      for (std::size_t w : windows) {
        p.window = w;
        pts.push_back(p);
      }
    }
  }
  return pts;
}

std::vector<double> grid_range(double lo, double hi, double step) {
  if (!(step > 0) || hi < lo) throw InputDomainError("grid_range: invalid interval");
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = lo + static_cast<double>(i) * step;
  return out;
}

Grid default_grid(Method m) {
  switch (m) {
    case Method::tbr:
      return {m, grid_range(0.001, 0.01, 0.001), {}};
    case Method::sf:
      return {m, grid_range(0.05, 0.3, 0.05), {}};
    case Method::mw:
      return {m, grid_range(0.01, 0.6, 0.05), {2, 3, 4}};
  }
  return {};
}

GridSearchResult grid_search(const Grid& grid, const signal::Dataset& ds,
                             signal::Split split) {
  const auto points = grid.points();
  if (points.empty()) throw InputDomainError("grid_search: empty grid");
  const auto& idx = ds.partition(split);
  if (idx.empty()) throw StructuralError("grid_search: empty partition");

  GridSearchResult result;
  result.points.reserve(points.size());
  std::vector<double> per_window(idx.size());
  for (const auto& p : points) {
    p.validate();
    const long n = static_cast<long>(idx.size());
#pragma omp parallel for schedule(static) num_threads(kernels::thread_count())
    for (long i = 0; i < n; ++i) {
      const auto& w = ds.windows[idx[i]];
      const auto enc = encode_window(p, w);
      double se = 0.0;
      for (std::size_t j = 0; j < w.values.size(); ++j) {
        const double d = w.values[j] - enc.reconstruction[j];
        se += d * d;
      }
      per_window[i] = se / static_cast<double>(w.values.size());
    }
    double total = 0.0;
    for (double v : per_window) total += v;
    result.points.push_back({p, total / static_cast<double>(idx.size())});
  }
  for (std::size_t i = 1; i < result.points.size(); ++i)
    if (result.points[i].mean_mse < result.points[result.best].mean_mse) result.best = i;
  return result;
}

void write_grid_csv(std::ostream& os, const GridSearchResult& r) {
  os << "method,delta,threshold,window,mean_mse,optimal\n";
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    const auto& p = r.points[i].params;
    os << to_string(p.method) << ',';
    if (p.method == Method::tbr)
      os << p.delta << ",,";
    else
      os << ',' << p.threshold << ',';
    if (p.method == Method::mw) os << p.window;
    os << ',' << r.points[i].mean_mse << ',' << (i == r.best ? 1 : 0) << '\n';
  }
}

}  // namespace lse::baseline
