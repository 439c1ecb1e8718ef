#include "doctest.h"

#include <cmath>

#include "lse/baseline_encoders.hpp"
#include "lse/error.hpp"
#include "lse/rng.hpp"

using namespace lse;
using namespace lse::baseline;

namespace {

using Spikes = std::vector<std::int8_t>;

std::vector<double> random_walk(Rng& rng, std::size_t n) {
  std::vector<double> x(n);
  double v = rng.uniform();
  for (auto& e : x) {
    v = std::clamp(v + rng.normal(0.0, 0.1), 0.0, 1.0);
    e = v;
  }
  return x;
}

}  // namespace

TEST_CASE("TBR") {
  SUBCASE("hand example: x = [0, 1, 1], delta = 0") {
    const std::vector<double> x{0, 1, 1};
    const auto e = encode_tbr(x, 0.0);
    CHECK(e.effective_threshold == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(e.spikes == Spikes{0, 1, 0});
    CHECK(e.x0 == 0.0);
  }
  SUBCASE("constant input never spikes") {
    const std::vector<double> x(64, 0.37);
    for (double d : {0.0, 0.005, 3.0}) CHECK(encode_tbr(x, d).spikes == Spikes(64, 0));
  }
  SUBCASE("huge delta gives no spikes") {
    Rng rng(1, 1);
    for (int rep = 0; rep < 50; ++rep) {
      const auto e = encode_tbr(random_walk(rng, 64), 1e6);
      CHECK(std::all_of(e.spikes.begin(), e.spikes.end(), [](auto s) { return s == 0; }));
    }
  }
}

TEST_CASE("SF") {
  const std::vector<double> x{0, 0.3, 0.3};
  const auto e = encode_sf(x, 0.2);
  CHECK(e.spikes == Spikes{0, 1, 0});
  CHECK(e.effective_threshold == 0.2);
  CHECK(encode_sf(std::vector<double>(10, 0.5), 0.2).spikes == Spikes(10, 0));

  SUBCASE("monotone ramp with step below threshold gives no spikes and a constant decode") {
    std::vector<double> ramp(64);
    for (std::size_t k = 0; k < ramp.size(); ++k) ramp[k] = 0.001 * static_cast<double>(k);
    const auto enc = encode_sf(ramp, 0.1);
    CHECK(enc.spikes == Spikes(64, 0));
    for (double v : decode_temporal_contrast(enc)) CHECK(v == 0.0);
  }
  SUBCASE("slow ramp round-trip stays within threshold plus accumulated drift") {
    // Each spike re-seats the baseline at x[k] but the decoder only adds t,
    // so every spike can lag by up to one ramp step.
    const double t = 0.02;
    for (double step : {0.0005, 0.001, 0.002}) {
      std::vector<double> ramp(64);
      for (std::size_t k = 0; k < ramp.size(); ++k) ramp[k] = 0.1 + step * static_cast<double>(k);
      const auto enc = encode_sf(ramp, t);
      const auto xh = decode_temporal_contrast(enc);
      double se = 0.0;
      std::size_t fired = 0;
      for (std::size_t k = 0; k < ramp.size(); ++k) {
        fired += enc.spikes[k] != 0;
        CHECK(std::abs(xh[k] - ramp[k]) <= t + static_cast<double>(fired) * step + 1e-12);
        se += (xh[k] - ramp[k]) * (xh[k] - ramp[k]);
      }
      CHECK(std::sqrt(se / 64.0) < t);
    }
  }
}

TEST_CASE("MW") {
  const std::vector<double> x{0, 0, 0.9};
  const auto e = encode_mw(x, 0.5, 3);
  CHECK(e.spikes == Spikes{0, 0, 1});
  CHECK(encode_mw(std::vector<double>(10, 0.5), 0.06, 3).spikes == Spikes(10, 0));
}

TEST_CASE("decode_temporal_contrast") {
  BaselineEncoding e;
  e.spikes = {0, 1, -1};
  e.effective_threshold = 0.2;
  e.x0 = 0.5;
  const auto xh = decode_temporal_contrast(e);
  REQUIRE(xh.size() == 3);
  CHECK(xh[0] == 0.5);
  CHECK(xh[1] == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(xh[2] == doctest::Approx(0.5).epsilon(1e-15));

  e.spikes = {0, 0, 0, 0};
  for (double v : decode_temporal_contrast(e)) CHECK(v == 0.5);

  e.spikes = {0, 1, 1, 1};
  e.effective_threshold = 0.4;
  const auto clipped = decode_temporal_contrast(e);
  CHECK(clipped.back() == 1.0);
}

TEST_CASE("encoders are causal and deterministic") {
  Rng rng(7, 3);
  for (int rep = 0; rep < 100; ++rep) {
    const auto x = random_walk(rng, 40);
    auto y = x;
    const std::size_t cut = 1 + rng.index(38);
    for (std::size_t k = cut + 1; k < y.size(); ++k) y[k] = rng.uniform();
    for (const auto& p : {BaselineParams{Method::sf, 0, 0.1, 3}, BaselineParams{Method::mw, 0, 0.06, 3},
                          BaselineParams{Method::mw, 0, 0.06, 4}}) {
      const auto a = encode(p, x);
      const auto b = encode(p, y);
      CHECK(a.spikes == encode(p, x).spikes);
      for (std::size_t k = 0; k <= cut; ++k) CHECK(a.spikes[k] == b.spikes[k]);
    }
    // TBR's threshold is a whole-window statistic; with the threshold fixed
    // the spike decision at k depends only on x[k-1], x[k].
    const auto t = encode_tbr(x, 0.005);
    for (std::size_t k = 1; k < x.size(); ++k) {
      const double d = x[k] - x[k - 1];
      const int want = std::abs(d) > t.effective_threshold ? (d > 0 ? 1 : -1) : 0;
      CHECK(t.spikes[k] == want);
    }
    CHECK(t.spikes[0] == 0);
  }
}

TEST_CASE("spike values are ternary and the window shape matches") {
  signal::GeneratorConfig cfg;
  Rng rng(2, 2);
  for (Method m : {Method::tbr, Method::sf, Method::mw}) {
    const auto gt = signal::sample_ground_truth(3, cfg, rng);
    const auto w = signal::to_real_window(signal::generate_window(gt, cfg, rng), cfg);
    const auto enc = encode_window(published_optimum(m), w);
    CHECK(enc.spikes.shape() == Shape{2, 64});
    CHECK(enc.reconstruction.shape() == Shape{2, 64});
    for (double s : enc.spikes.data()) CHECK((s == -1.0 || s == 0.0 || s == 1.0));
    for (double v : enc.reconstruction.data()) CHECK((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("published optima and grids") {
  CHECK(published_optimum(Method::tbr).delta == 0.005);
  CHECK(published_optimum(Method::sf).threshold == 0.2);
  CHECK(published_optimum(Method::mw).threshold == 0.06);
  CHECK(published_optimum(Method::mw).window == 3);
  CHECK(default_grid(Method::mw).points().size() == 36);
  CHECK(default_grid(Method::tbr).points().size() == 10);
  CHECK(grid_range(0.001, 0.01, 0.001).size() == 10);
  CHECK(method_from_string("MW") == Method::mw);
  CHECK_THROWS_AS(method_from_string("rate"), InputDomainError);
}

TEST_CASE("grid search") {
  signal::GeneratorConfig cfg;
  cfg.windows_per_count = 20;
  const auto ds = signal::build_dataset(cfg);
  SUBCASE("single point grid returns that point") {
    Grid g{Method::sf, {0.17}, {}};
    const auto r = grid_search(g, ds);
    REQUIRE(r.points.size() == 1);
    CHECK(r.optimum().threshold == 0.17);
  }
  SUBCASE("empty grid is rejected") {
    CHECK_THROWS_AS(grid_search(Grid{Method::sf, {}, {}}, ds), InputDomainError);
    CHECK_THROWS_AS(grid_search(Grid{Method::mw, {0.1}, {}}, ds), InputDomainError);
  }
  SUBCASE("the flagged optimum has the smallest mean MSE") {
    const auto r = grid_search(default_grid(Method::mw), ds);
    CHECK(r.points.size() == 36);
    for (const auto& p : r.points) CHECK(r.points[r.best].mean_mse <= p.mean_mse);
  }
}
