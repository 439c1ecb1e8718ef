#include "doctest.h"

#include <cmath>
#include <limits>

#include "lse/grad_check.hpp"
#include "lse/kernels.hpp"
#include "test_util.hpp"

using namespace lse;
using namespace lse::ad;
using lse::testing::random_tensor;

namespace {

// Pinned tolerances.
constexpr double kGradTol = 1e-4;        // finite differences, fp64
constexpr double kSmoothGradTol = 1e-6;  // tanh / sigmoid
constexpr double kLifTol = 1e-12;

using V = Var<double>;

V rand_param(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return parameter(random_tensor<double>(std::move(s), rng, lo, hi));
}

// Reduces any tensor to a scalar through a fixed random weighting, so every
// output element contributes a distinct derivative.
V weighted_sum(const V& y, std::uint64_t seed) {
  Rng rng(seed, 77);
  return sum(mul(y, constant(random_tensor<double>(y->shape(), rng))));
}

double check(const std::function<V()>& f, std::vector<V> params) {
  const auto r = grad_check(f, params);
  CHECK(r.checked > 0);
  return r.max_rel_error;
}

}  // namespace

TEST_CASE("elementwise ops and reductions pass gradient checks") {
  Rng rng(1, 0);
  auto a = rand_param({3, 4}, rng);
  auto b = rand_param({3, 4}, rng);
  CHECK(check([&] { return weighted_sum(add(a, b), 1); }, {a, b}) <= kGradTol);
  CHECK(check([&] { return weighted_sum(sub(a, b), 2); }, {a, b}) <= kGradTol);
  CHECK(check([&] { return weighted_sum(mul(a, b), 3); }, {a, b}) <= kGradTol);
  CHECK(check([&] { return weighted_sum(scale(a, 2.5), 4); }, {a}) <= kGradTol);
  CHECK(check([&] { return sum(a); }, {a}) <= kGradTol);
  CHECK(check([&] { return mean(a); }, {a}) <= kGradTol);
  CHECK(check([&] { return mse(a, b); }, {a, b}) <= kGradTol);
  // mean_abs is smooth away from zero.
  auto pos = rand_param({2, 5}, rng, 0.2, 1.0);
  auto neg = rand_param({2, 5}, rng, -1.0, -0.2);
  CHECK(check([&] { return add(mean_abs(pos), mean_abs(neg)); }, {pos, neg}) <= kGradTol);
}

TEST_CASE("activations: values and gradients") {
  auto z = constant(Tensor<double>({3}, {0.0, 2.0, -2.0}));
  CHECK(tanh(z)->value[0] == 0.0);
  CHECK(sigmoid(z)->value[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(hard_tanh(z)->value[1] == 1.0);
  CHECK(hard_tanh(z)->value[2] == -1.0);

  Rng rng(2, 0);
  auto x = rand_param({4, 6}, rng, -2.0, 2.0);
  CHECK(check([&] { return weighted_sum(tanh(x), 5); }, {x}) <= kSmoothGradTol);
  CHECK(check([&] { return weighted_sum(sigmoid(x), 6); }, {x}) <= kSmoothGradTol);
  auto inner = rand_param({4, 6}, rng, -0.9, 0.9);
  CHECK(check([&] { return weighted_sum(hard_tanh(inner), 7); }, {inner}) <= kGradTol);

  // hard_tanh derivative: 1 inside, 0 outside.
  auto h = parameter(Tensor<double>({2}, {0.5, 2.0}));
  backward(sum(hard_tanh(h)));
  CHECK(h->grad[0] == 1.0);
  CHECK(h->grad[1] == 0.0);
}

TEST_CASE("linear layer gradients are exact") {
  Rng rng(3, 0);
  auto x = rand_param({5, 4}, rng);
  auto w = rand_param({3, 4}, rng);
  CHECK(check([&] { return weighted_sum(linear(x, w), 8); }, {x, w}) <= 1e-8);
  CHECK_THROWS_AS(linear(x, rand_param({3, 5}, rng)), StructuralError);
}

TEST_CASE("conv1d and conv1d_transpose gradients") {
  Rng rng(4, 0);
  auto x = rand_param({3, 2, 9}, rng);
  auto w = rand_param({4, 2, 7}, rng);
  auto b = rand_param({4}, rng);
  CHECK(check([&] { return weighted_sum(conv1d(x, w, b), 9); }, {x, w, b}) <= kGradTol);
  CHECK(check([&] { return weighted_sum(conv1d(x, w, V{}), 10); }, {x, w}) <= kGradTol);

  auto wt = rand_param({2, 5, 7}, rng);
  auto bt = rand_param({5}, rng);
  CHECK(check([&] { return weighted_sum(conv1d_transpose(x, wt, bt), 11); }, {x, wt, bt}) <=
        kGradTol);

  // Narrow output layers take a different kernel path.
  auto wide = rand_param({2, 12, 8}, rng);
  auto wn = rand_param({2, 12, 5}, rng);
  CHECK(check([&] { return weighted_sum(conv1d(wide, wn, V{}), 12); }, {wide, wn}) <= kGradTol);

  CHECK_THROWS_AS(conv1d(x, rand_param({4, 3, 7}, rng), V{}), StructuralError);
  CHECK_THROWS_AS(conv1d(x, rand_param({4, 2, 6}, rng), V{}), StructuralError);
}

TEST_CASE("conv1d_transpose is the adjoint of conv1d") {
  Rng rng(5, 0);
  const auto w = random_tensor<double>({3, 4, 7}, rng);  // (C_in of transpose, C_out, L)
  const auto x = random_tensor<double>({2, 3, 10}, rng);
  const auto y = conv1d_transpose(constant(x), constant(w), V{})->value;

  // Same numbers through the conv1d backward-input kernel, where the conv maps
  // 4 channels to 3 with weight (3, 4, 7).
  const kernels::Conv1dDims d{2, 4, 3, 10, 7};
  Tensor<double> expect({2, 4, 10});
  kernels::reference::conv1d_backward_input<double>(d, x.data(), w.data(), expect.data());
  CHECK(lse::testing::max_abs_diff<double>(y.data(), expect.data()) <= 1e-12);

  // <conv(u), v> == <u, conv_transpose(v)>
  const auto u = random_tensor<double>({2, 4, 10}, rng);
  const auto cu = conv1d(constant(u), constant(w), V{})->value;
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < cu.size(); ++i) lhs += cu[i] * x[i];
  for (std::size_t i = 0; i < u.size(); ++i) rhs += u[i] * y[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));

  // Identity kernel, transposed, is still the identity.
  Tensor<double> id({1, 1, 7});
  id[3] = 1.0;
  const auto v = random_tensor<double>({1, 1, 6}, rng);
  CHECK(conv1d_transpose(constant(v), constant(id), V{})->value == v);
}

TEST_CASE("batchnorm1d behaviour and gradients") {
  Rng rng(6, 0);
  SUBCASE("standardized input passes through") {
    // Per channel: values +-1 with mean 0 and biased variance 1.
    Tensor<double> x({2, 1, 2}, {1, -1, -1, 1});
    BatchNormStats<double> st(1);
    auto y = batchnorm1d(constant(x), parameter(Tensor<double>({1}, 1.0)),
                         parameter(Tensor<double>({1}, 0.0)), st, Mode::train);
    for (std::size_t i = 0; i < 4; ++i) CHECK(y->value[i] == doctest::Approx(x[i]).epsilon(1e-5));
  }
  SUBCASE("constant input maps to the shift") {
    BatchNormStats<double> st(2);
    auto y = batchnorm1d(constant(Tensor<double>({3, 2, 4}, 5.0)),
                         parameter(Tensor<double>({2}, 1.0)), parameter(Tensor<double>({2}, 0.7)),
                         st, Mode::train);
    for (auto v : y->value.data()) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));
  }
  SUBCASE("eval before training uses mean 0, var 1") {
    BatchNormStats<double> st(1);
    auto x = random_tensor<double>({2, 1, 3}, rng);
    auto y = batchnorm1d(constant(x), parameter(Tensor<double>({1}, 1.0)),
                         parameter(Tensor<double>({1}, 0.0)), st, Mode::eval);
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(y->value[i] == doctest::Approx(x[i] / std::sqrt(1 + 1e-5)).epsilon(1e-12));
  }
  SUBCASE("running statistics follow the momentum rule") {
    BatchNormStats<double> st(1);
    Tensor<double> x({1, 1, 4}, {1, 2, 3, 4});
    batchnorm1d(constant(x), parameter(Tensor<double>({1}, 1.0)),
                parameter(Tensor<double>({1}, 0.0)), st, Mode::train);
    CHECK(st.running_mean[0] == doctest::Approx(0.1 * 2.5).epsilon(1e-12));
    // Unbiased variance of {1,2,3,4} is 5/3.
    CHECK(st.running_var[0] == doctest::Approx(0.9 + 0.1 * 5.0 / 3.0).epsilon(1e-9));
  }
  SUBCASE("gradients in both modes") {
    auto x = rand_param({4, 3, 5}, rng, -2, 2);
    auto g = rand_param({3}, rng, 0.5, 1.5);
    auto b = rand_param({3}, rng);
    BatchNormStats<double> st(3);
    CHECK(check(
              [&] {
                BatchNormStats<double> local(3);
                return weighted_sum(batchnorm1d(x, g, b, local, Mode::train), 13);
              },
              {x, g, b}) <= kGradTol);
    st.running_mean = random_tensor<double>({3}, rng);
    st.running_var = random_tensor<double>({3}, rng, 0.5, 2.0);
    CHECK(check([&] { return weighted_sum(batchnorm1d(x, g, b, st, Mode::eval), 14); },
                {x, g, b}) <= kGradTol);
  }
}

TEST_CASE("conv -> batchnorm -> tanh -> mse chain passes a gradient check") {
  Rng rng(7, 0);
  auto x = constant(random_tensor<double>({4, 2, 8}, rng));
  auto target = constant(random_tensor<double>({4, 3, 8}, rng));
  auto w = rand_param({3, 2, 7}, rng);
  auto bias = rand_param({3}, rng);
  auto g = rand_param({3}, rng, 0.5, 1.5);
  auto sh = rand_param({3}, rng);
  const auto r = grad_check(
      [&] {
        BatchNormStats<double> st(3);
        return mse(tanh(batchnorm1d(conv1d(x, w, bias), g, sh, st, Mode::train)), target);
      },
      std::vector<V>{w, bias, g, sh});
  CHECK(r.max_rel_error <= kGradTol);
}

TEST_CASE("gradients accumulate over fan-out") {
  auto a = parameter(Tensor<double>({2}, {1.5, -2.0}));
  // f = sum(a) + sum(a * a) + 3 * sum(a): df/da = 1 + 2a + 3
  auto f = add(add(sum(a), sum(mul(a, a))), scale(sum(a), 3.0));
  backward(f);
  CHECK(a->grad[0] == doctest::Approx(4 + 3.0));
  CHECK(a->grad[1] == doctest::Approx(4 - 4.0));
}

TEST_CASE("backward needs a scalar root; no-grad mode records nothing") {
  auto a = parameter(Tensor<double>({2}, 1.0));
  CHECK_THROWS_AS(backward(mul(a, a)), StructuralError);
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    auto y = mul(a, a);
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty());
  }
  CHECK(grad_enabled());
}

TEST_CASE("spike threshold: forward cases") {
  const double tau = 0.1;
  auto z = spike_threshold_ste(constant(Tensor<double>({3}, {0.05, -0.3, 0.1})), tau);
  CHECK(z->value == Tensor<double>({3}, {0.0, -1.0, 1.0}));
  CHECK_THROWS_AS(spike_threshold_ste(constant(Tensor<double>({1})), 0.0), InputDomainError);
}

TEST_CASE("spike threshold: exhaustive probes around +-tau") {
  for (double tau : {0.1, 0.25, 1e-3, 0.5}) {
    std::vector<double> probes{0.0, -0.0};
    for (double edge : {tau, -tau}) {
      double v = edge;
      for (int i = 0; i < 64; ++i) v = std::nextafter(v, -std::numeric_limits<double>::infinity());
      for (int i = 0; i < 129; ++i) {
        probes.push_back(v);
        v = std::nextafter(v, std::numeric_limits<double>::infinity());
      }
      for (double off : {1e-12, 1e-9, 1e-6, 1e-3})
        for (double s : {-1.0, 1.0}) probes.push_back(edge + s * off);
    }
    for (double big : {10.0, -10.0, 1.0, -1.0}) probes.push_back(big);
    const auto z = spike_threshold_ste(constant(Tensor<double>({probes.size()}, probes)), tau);
    for (std::size_t i = 0; i < probes.size(); ++i) {
      const double x = probes[i];
      const double expect = std::abs(x) >= tau ? (x > 0 ? 1.0 : -1.0) : 0.0;
      CAPTURE(x);
      CHECK(z->value[i] == expect);
    }
  }
}

TEST_CASE("spike threshold: straight-through backward") {
  auto x = parameter(Tensor<double>({4}, {0.5, 1.5, -0.05, -1.5}));
  auto z = spike_threshold_ste(x, 0.1);
  backward(weighted_sum(z, 15));
  Rng rng(15, 77);
  const auto w = random_tensor<double>({4}, rng);
  CHECK(x->grad[0] == w[0]);
  CHECK(x->grad[1] == 0.0);
  CHECK(x->grad[2] == w[2]);
  CHECK(x->grad[3] == 0.0);
}

TEST_CASE("time_slice") {
  Rng rng(8, 0);
  auto z = rand_param({2, 3, 5}, rng);
  auto s = time_slice(z, 4);
  CHECK(s->shape() == Shape{2, 3});
  CHECK(s->value[1 * 3 + 2] == z->value[(1 * 3 + 2) * 5 + 4]);
  CHECK(check([&] { return weighted_sum(time_slice(z, 2), 16); }, {z}) <= kGradTol);
  CHECK_THROWS_AS(time_slice(z, 5), StructuralError);
}

namespace {

// Scalar-loop recurrence: u = beta u_prev + sum_i w x_i - theta s_prev,
// s = [u >= theta].
struct ScalarLif {
  std::vector<std::vector<double>> u, s;  // [t][n*H + h]
};

ScalarLif scalar_lif(const std::vector<Tensor<double>>& inputs, const Tensor<double>& w,
                     const Tensor<double>& beta, const Tensor<double>& theta) {
  const std::size_t N = inputs[0].dim(0), I = inputs[0].dim(1), H = w.dim(0);
  ScalarLif r;
  std::vector<double> u(N * H, 0.0), s(N * H, 0.0);
  for (const auto& x : inputs) {
    std::vector<double> nu(N * H), ns(N * H);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t h = 0; h < H; ++h) {
        double cur = 0.0;
        for (std::size_t i = 0; i < I; ++i) cur += w[h * I + i] * x[n * I + i];
        const double v = beta[h] * u[n * H + h] + cur - theta[h] * s[n * H + h];
        nu[n * H + h] = v;
        ns[n * H + h] = v >= theta[h] ? 1.0 : 0.0;
      }
    u = nu;
    s = ns;
    r.u.push_back(u);
    r.s.push_back(s);
  }
  return r;
}

}  // namespace

TEST_CASE("LIF worked example: constant drive 0.6") {
  auto w = parameter(Tensor<double>({1, 1}, 0.6));
  auto beta = parameter(Tensor<double>({1}, 0.9));
  auto theta = parameter(Tensor<double>({1}, 1.0));
  auto in = constant(Tensor<double>({1, 1}, 1.0));
  auto st = lif_initial_state<double>(1, 1);
  const double u_expect[] = {0.6, 1.14, 0.626};
  const double s_expect[] = {0, 1, 0};
  for (int t = 0; t < 3; ++t) {
    st = lif_step(st, in, w, beta, theta, 2.0);
    CHECK(std::abs(st.u->value[0] - u_expect[t]) <= kLifTol);
    CHECK(st.s->value[0] == s_expect[t]);
  }
}

TEST_CASE("LIF step matches the scalar reference on random instances") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed, 3);
    const std::size_t N = 1 + rng.index(4), I = 1 + rng.index(5), H = 1 + rng.index(6);
    const std::size_t T = 2 + rng.index(10);
    auto w = random_tensor<double>({H, I}, rng, -1.0, 1.5);
    auto beta = random_tensor<double>({H}, rng, 0.0, 1.0);
    auto theta = random_tensor<double>({H}, rng, 0.3, 1.5);
    std::vector<Tensor<double>> inputs;
    for (std::size_t t = 0; t < T; ++t) {
      Tensor<double> x({N, I});
      for (auto& v : x.data()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
      inputs.push_back(x);
    }
    const auto ref = scalar_lif(inputs, w, beta, theta);
    auto st = lif_initial_state<double>(N, H);
    for (std::size_t t = 0; t < T; ++t) {
      st = lif_step(st, constant(inputs[t]), parameter(w), parameter(beta), parameter(theta), 2.0);
      for (std::size_t i = 0; i < N * H; ++i) {
        CHECK(std::abs(st.u->value[i] - ref.u[t][i]) <= kLifTol);
        CHECK(st.s->value[i] == ref.s[t][i]);
      }
    }
  }
}

TEST_CASE("LIF special cases") {
  SUBCASE("zero input, zero state stays zero") {
    auto st = lif_initial_state<double>(2, 3);
    Rng rng(1, 1);
    auto w = parameter(random_tensor<double>({3, 4}, rng));
    for (int t = 0; t < 5; ++t) {
      st = lif_step(st, constant(Tensor<double>({2, 4})), w, parameter(Tensor<double>({3}, 0.9)),
                    parameter(Tensor<double>({3}, 1.0)), 2.0);
      for (auto v : st.u->value.data()) CHECK(v == 0.0);
      for (auto v : st.s->value.data()) CHECK(v == 0.0);
    }
  }
  SUBCASE("beta = 0 without prior spikes is memoryless") {
    Rng rng(2, 2);
    auto w = random_tensor<double>({3, 4}, rng, -0.2, 0.2);
    auto x = Tensor<double>({1, 4}, 1.0);
    auto st = lif_step(lif_initial_state<double>(1, 3), constant(x), parameter(w),
                       parameter(Tensor<double>({3}, 0.0)), parameter(Tensor<double>({3}, 1.0)),
                       2.0);
    for (std::size_t h = 0; h < 3; ++h) {
      double expect = 0;
      for (std::size_t i = 0; i < 4; ++i) expect += w[h * 4 + i];
      CHECK(std::abs(st.u->value[h] - expect) <= kLifTol);
    }
  }
}

TEST_CASE("LIF membrane gradients and surrogate firing derivative") {
  Rng rng(9, 0);
  auto u_prev = rand_param({3, 4}, rng);
  auto cur = rand_param({3, 4}, rng);
  auto beta = rand_param({4}, rng, 0.2, 0.95);
  auto theta = rand_param({4}, rng, 0.5, 1.5);
  Tensor<double> s_prev({3, 4});
  for (auto& v : s_prev.data()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
  auto sp = constant(s_prev);
  CHECK(check([&] { return weighted_sum(lif_membrane(u_prev, sp, cur, beta, theta), 17); },
              {u_prev, cur, beta, theta}) <= kGradTol);

  // Surrogate: d s / d u = 1 / (1 + (alpha (u - theta))^2), d s / d theta = -that.
  auto u = parameter(Tensor<double>({1, 3}, {0.2, 1.0, 1.7}));
  auto th = parameter(Tensor<double>({3}, 1.0));
  backward(sum(lif_fire(u, th, 2.0)));
  const double du[] = {1.0 / (1.0 + 2.56), 1.0, 1.0 / (1.0 + 1.96)};
  for (int i = 0; i < 3; ++i) {
    CHECK(u->grad[i] == doctest::Approx(du[i]).epsilon(1e-14));
    CHECK(th->grad[i] == doctest::Approx(-du[i]).epsilon(1e-14));
  }
}
