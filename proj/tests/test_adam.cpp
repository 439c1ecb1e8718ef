#include "doctest.h"

#include "lse/adam.hpp"

using namespace lse;
using namespace lse::ad;

TEST_CASE("Adam: zero gradient leaves parameters unchanged") {
  auto p = parameter(Tensor<double>({3}, {1.0, -2.0, 0.5}));
  const auto before = p->value;
  Adam<double> opt({p}, {});
  opt.zero_grad();
  p->grad_buffer();  // explicit zeros
  opt.step();
  CHECK(p->value == before);
  CHECK(opt.steps() == 1);
}

TEST_CASE("Adam: first step moves each entry by about lr against the gradient sign") {
  auto p = parameter(Tensor<double>({4}, 0.0));
  Adam<double> opt({p}, {1e-3, 0.9, 0.999, 1e-8});
  auto& g = p->grad_buffer();
  g[0] = 3.0;
  g[1] = -0.02;
  g[2] = 1e-3;
  g[3] = -50.0;
  opt.step();
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  CHECK(p->value[0] == doctest::Approx(-1e-3).epsilon(1e-6));
  CHECK(p->value[1] == doctest::Approx(1e-3).epsilon(1e-5));
  CHECK(p->value[2] == doctest::Approx(-1e-3 * 1e-3 / (1e-3 + 1e-8)).epsilon(1e-9));
  CHECK(p->value[3] == doctest::Approx(1e-3).epsilon(1e-6));
}

TEST_CASE("Adam: constant gradient decreases the parameter monotonically") {
  auto p = parameter(Tensor<double>({1}, 1.0));
  Adam<double> opt({p}, {});
  double prev = p->value[0];
  for (int i = 0; i < 200; ++i) {
    opt.zero_grad();
    p->grad_buffer()[0] = 0.7;
    opt.step();
    CHECK(p->value[0] < prev);
    prev = p->value[0];
  }
}
