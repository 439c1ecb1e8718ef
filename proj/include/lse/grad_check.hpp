#pragma once

#include <functional>
#include <span>

#include "lse/autodiff.hpp"

namespace lse::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of the scalar graph built by `f` against
/// central finite differences, perturbing every element of every parameter.
///
/// Relative error per element is |analytic - numeric| / max(|analytic|,
/// |numeric|, floor); the floor keeps entries whose true derivative is ~0
/// from dividing round-off by round-off.
///
/// Ops with surrogate backward passes (spike_threshold_ste, lif_fire) have a
/// backward that intentionally differs from the true derivative and must not
/// appear in `f`.
GradCheckResult grad_check(const std::function<Var<double>()>& f,
                           std::span<const Var<double>> params, double eps = 1e-6,
                           double floor = 1e-6);

}  // namespace lse::ad
