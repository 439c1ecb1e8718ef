#include "lse/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace lse::ad {

GradCheckResult grad_check(const std::function<Var<double>()>& f,
                           std::span<const Var<double>> params, double eps,
                           double floor) {
  zero_grad<double>(params);
  backward(f());

  GradCheckResult result;
  for (const auto& p : params) {
    const Tensor<double> analytic =
        p->has_grad() ? p->grad : Tensor<double>(p->shape(), 0.0);
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double plus = f()->value[0];
      p->value[i] = saved - eps;
      const double minus = f()->value[0];
      p->value[i] = saved;

      const double numeric = (plus - minus) / (2.0 * eps);
      const double abs_err = std::abs(analytic[i] - numeric);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      result.max_rel_error = std::max(result.max_rel_error, abs_err / denom);
      ++result.checked;
    }
  }
  return result;
}

}  // namespace lse::ad
