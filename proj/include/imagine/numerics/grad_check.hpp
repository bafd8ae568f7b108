#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "imagine/numerics/tensor.hpp"

namespace imagine::num {

struct GradCheckResult {
  bool passed = true;
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
};

// |a − n| / max(|a|, |n|, 1e-8)
inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

// Central differences of a scalar function `f` around the values of `x`,
// compared against the tape gradient. `f` must rebuild its graph from x on
// every call. `analytic_scale` lets tests corrupt the analytic side.
template <typename T, typename F>
GradCheckResult grad_check(F&& f, Tensor<T> x, T h, double tol, double analytic_scale = 1.0) {
  x.set_requires_grad(true);
  x.zero_grad();
  backward(f(x));
  std::vector<T> analytic(x.grad().begin(), x.grad().end());

  GradCheckResult r;
  auto vals = x.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const T saved = vals[i];
    vals[i] = saved + h;
    const double up = static_cast<double>(f(x).item());
    vals[i] = saved - h;
    const double down = static_cast<double>(f(x).item());
    vals[i] = saved;
    const double numeric = (up - down) / (2.0 * static_cast<double>(h));
    const double err = relative_error(analytic_scale * static_cast<double>(analytic[i]), numeric);
    if (err > r.max_rel_err) {
      r.max_rel_err = err;
      r.worst_index = i;
    }
  }
  r.passed = r.max_rel_err <= tol;
  return r;
}

} // namespace imagine::num
