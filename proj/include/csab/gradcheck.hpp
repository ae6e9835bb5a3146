#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>

#include "csab/tensor.hpp"

namespace csab {

// One finite-difference comparison: perturbs value[index] by +/-eps, calls
// f() after each perturbation, and compares the central difference against
// the analytic gradient. The error is
//     |analytic - numeric| / max(1, |analytic|, |numeric|)
// and the check passes when it is at most tol.
template <typename T>
struct GradCheckResult {
  T analytic;
  T numeric;
  T error;
  bool ok;
};

template <typename T>
GradCheckResult<T> finite_diff_check(Tensor<T>& value, std::size_t index,
                                     T analytic,
                                     const std::function<T()>& loss_fn, T eps,
                                     T tol) {
  const T saved = value[index];
  value[index] = saved + eps;
  const T up = loss_fn();
  value[index] = saved - eps;
  const T down = loss_fn();
  value[index] = saved;
  const T numeric = (up - down) / (T(2) * eps);
  const T denom =
      std::max(T(1), std::max(std::abs(analytic), std::abs(numeric)));
  const T error = std::abs(analytic - numeric) / denom;
  return {analytic, numeric, error, error <= tol};
}

}  // namespace csab
