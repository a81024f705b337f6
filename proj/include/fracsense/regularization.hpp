#pragma once

#include <cmath>

namespace fracsense {

/// Morozov penalty: the beta with residual(beta) = target, found by
/// bisection in log beta. residual must increase with beta; scale2 is the
/// squared largest singular value. Returns 0 and sets fallback when even
/// beta = 0 misses the target.
template <class F>
double morozov_beta(F residual, double target, double scale2, bool& fallback) {
  fallback = false;
  if (residual(0.0) >= target) {
    fallback = true;
    return 0.0;
  }
  double lo = std::log(scale2) - 60.0, hi = std::log(scale2) + 30.0;
  if (residual(std::exp(hi)) < target) return std::exp(hi);
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    (residual(std::exp(mid)) < target ? lo : hi) = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

}  // namespace fracsense
