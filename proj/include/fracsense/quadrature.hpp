#pragma once

#include "fracsense/types.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace fracsense {

struct GaussRule {
  std::vector<double> x;  ///< nodes on [-1, 1]
  std::vector<double> w;
};

namespace detail {

inline GaussRule make_gauss_legendre(int n) {
  GaussRule r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.x[i] = -x;
    r.x[n - 1 - i] = x;
    r.w[i] = w;
    r.w[n - 1 - i] = w;
  }
  if (n % 2 == 1) r.x[n / 2] = 0.0;
  return r;
}

}  // namespace detail

inline constexpr int kMaxGaussOrder = 64;

/// Gauss-Legendre rule with n points on [-1, 1], 1 <= n <= 64.
inline const GaussRule& gauss_legendre(int n) {
  static const std::vector<GaussRule> rules = [] {
    std::vector<GaussRule> all(kMaxGaussOrder + 1);
    all[1] = GaussRule{{0.0}, {2.0}};
    for (int k = 2; k <= kMaxGaussOrder; ++k) all[k] = detail::make_gauss_legendre(k);
    return all;
  }();
  if (n < 1 || n > kMaxGaussOrder) throw std::invalid_argument("gauss_legendre: unsupported order");
  return rules[n];
}

/// Tensor-product point on the reference square with its weight.
struct RefPoint {
  double s, t, w;
};

/// Gauss product rule on the sub-rectangle [s0,s1] x [t0,t1] of [-1,1]^2.
inline std::vector<RefPoint> gauss_rect(int order, double s0, double s1, double t0, double t1) {
  const auto& g = gauss_legendre(order);
  std::vector<RefPoint> pts;
  pts.reserve(order * order);
  const double hs = 0.5 * (s1 - s0), ht = 0.5 * (t1 - t0);
  for (int i = 0; i < order; ++i)
    for (int j = 0; j < order; ++j)
      pts.push_back({s0 + hs * (g.x[i] + 1.0), t0 + ht * (g.x[j] + 1.0), g.w[i] * g.w[j] * hs * ht});
  return pts;
}

}  // namespace fracsense
