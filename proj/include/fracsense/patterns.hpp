#pragma once

// Truth stiffness fields K = diag(k_n, k_s, k_s) over the cylindrical
// fracture patch, defined in its local (arc, width) coordinates.

#include "fracsense/forward.hpp"

#include <algorithm>
#include <random>
#include <string>
#include <vector>

namespace fracsense {

/// (arc, width) coordinates of x relative to the patch of build_cylindrical_patch.
inline Vec2 cylinder_coords(const Vec3& x, double radius) {
  return {radius * std::atan2(x[0], x[2]), x[1]};
}

struct PatternParams {
  std::string name = "uniform";   ///< uniform | zebra | cheetah
  cd kn_a{30.0, -6.0}, ks_a{24.0, -5.0};   ///< background / first stripe
  cd kn_b{20.0, -4.0}, ks_b{16.0, -3.0};   ///< second stripe / spot centre
  int stripes = 2;
  int spots = 4;
  double spot_radius = 0.08;
  std::uint64_t spot_seed = 3;
  double width = 0.7, arclength = 0.55, radius = 0.35;
};

struct Spot {
  Vec2 center;
  double radius;
};

/// Spot centres drawn uniformly inside the patch, kept one radius from its edges.
inline std::vector<Spot> cheetah_spots(const PatternParams& p) {
  std::mt19937_64 rng(p.spot_seed);
  const double ha = 0.5 * p.arclength - p.spot_radius, hw = 0.5 * p.width - p.spot_radius;
  if (!(ha > 0 && hw > 0)) throw std::invalid_argument("cheetah pattern: spot radius too large for the patch");
  std::uniform_real_distribution<double> ua(-ha, ha), uw(-hw, hw);
  std::vector<Spot> s;
  for (int i = 0; i < p.spots; ++i) {
    const double a = ua(rng), w = uw(rng);
    s.push_back({Vec2(a, w), p.spot_radius});
  }
  return s;
}

/// Stripe index 0..stripes-1 of a width coordinate.
inline int zebra_stripe(double w, double width, int stripes) {
  const int i = static_cast<int>(std::floor((w / width + 0.5) * stripes));
  return std::clamp(i, 0, stripes - 1);
}

inline StiffnessField make_stiffness_pattern(const PatternParams& p) {
  for (cd v : {p.kn_a, p.ks_a, p.kn_b, p.ks_b})
    if (v.imag() > 0.0) throw std::invalid_argument("stiffness pattern: Im(kappa) must be non-positive");
  if (p.name == "uniform") return StiffnessField::diagonal(p.kn_a, p.ks_a, p.ks_a);
  if (p.name == "zebra") {
    if (p.stripes <= 0) throw std::invalid_argument("zebra pattern: stripe count must be positive");
    const int n = p.stripes;
    const double width = p.width, radius = p.radius;
    auto pick = [=](cd a, cd b) {
      return [=](const Vec3& x) { return zebra_stripe(cylinder_coords(x, radius)[1], width, n) % 2 ? b : a; };
    };
    return StiffnessField::normal_shear(pick(p.kn_a, p.kn_b), pick(p.ks_a, p.ks_b));
  }
  if (p.name == "cheetah") {
    if (p.spots <= 0) throw std::invalid_argument("cheetah pattern: spot count must be positive");
    const auto spots = cheetah_spots(p);
    const double radius = p.radius;
    // bump weight in [0, 1]: Gaussian spots merged by max
    auto weight = [=](const Vec3& x) {
      const Vec2 c = cylinder_coords(x, radius);
      double w = 0.0;
      for (const auto& s : spots) w = std::max(w, std::exp(-0.5 * (c - s.center).squaredNorm() / (s.radius * s.radius)));
      return w;
    };
    auto blend = [=](cd a, cd b) { return [=](const Vec3& x) { return a + weight(x) * (b - a); }; };
    return StiffnessField::normal_shear(blend(p.kn_a, p.kn_b), blend(p.ks_a, p.ks_b));
  }
  throw std::invalid_argument("unknown stiffness pattern '" + p.name + "'");
}

}  // namespace fracsense
