#pragma once

// Closed-form elastodynamic quantities for a homogeneous isotropic full
// space: plane waves, tractions, the Kupradze fundamental solutions and their
// far-field forms. Time dependence e^{-i omega t}; outgoing waves e^{+ikr}.

#include "fracsense/types.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace fracsense {

struct ElasticMedium {
  double rho = 1.0;
  double lambda = 1.0;
  double mu = 1.0;

  static ElasticMedium from_speeds(double rho, double c_p, double c_s) {
    ElasticMedium m;
    m.rho = rho;
    m.mu = rho * c_s * c_s;
    m.lambda = rho * c_p * c_p - 2.0 * m.mu;
    m.validate();
    return m;
  }

  void validate() const {
    if (!(rho > 0.0)) throw std::invalid_argument("ElasticMedium: rho must be positive");
    if (!(mu > 0.0)) throw std::invalid_argument("ElasticMedium: mu must be positive");
    if (!(3.0 * lambda + 2.0 * mu > 0.0))
      throw std::invalid_argument("ElasticMedium: bulk modulus must be positive");
  }

  double p_modulus() const { return lambda + 2.0 * mu; }
  double c_s() const { return std::sqrt(mu / rho); }
  double c_p() const { return std::sqrt(p_modulus() / rho); }
  double k_s(double omega) const { return omega / c_s(); }
  double k_p(double omega) const { return omega / c_p(); }
  double poisson() const { return lambda / (2.0 * (lambda + mu)); }
  /// (k_p / k_s)^2 = mu / (lambda + 2 mu), independent of frequency.
  double speed_ratio_sq() const { return mu / p_modulus(); }
};

struct IncidentPlaneWave {
  Vec3 d = Vec3::UnitZ();
  Vec3 q_p = Vec3::Zero();
  Vec3 q_s = Vec3::Zero();
  double omega = 1.0;

  static IncidentPlaneWave p_wave(const Vec3& d, double omega, double amplitude = 1.0) {
    IncidentPlaneWave w;
    w.d = d.normalized();
    w.q_p = amplitude * w.d;
    w.omega = omega;
    return w;
  }
  static IncidentPlaneWave s_wave(const Vec3& d, const Vec3& polarization, double omega) {
    IncidentPlaneWave w;
    w.d = d.normalized();
    w.q_s = polarization;
    w.omega = omega;
    return w;
  }

  void validate(double tol = 1e-10) const {
    if (std::abs(d.norm() - 1.0) > tol) throw std::invalid_argument("IncidentPlaneWave: |d| != 1");
    if (q_p.cross(d).norm() > tol * std::max(1.0, q_p.norm()))
      throw std::invalid_argument("IncidentPlaneWave: q_p not parallel to d");
    if (std::abs(q_s.dot(d)) > tol * std::max(1.0, q_s.norm()))
      throw std::invalid_argument("IncidentPlaneWave: q_s not perpendicular to d");
  }
};

/// Far-field patterns in one observation direction. up_inf is radial, us_inf
/// transverse; both are full 3-vectors in the global frame.
struct FarFieldSample {
  Vec3 xi_hat = Vec3::UnitZ();
  CVec3 up_inf = CVec3::Zero();
  CVec3 us_inf = CVec3::Zero();
};

struct PlaneWaveValue {
  CVec3 u;
  CMat3 grad;  ///< grad(i, j) = d u_j / d xi_i
};

inline PlaneWaveValue eval_plane_wave(const IncidentPlaneWave& w, const ElasticMedium& med,
                                      const Vec3& xi) {
  const double kp = med.k_p(w.omega), ks = med.k_s(w.omega);
  const double phase = w.d.dot(xi);
  const cd ep = std::exp(kI * (kp * phase));
  const cd es = std::exp(kI * (ks * phase));
  PlaneWaveValue out;
  out.u = to_complex(w.q_p) * ep + to_complex(w.q_s) * es;
  out.grad = (kI * kp * ep) * (w.d * w.q_p.transpose()).cast<cd>() +
             (kI * ks * es) * (w.d * w.q_s.transpose()).cast<cd>();
  return out;
}

/// t = n . C : grad_u for the isotropic tensor C = lambda I2 x I2 + 2 mu I4.
inline CVec3 traction(const CMat3& grad_u, const Vec3& n, const ElasticMedium& med) {
  const CVec3 nc = to_complex(n);
  return med.lambda * grad_u.trace() * nc + med.mu * (grad_u + grad_u.transpose()) * nc;
}

/// Traction of a stress-like gradient W(k, l) = d u_k / d x_l (note the
/// transposed convention relative to PlaneWaveValue::grad).
inline CVec3 traction_kl(const CMat3& w_kl, const Vec3& n, const ElasticMedium& med) {
  return traction(w_kl.transpose(), n, med);
}

namespace detail {

/// Radial profile of the Kupradze tensor: 4 pi mu r U = A I + B rhat rhat.
/// dA = r A'(r) - A and dB = r B'(r) - B are what the gradient needs.
struct KupradzeProfile {
  cd A, B, dA, dB;
};

// h1(x) = (ix - 1) e^{ix} = sum_n (n-1)/n! (ix)^n
// h2(x) = (3 - 3ix - x^2) e^{ix} = sum_n (n-1)(n-3)/n! (ix)^n
// The profile needs [h(x_s) - h(x_p)] / x_s^2, which cancels catastrophically
// for small x_s; below the switch point the power series is summed instead.
inline KupradzeProfile kupradze_profile(double r, double ks, double kp) {
  const double xs = ks * r, xp = kp * r;
  KupradzeProfile p;
  const cd es = std::exp(kI * xs);
  if (xs < 0.5) {
    const double beta = (ks > 0.0) ? kp / ks : 0.0;
    cd s1 = 0.0, s2 = 0.0, t1 = 0.0, t2 = 0.0;
    cd ipow = -1.0;         // i^n, starting at n = 2
    double xpow = 1.0;      // xs^(n-2)
    double bpow = beta * beta;
    double fact = 2.0;      // n!
    for (int n = 2; n < 40; ++n) {
      const double c1 = (n - 1) / fact;
      const double c2 = (n - 1) * (n - 3) / fact;
      const cd base = ipow * (xpow * (1.0 - bpow));
      s1 += c1 * base;
      s2 += c2 * base;
      t1 += (n - 2) * c1 * base;
      t2 += (n - 2) * c2 * base;
      if (std::abs(base) < 1e-22) break;
      ipow *= kI;
      xpow *= xs;
      bpow *= beta;
      fact *= (n + 1);
    }
    p.A = es + s1;
    p.B = s2;
    p.dA = kI * xs * es + t1 - p.A;
    p.dB = t2 - p.B;
  } else {
    const cd ep = std::exp(kI * xp);
    const double xs2 = xs * xs;
    const cd h1 = ((kI * xs - 1.0) * es - (kI * xp - 1.0) * ep) / xs2;
    const cd h2 = ((3.0 - 3.0 * kI * xs - xs * xs) * es - (3.0 - 3.0 * kI * xp - xp * xp) * ep) / xs2;
    const cd xh1 = (-xs * xs * es + xp * xp * ep) / xs2;
    const cd xh2 = ((xs * xs - kI * xs * xs * xs) * es - (xp * xp - kI * xp * xp * xp) * ep) / xs2;
    p.A = es + h1;
    p.B = h2;
    p.dA = kI * xs * es + xh1 - 2.0 * h1 - p.A;
    p.dB = xh2 - 2.0 * h2 - p.B;
  }
  return p;
}

inline KupradzeProfile kelvin_profile(const ElasticMedium& med) {
  const double beta2 = med.speed_ratio_sq();
  KupradzeProfile p;
  p.A = 1.0 - 0.5 * (1.0 - beta2);
  p.B = 0.5 * (1.0 - beta2);
  p.dA = -p.A;
  p.dB = -p.B;
  return p;
}

inline void check_separation(const Vec3& r, double guard_scale) {
  if (!(r.norm() >= 1e-12 * guard_scale))
    throw std::domain_error("fundamental solution evaluated at coincident points");
}

inline CMat3 displacement_from_profile(const KupradzeProfile& p, const Vec3& rv,
                                       const ElasticMedium& med) {
  const double r = rv.norm();
  const Vec3 e = rv / r;
  const cd scale = 1.0 / (4.0 * kPi * med.mu * r);
  CMat3 U = (p.A * scale) * CMat3::Identity() + (p.B * scale) * (e * e.transpose()).cast<cd>();
  return U;
}

inline Tensor3c stress_from_profile(const KupradzeProfile& p, const Vec3& rv,
                                    const ElasticMedium& med) {
  const double r = rv.norm();
  const Vec3 e = rv / r;
  const double scale = 1.0 / (4.0 * kPi * med.mu * r * r);
  // g(m, k, l) = d U_kl / d xi_m
  Tensor3c g;
  for (int m = 0; m < 3; ++m)
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 3; ++l) {
        const double dmk = (m == k), dml = (m == l), dkl = (k == l);
        g(m, k, l) = scale * (p.dA * (e[m] * dkl) + p.dB * (e[m] * e[k] * e[l]) +
                              p.B * (dmk * e[l] + dml * e[k] - 2.0 * e[m] * e[k] * e[l]));
      }
  Tensor3c s;
  for (int l = 0; l < 3; ++l) {
    const cd div = g(0, 0, l) + g(1, 1, l) + g(2, 2, l);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        s(i, j, l) = (i == j ? med.lambda * div : cd(0.0)) + med.mu * (g(i, j, l) + g(j, i, l));
  }
  return s;
}

}  // namespace detail

/// U(i, l) = displacement component i at xi due to a unit point force e_l at x.
inline CMat3 greens_displacement(const Vec3& xi, const Vec3& x, const ElasticMedium& med,
                                 double omega, double guard_scale = 1.0) {
  const Vec3 rv = xi - x;
  detail::check_separation(rv, guard_scale);
  return detail::displacement_from_profile(
      detail::kupradze_profile(rv.norm(), med.k_s(omega), med.k_p(omega)), rv, med);
}

/// Sigma(i, j, l) = stress component ij at xi due to a unit point force e_l at x.
inline Tensor3c greens_stress(const Vec3& xi, const Vec3& x, const ElasticMedium& med,
                              double omega, double guard_scale = 1.0) {
  const Vec3 rv = xi - x;
  detail::check_separation(rv, guard_scale);
  return detail::stress_from_profile(
      detail::kupradze_profile(rv.norm(), med.k_s(omega), med.k_p(omega)), rv, med);
}

/// Both fundamental solutions at once; shares the radial profile.
inline std::pair<CMat3, Tensor3c> greens_pair(const Vec3& xi, const Vec3& x,
                                              const ElasticMedium& med, double omega) {
  const Vec3 rv = xi - x;
  detail::check_separation(rv, 1.0);
  const auto p = detail::kupradze_profile(rv.norm(), med.k_s(omega), med.k_p(omega));
  return {detail::displacement_from_profile(p, rv, med), detail::stress_from_profile(p, rv, med)};
}

/// Static Kelvin stress kernel for the separation vector rv = xi - x.
inline Tensor3c kelvin_stress(const Vec3& rv, const ElasticMedium& med) {
  return detail::stress_from_profile(detail::kelvin_profile(med), rv, med);
}

inline CMat3 kelvin_displacement(const Vec3& rv, const ElasticMedium& med) {
  return detail::displacement_from_profile(detail::kelvin_profile(med), rv, med);
}

struct FarFieldStressKernel {
  Tensor3c p_part;
  Tensor3c s_part;
};

/// Far-field pattern of Sigma(xi, x) as |xi| -> infinity along xi_hat.
inline FarFieldStressKernel farfield_stress_kernel(const Vec3& xi_hat, const Vec3& x,
                                                   const ElasticMedium& med, double omega) {
  const double kp = med.k_p(omega), ks = med.k_s(omega);
  const cd ep = kI * kp * std::exp(-kI * (kp * xi_hat.dot(x)));
  const cd es = kI * ks * med.mu * std::exp(-kI * (ks * xi_hat.dot(x)));
  FarFieldStressKernel out;
  const Vec3& e = xi_hat;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int l = 0; l < 3; ++l) {
        const double dij = (i == j), dil = (i == l), djl = (j == l);
        out.p_part(i, j, l) = ep * ((2.0 * med.mu * e[i] * e[j] + med.lambda * dij) * e[l]);
        out.s_part(i, j, l) = es * (dil * e[j] + djl * e[i] - 2.0 * e[i] * e[j] * e[l]);
      }
  return out;
}

/// Far-field pattern of a vanishing penny-shaped trial crack at z with normal
/// n and unit mode-I opening, per unit crack area.
inline FarFieldSample penny_test_pattern(const Vec3& xi_hat, const Vec3& z, const Vec3& n,
                                         const ElasticMedium& med, double omega) {
  const double kp = med.k_p(omega), ks = med.k_s(omega);
  const double nx = n.dot(xi_hat);
  FarFieldSample s;
  s.xi_hat = xi_hat;
  s.up_inf = (-kI * kp * (med.lambda + 2.0 * med.mu * nx * nx) *
              std::exp(-kI * (kp * xi_hat.dot(z)))) *
             to_complex(xi_hat);
  const Vec3 transverse = xi_hat.cross(n.cross(xi_hat));
  s.us_inf = (-2.0 * kI * med.mu * ks * nx * std::exp(-kI * (ks * xi_hat.dot(z)))) *
             to_complex(transverse);
  return s;
}

}  // namespace fracsense
