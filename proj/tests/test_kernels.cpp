#include "fracsense/kernels.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace fracsense;

namespace {

const ElasticMedium kMed = ElasticMedium::from_speeds(1.0, 2.08, 1.0);
constexpr double kOmega = 16.32;

double rel(const CMat3& a, const CMat3& b) { return (a - b).norm() / b.norm(); }

double rel(const Tensor3c& a, const Tensor3c& b) {
  double num = 0.0, den = 0.0;
  for (int k = 0; k < 27; ++k) {
    num += std::norm(a.v[k] - b.v[k]);
    den += std::norm(b.v[k]);
  }
  return std::sqrt(num / den);
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  return Vec3(g(rng), g(rng), g(rng)).normalized();
}

}  // namespace

TEST(Medium, FromSpeeds) {
  EXPECT_NEAR(kMed.c_s(), 1.0, 1e-14);
  EXPECT_NEAR(kMed.c_p(), 2.08, 1e-14);
  EXPECT_THROW(ElasticMedium::from_speeds(1.0, 1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(ElasticMedium::from_speeds(-1.0, 2.0, 1.0), std::invalid_argument);
}

TEST(PlaneWave, ValidateRejectsBadPolarization) {
  EXPECT_NO_THROW(IncidentPlaneWave::p_wave(Vec3(1, 1, 0), 1.0).validate());
  EXPECT_THROW(IncidentPlaneWave::s_wave(Vec3::UnitZ(), Vec3::UnitZ(), 1.0).validate(),
               std::invalid_argument);
}

TEST(PlaneWave, GradientMatchesFiniteDifference) {
  auto w = IncidentPlaneWave::s_wave(Vec3(0.3, -0.2, 0.9).normalized(), Vec3::Zero(), kOmega);
  w.q_s = Vec3::UnitX() - Vec3::UnitX().dot(w.d) * w.d;
  w.q_p = 0.7 * w.d;
  const Vec3 xi(0.1, 0.2, -0.3);
  const auto v = eval_plane_wave(w, kMed, xi);
  const double h = 1e-6;
  for (int i = 0; i < 3; ++i) {
    const Vec3 dh = h * Vec3::Unit(i);
    const CVec3 fd = (eval_plane_wave(w, kMed, xi + dh).u - eval_plane_wave(w, kMed, xi - dh).u) / (2 * h);
    EXPECT_LT((fd - v.grad.row(i).transpose()).norm(), 1e-6 * v.grad.norm());
  }
}

TEST(Kupradze, SeriesAndClosedFormAgreeAtSwitch) {
  const double ks = kMed.k_s(kOmega), kp = kMed.k_p(kOmega);
  const double r0 = 0.5 / ks;
  const auto a = detail::kupradze_profile(r0 * (1 - 1e-9), ks, kp);
  const auto b = detail::kupradze_profile(r0 * (1 + 1e-9), ks, kp);
  EXPECT_LT(std::abs(a.A - b.A), 1e-8);
  EXPECT_LT(std::abs(a.B - b.B), 1e-8);
  EXPECT_LT(std::abs(a.dA - b.dA), 1e-8);
  EXPECT_LT(std::abs(a.dB - b.dB), 1e-8);
}

TEST(Kupradze, DisplacementReciprocityAndSymmetry) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 xi = 0.5 * random_unit(rng), x = 0.3 * random_unit(rng);
    const CMat3 U = greens_displacement(xi, x, kMed, kOmega);
    EXPECT_LT(rel(greens_displacement(x, xi, kMed, kOmega).transpose(), U), 1e-12);
    EXPECT_LT(rel(U.transpose(), U), 1e-12);
  }
}

TEST(Kupradze, StressIsSymmetricAndOdd) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 xi = 0.5 * random_unit(rng), x = 0.3 * random_unit(rng);
    const Tensor3c S = greens_stress(xi, x, kMed, kOmega);
    const Tensor3c R = greens_stress(x, xi, kMed, kOmega);
    Tensor3c St, Rn;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int l = 0; l < 3; ++l) {
          St(i, j, l) = S(j, i, l);
          Rn(i, j, l) = -R(i, j, l);
        }
    EXPECT_LT(rel(St, S), 1e-12);
    EXPECT_LT(rel(Rn, S), 1e-12);
  }
}

TEST(Kupradze, StaticKelvinLimit) {
  const Vec3 xi(0.2, -0.1, 0.4), x(-0.1, 0.3, 0.0);
  const double omega = 1e-5;
  const Vec3 rv = xi - x;
  const CMat3 Ud = greens_displacement(xi, x, kMed, omega);
  EXPECT_LT(rel(Ud, kelvin_displacement(rv, kMed)), 1e-4);
  EXPECT_LT(rel(greens_stress(xi, x, kMed, omega), kelvin_stress(rv, kMed)), 1e-4);
  // Kelvin closed form: (1/(16 pi mu (1-nu) r)) [(3 - 4 nu) I + rhat rhat].
  const double nu = kMed.poisson(), r = rv.norm();
  const Vec3 e = rv / r;
  const Mat3 K = ((3 - 4 * nu) * Mat3::Identity() + e * e.transpose()) / (16 * kPi * kMed.mu * (1 - nu) * r);
  EXPECT_LT(rel(kelvin_displacement(rv, kMed), K.cast<cd>()), 1e-12);
}

TEST(Kupradze, StressMatchesDisplacementGradient) {
  const Vec3 xi(0.3, 0.1, -0.2), x(-0.05, 0.02, 0.1);
  const Tensor3c S = greens_stress(xi, x, kMed, kOmega);
  const double h = 1e-6;
  CMat3 g[3];  // g[m](k, l) = dU_kl / dxi_m
  for (int m = 0; m < 3; ++m) {
    const Vec3 dh = h * Vec3::Unit(m);
    g[m] = (greens_displacement(xi + dh, x, kMed, kOmega) - greens_displacement(xi - dh, x, kMed, kOmega)) / (2 * h);
  }
  Tensor3c fd;
  for (int l = 0; l < 3; ++l) {
    const cd div = g[0](0, l) + g[1](1, l) + g[2](2, l);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        fd(i, j, l) = (i == j ? kMed.lambda * div : cd(0)) + kMed.mu * (g[i](j, l) + g[j](i, l));
  }
  EXPECT_LT(rel(fd, S), 1e-7);
}

TEST(Kupradze, EquationOfMotionAwayFromSource) {
  // div Sigma + rho omega^2 U = 0 for xi != x.
  const Vec3 xi(0.25, -0.15, 0.1), x(0.0, 0.05, -0.02);
  const double h = 1e-5;
  const CMat3 U = greens_displacement(xi, x, kMed, kOmega);
  CMat3 div = CMat3::Zero();  // div(i, l) = d Sigma_ij^l / d xi_j
  for (int j = 0; j < 3; ++j) {
    const Vec3 dh = h * Vec3::Unit(j);
    const Tensor3c a = greens_stress(xi + dh, x, kMed, kOmega), b = greens_stress(xi - dh, x, kMed, kOmega);
    for (int i = 0; i < 3; ++i)
      for (int l = 0; l < 3; ++l) div(i, l) += (a(i, j, l) - b(i, j, l)) / (2 * h);
  }
  const CMat3 res = div + kMed.rho * kOmega * kOmega * U;
  EXPECT_LT(res.norm(), 1e-5 * div.norm());
}

TEST(Kupradze, CoincidentPointsRejected) {
  EXPECT_THROW(greens_stress(Vec3::Zero(), Vec3::Zero(), kMed, kOmega), std::domain_error);
  EXPECT_THROW(greens_displacement(Vec3::Ones(), Vec3::Ones(), kMed, kOmega), std::domain_error);
}

TEST(FarField, StressKernelMatchesLargeDistanceGreen) {
  const double lambda_s = 2 * kPi / kMed.k_s(kOmega);
  const double r = 1e3 * lambda_s;
  const Vec3 x(0.05, -0.1, 0.08);
  std::mt19937_64 rng(3);
  const double kp = kMed.k_p(kOmega), ks = kMed.k_s(kOmega);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec3 e = random_unit(rng);
    const Tensor3c S = greens_stress(r * e, x, kMed, kOmega);
    const auto ff = farfield_stress_kernel(e, x, kMed, kOmega);
    Tensor3c approx;
    const cd cp = std::exp(kI * kp * r) / (4 * kPi * kMed.p_modulus() * r);
    const cd cs = std::exp(kI * ks * r) / (4 * kPi * kMed.mu * r);
    for (int k = 0; k < 27; ++k) approx.v[k] = cp * ff.p_part.v[k] + cs * ff.s_part.v[k];
    EXPECT_LT(rel(approx, S), 1e-2);
  }
}

TEST(FarField, PennyPatternIsNormalOpeningContraction) {
  const Vec3 z(0.1, 0.2, -0.3), n = Vec3(1, 2, 2).normalized();
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec3 e = random_unit(rng);
    const auto ff = farfield_stress_kernel(e, z, kMed, kOmega);
    CVec3 up = CVec3::Zero(), us = CVec3::Zero();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int l = 0; l < 3; ++l) {
          up[l] -= ff.p_part(i, j, l) * (n[i] * n[j]);
          us[l] -= ff.s_part(i, j, l) * (n[i] * n[j]);
        }
    const auto pat = penny_test_pattern(e, z, n, kMed, kOmega);
    EXPECT_LT((pat.up_inf - up).norm(), 1e-12 * up.norm());
    EXPECT_LT((pat.us_inf - us).norm(), 1e-12 * (us.norm() + up.norm()));
    EXPECT_LT(std::abs(pat.us_inf.dot(to_complex(e))), 1e-12 * up.norm());
  }
}

TEST(Traction, HandComputedExample) {
  ElasticMedium m;
  m.lambda = 2.0;
  m.mu = 3.0;
  CMat3 g = CMat3::Zero();
  g(0, 0) = 1.0;  // du_x/dx = 1
  g(0, 1) = 2.0;  // du_y/dx = 2
  const CVec3 t = traction(g, Vec3::UnitX(), m);
  // sigma_xx = lambda + 2 mu = 8, sigma_xy = mu * 2 = 6
  EXPECT_NEAR(std::abs(t[0] - 8.0), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(t[1] - 6.0), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(t[2]), 0.0, 1e-14);
}
