#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <stdexcept>
#include <string>

namespace fracsense {

using cd = std::complex<double>;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using CVec3 = Eigen::Vector3cd;
using Mat3 = Eigen::Matrix3d;
using CMat3 = Eigen::Matrix3cd;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr cd kI{0.0, 1.0};

/// Dense complex third-order tensor on R^3, row-major in (i, j, l).
///
/// Green's stress tensors use the layout T(i, j, l) = Sigma_ij^l: the first
/// two indices are the stress components, the last is the point-force
/// direction.
struct Tensor3c {
  std::array<cd, 27> v{};

  cd& operator()(int i, int j, int l) { return v[9 * i + 3 * j + l]; }
  const cd& operator()(int i, int j, int l) const { return v[9 * i + 3 * j + l]; }

  Tensor3c& operator+=(const Tensor3c& o) {
    for (int k = 0; k < 27; ++k) v[k] += o.v[k];
    return *this;
  }
  Tensor3c& operator*=(cd s) {
    for (auto& x : v) x *= s;
    return *this;
  }
  double norm() const {
    double s = 0.0;
    for (const auto& x : v) s += std::norm(x);
    return std::sqrt(s);
  }
};

/// Failure inside a pipeline stage. The stage tag ends up in CLI diagnostics.
class Error : public std::runtime_error {
 public:
  Error(std::string stage, const std::string& what)
      : std::runtime_error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Linear solve that could not be completed; carries a condition estimate.
class SolverError : public Error {
 public:
  SolverError(std::string stage, const std::string& what, double condition)
      : Error(std::move(stage), what + " (condition estimate " + std::to_string(condition) + ")"),
        condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

inline CVec3 to_complex(const Vec3& v) { return v.cast<cd>(); }

}  // namespace fracsense
