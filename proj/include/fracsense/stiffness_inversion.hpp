#pragma once

// Specific-stiffness inversion from the contact law K [[u]] = T[[u]] + t_inc
// evaluated at collocation points, with spectral truncation of T and
// flagging of points where the FOD nearly vanishes.

#include "fracsense/forward.hpp"
#include "fracsense/regularization.hpp"

#include <Eigen/SVD>

#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

namespace fracsense {

inline constexpr double kDefaultDeltaTrunc = 1e-3;
inline constexpr double kReliabilityFlag = 0.05;

struct TruncatedAction {
  int N = 0;
  CVector action;           ///< U_N U_N* T [[u]]
  bool full_rank = false;   ///< bound not met even with every mode
};

/// N is the smallest number of leading right singular vectors of T whose
/// span reproduces the FOD within delta_trunc * |FOD| (free-node norm).
inline TruncatedAction truncate_T(const TractionSystem& sys, const FractureMesh& mesh, const FodVector& fod,
                                  double delta_trunc) {
  if (!(delta_trunc > 0.0)) throw std::invalid_argument("truncate_T: delta_trunc must be positive");
  const auto& svd = sys.svd();
  const CVector x = fod.free_part(mesh);
  const CVector c = svd.matrixV().adjoint() * x;
  const double bound2 = std::pow(delta_trunc * x.norm(), 2);
  TruncatedAction out;
  double rem2 = x.squaredNorm();
  const int r = static_cast<int>(c.size());
  while (out.N < r && !(rem2 < bound2)) {
    rem2 -= std::norm(c[out.N]);
    ++out.N;
  }
  // rem2 accumulates rounding; confirm the bound directly
  if (out.N == r && !(rem2 < bound2)) {
    const CVector res = x - svd.matrixV() * c;
    out.full_rank = !(res.squaredNorm() < bound2);
  }
  const auto U = svd.matrixU().leftCols(out.N);
  out.action = U * (U.adjoint() * (sys.T * x));
  return out;
}

enum class StiffnessMode { Diagonal, Full };

inline StiffnessMode parse_mode(const std::string& s) {
  if (s == "diagonal") return StiffnessMode::Diagonal;
  if (s == "full") return StiffnessMode::Full;
  throw std::invalid_argument("unknown stiffness mode '" + s + "'");
}

inline std::string to_string(StiffnessMode m) { return m == StiffnessMode::Diagonal ? "diagonal" : "full"; }

/// Symmetric 3x3 local matrix from (k11, k22, k33, k12, k13, k23).
inline CMat3 sym_from6(const Eigen::Matrix<cd, 6, 1>& k) {
  CMat3 m;
  m << k[0], k[3], k[4], k[3], k[1], k[5], k[4], k[5], k[2];
  return m;
}

/// Contact-law system over m illuminations stacked column-wise.
struct StiffnessSystem {
  StiffnessMode mode = StiffnessMode::Diagonal;
  CollocationSet colloc;
  CMatrix a;         ///< diagonal mode: local-frame FOD at collocation points, 3 N_col x m
  CMatrix B;         ///< full mode: (3 N_col m) x 6 N_nds
  CMatrix rhs;       ///< local-frame T_N [[u]] + t_inc, 3 N_col x m
  int num_nodes = 0;
  std::vector<Vec3> node_positions;

  int num_fields() const { return static_cast<int>(rhs.cols()); }
};

inline CVector to_local(const CollocationSet& colloc, const CVector& global) {
  if (global.size() != 3 * colloc.size()) throw std::invalid_argument("to_local: size mismatch");
  CVector out(global.size());
  for (int i = 0; i < colloc.size(); ++i) {
    const auto& p = colloc.points[i];
    const CVec3 g = global.segment<3>(3 * i);
    out[3 * i] = to_complex(p.n).dot(g);
    out[3 * i + 1] = to_complex(p.e1).dot(g);
    out[3 * i + 2] = to_complex(p.e2).dot(g);
  }
  return out;
}

/// Assembles the contact-law system. Columns of `fod_colloc` and `rhs` are
/// global-frame vectors at the collocation points (3 per point), one per
/// illumination.
inline StiffnessSystem build_system(StiffnessMode mode, const FractureMesh& mesh, const CollocationSet& colloc,
                                    const CMatrix& fod_colloc, const CMatrix& rhs) {
  if (fod_colloc.rows() != 3 * colloc.size() || rhs.rows() != 3 * colloc.size())
    throw std::invalid_argument("build_system: vectors must have 3 entries per collocation point");
  if (fod_colloc.cols() != rhs.cols() || rhs.cols() < 1)
    throw std::invalid_argument("build_system: FOD and right-hand side field counts differ");
  StiffnessSystem s;
  s.mode = mode;
  s.colloc = colloc;
  s.num_nodes = mesh.num_nodes();
  s.node_positions = mesh.nodes();
  const int m = static_cast<int>(rhs.cols());
  s.rhs.resize(rhs.rows(), m);
  CMatrix loc(rhs.rows(), m);
  for (int j = 0; j < m; ++j) {
    s.rhs.col(j) = to_local(colloc, rhs.col(j));
    loc.col(j) = to_local(colloc, fod_colloc.col(j));
  }
  if (mode == StiffnessMode::Diagonal) {
    s.a = loc;
    return s;
  }
  if (colloc.size() < 2 * mesh.num_nodes())
    throw std::invalid_argument("build_system: full mode needs at least 2 collocation points per node (" +
                                std::to_string(colloc.size()) + " < " + std::to_string(2 * mesh.num_nodes()) + ")");
  const int rows = 3 * colloc.size();
  s.B = CMatrix::Zero(rows * m, 6 * mesh.num_nodes());
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < colloc.size(); ++i) {
      const auto& p = colloc.points[i];
      const auto N = shape_values(p.s, p.t);
      const CVec3 f = loc.col(j).segment<3>(3 * i);
      const int r0 = rows * j + 3 * i;
      for (int a = 0; a < 4; ++a) {
        const int c0 = 6 * mesh.element(p.element).nodes[a];
        // rows of K f with K = sym_from6(k)
        s.B(r0, c0 + 0) += N[a] * f[0];
        s.B(r0, c0 + 3) += N[a] * f[1];
        s.B(r0, c0 + 4) += N[a] * f[2];
        s.B(r0 + 1, c0 + 3) += N[a] * f[0];
        s.B(r0 + 1, c0 + 1) += N[a] * f[1];
        s.B(r0 + 1, c0 + 5) += N[a] * f[2];
        s.B(r0 + 2, c0 + 4) += N[a] * f[0];
        s.B(r0 + 2, c0 + 5) += N[a] * f[1];
        s.B(r0 + 2, c0 + 2) += N[a] * f[2];
      }
    }
  return s;
}

inline StiffnessSystem build_system(StiffnessMode mode, const FractureMesh& mesh, const CollocationSet& colloc,
                                    const CVector& fod_colloc, const CVector& rhs) {
  return build_system(mode, mesh, colloc, CMatrix(fod_colloc), CMatrix(rhs));
}

struct RecoveredStiffness {
  StiffnessMode mode = StiffnessMode::Diagonal;
  std::vector<Vec3> points;                       ///< collocation points (diagonal) or nodes (full)
  std::vector<CVec3> kappa;                       ///< diagonal mode: (k_n, k_s1, k_s2)
  std::vector<Eigen::Matrix<cd, 6, 1>> K6;        ///< full mode: (k11, k22, k33, k12, k13, k23)
  std::vector<double> reliability;
  std::vector<bool> flagged;
  double beta = 0.0;
  double discrepancy = 0.0;
  bool fallback = false;

  int size() const { return static_cast<int>(points.size()); }
  int num_reliable(double threshold = kReliabilityFlag) const {
    int n = 0;
    for (double r : reliability) n += r >= threshold;
    return n;
  }
  /// Fraction of points at or above `threshold` with Im(kappa) > tol * |kappa|.
  double active_fraction(double threshold = kReliabilityFlag, double tol = 1e-3) const {
    int n = 0, bad = 0;
    for (int i = 0; i < size(); ++i) {
      if (reliability[i] < threshold) continue;
      ++n;
      bool active = false;
      if (mode == StiffnessMode::Diagonal) {
        for (int c = 0; c < 3; ++c) active |= kappa[i][c].imag() > tol * std::abs(kappa[i][c]);
      } else {
        for (int c = 0; c < 3; ++c) active |= K6[i][c].imag() > tol * std::abs(K6[i][c]);
      }
      bad += active;
    }
    return n ? double(bad) / n : 0.0;
  }
};

/// Tikhonov solution with the penalty set by |A k - r| = noise_delta |r|
/// (least squares when the stacked fields cannot be fitted that closely).
/// Diagonal-mode reliability of a point is the smallest of its three local
/// FOD component magnitudes (root-sum-square over fields) relative to that
/// component's maximum over the mesh; full-mode reliability is the norm of
/// a node's columns of B relative to the largest.
inline RecoveredStiffness solve_stiffness(const StiffnessSystem& sys, double noise_delta) {
  if (!(noise_delta > 0.0)) throw std::invalid_argument("solve_stiffness: noise_delta must be positive");
  RecoveredStiffness out;
  out.mode = sys.mode;
  const double rn = sys.rhs.norm();
  if (sys.mode == StiffnessMode::Diagonal) {
    const int n = sys.colloc.size();
    if (sys.a.rows() != 3 * n || sys.a.cols() != sys.rhs.cols())
      throw std::invalid_argument("solve_stiffness: inconsistent system shape");
    const Eigen::VectorXd a2 = sys.a.cwiseAbs2().rowwise().sum();
    if (!(a2.maxCoeff() > 0.0)) throw Error("stiffness", "FOD vanishes everywhere; add incident fields");
    const CVector ar = sys.a.conjugate().cwiseProduct(sys.rhs).rowwise().sum();
    auto kappa = [&](int i, double beta) {
      const double den = a2[i] + beta;
      return den > 0 ? ar[i] / den : cd(0.0);
    };
    auto residual = [&](double beta) {
      double r2 = 0.0;
      for (int i = 0; i < a2.size(); ++i) r2 += (sys.rhs.row(i) - kappa(i, beta) * sys.a.row(i)).squaredNorm();
      return std::sqrt(r2);
    };
    out.beta = morozov_beta(residual, noise_delta * rn, a2.maxCoeff(), out.fallback);
    out.discrepancy = rn > 0 ? residual(out.beta) / rn : 0.0;
    Eigen::Vector3d amax = Eigen::Vector3d::Zero();
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c) amax[c] = std::max(amax[c], std::sqrt(a2[3 * i + c]));
    for (int i = 0; i < n; ++i) {
      CVec3 k;
      double rel = 1.0;
      for (int c = 0; c < 3; ++c) {
        k[c] = kappa(3 * i + c, out.beta);
        rel = std::min(rel, amax[c] > 0 ? std::sqrt(a2[3 * i + c]) / amax[c] : 0.0);
      }
      out.points.push_back(sys.colloc.points[i].x);
      out.kappa.push_back(k);
      out.reliability.push_back(rel);
    }
  } else {
    const CVector r = sys.rhs.reshaped();
    if (sys.B.rows() != r.size()) throw std::invalid_argument("solve_stiffness: inconsistent system shape");
    Eigen::BDCSVD<CMatrix> svd(sys.B, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd s = svd.singularValues();
    if (!(s.size() > 0 && s[0] > 0.0)) throw Error("stiffness", "FOD vanishes everywhere; add incident fields");
    const CVector c = svd.matrixU().adjoint() * r;
    const double perp2 = std::max(0.0, r.squaredNorm() - c.squaredNorm());
    auto residual = [&](double beta) {
      double r2 = perp2;
      for (int i = 0; i < c.size(); ++i) r2 += std::norm(beta / (s[i] * s[i] + beta) * c[i]);
      return std::sqrt(r2);
    };
    out.beta = morozov_beta(residual, noise_delta * rn, s[0] * s[0], out.fallback);
    out.discrepancy = rn > 0 ? residual(out.beta) / rn : 0.0;
    CVector y(c.size());
    for (int i = 0; i < c.size(); ++i) y[i] = s[i] > 0 ? s[i] / (s[i] * s[i] + out.beta) * c[i] : 0.0;
    const CVector k = svd.matrixV() * y;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(sys.num_nodes);
    for (int j = 0; j < sys.num_nodes; ++j) w[j] = sys.B.middleCols(6 * j, 6).norm();
    const double wmax = w.maxCoeff();
    for (int j = 0; j < sys.num_nodes; ++j) {
      out.points.push_back(sys.node_positions[j]);
      out.K6.push_back(k.segment<6>(6 * j));
      out.reliability.push_back(wmax > 0 ? w[j] / wmax : 0.0);
    }
  }
  for (double r : out.reliability) out.flagged.push_back(r < kReliabilityFlag);
  if (out.num_reliable() == 0) throw Error("stiffness", "no reliable points; add incident fields");
  return out;
}

// ---------------------------------------------------------------------------
// Stiffness files
//
//   stiffness diagonal <n>
//   <i> x y z Re(k_n) Im(k_n) Re(k_s1) Im(k_s1) Re(k_s2) Im(k_s2) reliability
//
//   stiffness full <n>
//   <i> x y z Re(k11) Im(k11) Re(k22) Im(k22) Re(k33) Im(k33) Re(k12) Im(k12) Re(k13) Im(k13) Re(k23) Im(k23) reliability
//
// Node positions are written for full mode.

inline void write_stiffness(std::ostream& os, const RecoveredStiffness& r) {
  os << std::setprecision(17) << "stiffness " << to_string(r.mode) << ' ' << r.size() << '\n';
  for (int i = 0; i < r.size(); ++i) {
    os << i << ' ' << r.points[i][0] << ' ' << r.points[i][1] << ' ' << r.points[i][2];
    if (r.mode == StiffnessMode::Diagonal)
      for (int c = 0; c < 3; ++c) os << ' ' << r.kappa[i][c].real() << ' ' << r.kappa[i][c].imag();
    else
      for (int c = 0; c < 6; ++c) os << ' ' << r.K6[i][c].real() << ' ' << r.K6[i][c].imag();
    os << ' ' << r.reliability[i] << '\n';
  }
}

inline RecoveredStiffness read_stiffness(std::istream& is) {
  std::string tag, mode;
  int n = -1;
  is >> tag >> mode >> n;
  if (!is || tag != "stiffness" || n < 0) throw std::invalid_argument("stiffness file: malformed header");
  RecoveredStiffness r;
  r.mode = parse_mode(mode);
  const int nc = r.mode == StiffnessMode::Diagonal ? 3 : 6;
  std::string line;
  std::getline(is, line);
  for (int i = 0; i < n; ++i) {
    if (!std::getline(is, line)) throw std::invalid_argument("stiffness file: truncated");
    std::istringstream ls(line);
    int idx;
    Vec3 x;
    ls >> idx >> x[0] >> x[1] >> x[2];
    Eigen::Matrix<cd, 6, 1> k = Eigen::Matrix<cd, 6, 1>::Zero();
    for (int c = 0; c < nc; ++c) {
      double re, im;
      ls >> re >> im;
      k[c] = cd(re, im);
    }
    double rel;
    ls >> rel;
    if (!ls || idx != i) throw std::invalid_argument("stiffness file: bad line " + std::to_string(i));
    r.points.push_back(x);
    if (r.mode == StiffnessMode::Diagonal)
      r.kappa.push_back(k.head<3>());
    else
      r.K6.push_back(k);
    r.reliability.push_back(rel);
    r.flagged.push_back(rel < kReliabilityFlag);
  }
  return r;
}

inline void save_stiffness(const std::string& path, const RecoveredStiffness& r) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_stiffness(os, r);
}

inline RecoveredStiffness load_stiffness(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_stiffness(is);
}

}  // namespace fracsense
