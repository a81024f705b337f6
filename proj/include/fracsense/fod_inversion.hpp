#pragma once

// FOD recovery on a (reconstructed) fracture surface: the double-layer
// far-field map M, its SVD, Tikhonov regularization with the Morozov
// discrepancy principle, and synthetic recombination of incident fields
// that removes the data components carried by the weakest singular modes.

#include "fracsense/forward.hpp"
#include "fracsense/observation.hpp"
#include "fracsense/regularization.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

namespace fracsense {

inline constexpr double kDefaultQFraction = 0.15;

struct FodSystem {
  CMatrix M;                ///< 3 N_obs x 3 N_free
  CMatrix U, V;             ///< thin SVD factors
  Eigen::VectorXd sigma;    ///< nonincreasing singular values
  int Q = 0;                ///< number of suppressed singular values
  double q_fraction = kDefaultQFraction;

  int cols() const { return static_cast<int>(M.cols()); }
  /// Right singular vectors of the Q smallest singular values.
  auto suppressed_V() const { return V.rightCols(Q); }
  auto suppressed_U() const { return U.rightCols(Q); }

  /// Fraction of |x|^2 carried by the suppressed right singular subspace.
  double suppressed_fraction(const CVector& x) const {
    const double n2 = x.squaredNorm();
    return n2 > 0 ? (suppressed_V().adjoint() * x).squaredNorm() / n2 : 0.0;
  }
};

inline int q_rule(const Eigen::VectorXd& sigma, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("q_rule: fraction must lie in (0, 1)");
  int q = 0;
  for (int i = 0; i < sigma.size(); ++i)
    if (sigma[i] <= fraction * sigma[0]) ++q;
  return q;
}

inline FodSystem assemble_M(const FractureMesh& gamma, const ObservationGrid& grid,
                            const ElasticMedium& med, double omega,
                            double q_fraction = kDefaultQFraction) {
  if (3 * gamma.num_free() >= 3 * grid.size())
    throw Error("fod", "underdetermined FOD system: " + std::to_string(gamma.num_free()) +
                           " free nodes vs " + std::to_string(grid.size()) + " observation directions");
  const CMatrix C = farfield_matrix(gamma, grid.directions(), med, omega);
  const auto es = intrinsic_energy_scale(med, omega);
  FodSystem sys;
  sys.q_fraction = q_fraction;
  sys.M.resize(3 * grid.size(), 3 * gamma.num_free());
  for (int k = 0; k < grid.size(); ++k) {
    const auto f = grid.frame(k);
    const double sw = std::sqrt(grid.weight(k));
    for (int fi = 0; fi < gamma.num_free(); ++fi) {
      const int node = gamma.free_nodes()[fi];
      for (int c = 0; c < 3; ++c) {
        const CVec3 up = C.block<3, 1>(6 * k, 3 * node + c), us = C.block<3, 1>(6 * k + 3, 3 * node + c);
        sys.M(3 * k, 3 * fi + c) = sw * es[0] * to_complex(f[0]).dot(up);
        sys.M(3 * k + 1, 3 * fi + c) = sw * es[1] * to_complex(f[1]).dot(us);
        sys.M(3 * k + 2, 3 * fi + c) = sw * es[2] * to_complex(f[2]).dot(us);
      }
    }
  }
  Eigen::BDCSVD<CMatrix> svd(sys.M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  sys.U = svd.matrixU();
  sys.V = svd.matrixV();
  sys.sigma = svd.singularValues();
  sys.Q = q_rule(sys.sigma, q_fraction);
  return sys;
}

struct FodRecovery {
  FodVector fod;
  double beta = 0.0;         ///< Tikhonov penalty on |x|^2
  double discrepancy = 0.0;  ///< |M x - d| / |d|
  bool fallback = false;     ///< discrepancy unattainable: least-norm least squares
};

/// Tikhonov solution whose penalty solves |M x - d| = noise_delta |d|.
inline FodRecovery recover_fod(const FractureMesh& gamma, const FodSystem& sys, const CVector& data,
                               double noise_delta) {
  if (!(noise_delta > 0.0)) throw std::invalid_argument("recover_fod: noise_delta must be positive");
  if (data.size() != sys.M.rows()) throw Error("fod", "data length does not match the FOD system");
  FodRecovery out;
  const double dn = data.norm();
  if (dn == 0.0) {
    out.fod = FodVector(gamma.num_nodes());
    return out;
  }
  const CVector c = sys.U.adjoint() * data;
  const double perp2 = std::max(0.0, data.squaredNorm() - c.squaredNorm());
  const Eigen::VectorXd s2 = sys.sigma.cwiseAbs2();
  auto residual = [&](double beta) {
    double r2 = perp2;
    for (int i = 0; i < c.size(); ++i) r2 += std::norm(beta / (s2[i] + beta) * c[i]);
    return std::sqrt(r2) / dn;
  };
  auto solution = [&](double beta) {
    CVector y(c.size());
    for (int i = 0; i < c.size(); ++i) y[i] = sys.sigma[i] > 0 ? sys.sigma[i] / (s2[i] + beta) * c[i] : 0.0;
    return CVector(sys.V * y);
  };
  out.beta = morozov_beta(residual, noise_delta, s2[0], out.fallback);
  out.discrepancy = residual(out.beta);
  out.fod = FodVector::from_free(gamma, solution(out.beta));
  return out;
}

struct Recombination {
  CVector g;                   ///< weights over all P datasets (zero outside the subset)
  CVector combined;            ///< sum_p g_p d_p
  std::vector<int> used;       ///< datasets entering the solve
  double projection = 0.0;     ///< |U_Q* combined| / |combined|
  double noise_gain = 1.0;     ///< (sum |g_p|^2 |d_p|^2)^{1/2} / |combined|

  /// Expected relative noise of the combined data when every dataset
  /// carries independent noise of relative level `level`.
  double noise_level(double level) const { return level * noise_gain; }
};

namespace detail {

inline double noise_gain(const CVector& g, const std::vector<CVector>& datasets, const CVector& combined) {
  double s = 0.0;
  for (std::size_t p = 0; p < datasets.size(); ++p) s += std::norm(g[p]) * datasets[p].squaredNorm();
  return std::sqrt(s) / combined.norm();
}

}  // namespace detail

/// Evenly spread subset of `want` indices out of n.
inline std::vector<int> spread_subset(int n, int want) {
  std::vector<int> idx;
  if (want >= n) {
    for (int i = 0; i < n; ++i) idx.push_back(i);
    return idx;
  }
  for (int i = 0; i < want; ++i) idx.push_back(static_cast<int>(std::llround(double(i) * (n - 1) / (want - 1))));
  return idx;
}

/// Weights g minimizing |U_Q* sum g_p d_p| / |sum g_p d_p| (zero when an
/// even-determined subset of Q + 1 datasets is available). With more than
/// Q + 1 datasets an evenly spread subset of Q + 1 is used.
inline Recombination recombine_sources(const FodSystem& sys, const std::vector<CVector>& datasets) {
  const int P = static_cast<int>(datasets.size());
  if (P < 2) throw Error("fod", "recombination needs at least two datasets");
  if (sys.Q < 1) throw Error("fod", "recombination needs at least one suppressed singular value");
  Recombination r;
  r.used = spread_subset(P, sys.Q + 1);
  const int n = static_cast<int>(r.used.size());
  CMatrix D(sys.M.rows(), n);
  for (int j = 0; j < n; ++j) D.col(j) = datasets[r.used[j]];
  const Eigen::VectorXd scale = D.colwise().norm().transpose();
  if (scale.minCoeff() == 0.0) throw Error("fod", "recombination: a dataset is identically zero");
  D = D * scale.cwiseInverse().cast<cd>().asDiagonal();
  const CMatrix C = sys.suppressed_U().adjoint() * D;
  CMatrix A = C.adjoint() * C, B = D.adjoint() * D;
  A = 0.5 * (A + A.adjoint());
  B = 0.5 * (B + B.adjoint());
  CVector h;
  if (n == sys.Q + 1) {
    // exact null vector of the Q x (Q + 1) system
    Eigen::BDCSVD<CMatrix> svd(C, Eigen::ComputeFullV);
    h = svd.matrixV().col(n - 1);
  } else {
    Eigen::GeneralizedSelfAdjointEigenSolver<CMatrix> es(A, B);
    if (es.info() != Eigen::Success) throw Error("fod", "recombination: datasets are linearly dependent");
    h = es.eigenvectors().col(0);
  }
  CVector g_used = scale.cwiseInverse().cast<cd>().cwiseProduct(h);
  // deterministic normalization: unit norm, largest entry real positive
  Eigen::Index imax;
  g_used.cwiseAbs().maxCoeff(&imax);
  g_used *= std::abs(g_used[imax]) / g_used[imax];
  g_used /= g_used.norm();
  r.g = CVector::Zero(P);
  for (int j = 0; j < n; ++j) r.g[r.used[j]] = g_used[j];
  r.combined = CVector::Zero(sys.M.rows());
  for (int j = 0; j < n; ++j) r.combined += g_used[j] * datasets[r.used[j]];
  const double cn = r.combined.norm();
  if (!(cn > 0.0)) throw Error("fod", "recombination produced zero data");
  r.projection = (sys.suppressed_U().adjoint() * r.combined).norm() / cn;
  r.noise_gain = detail::noise_gain(r.g, datasets, r.combined);
  return r;
}

/// Up to m recombinations drawn from the null space of U_Q* D over all P
/// datasets: the directions h in that space with the largest |D h| / |h|
/// (column-normalized D), i.e. the least noise amplification. A single
/// recombine_sources() solution is returned when the null space is empty.
inline std::vector<Recombination> recombine_sources_multi(const FodSystem& sys, const std::vector<CVector>& datasets,
                                                          int m) {
  const int P = static_cast<int>(datasets.size());
  if (m < 1) throw std::invalid_argument("recombine_sources_multi: m must be positive");
  if (P < 2) throw Error("fod", "recombination needs at least two datasets");
  if (sys.Q < 1) throw Error("fod", "recombination needs at least one suppressed singular value");
  if (P <= sys.Q) return {recombine_sources(sys, datasets)};
  CMatrix D(sys.M.rows(), P);
  for (int j = 0; j < P; ++j) D.col(j) = datasets[j];
  const Eigen::VectorXd scale = D.colwise().norm().transpose();
  if (scale.minCoeff() == 0.0) throw Error("fod", "recombination: a dataset is identically zero");
  const CMatrix Dn = D * scale.cwiseInverse().cast<cd>().asDiagonal();
  Eigen::BDCSVD<CMatrix> svd(sys.suppressed_U().adjoint() * Dn, Eigen::ComputeFullV);
  const CMatrix Z = svd.matrixV().rightCols(P - sys.Q);
  CMatrix H = Z.adjoint() * (Dn.adjoint() * Dn) * Z;
  H = 0.5 * (H + H.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(H);
  std::vector<Recombination> out;
  const int count = std::min<int>(m, static_cast<int>(Z.cols()));
  for (int j = 0; j < count; ++j) {
    CVector g = scale.cwiseInverse().cast<cd>().cwiseProduct(Z * es.eigenvectors().col(H.cols() - 1 - j));
    Eigen::Index imax;
    g.cwiseAbs().maxCoeff(&imax);
    g *= std::abs(g[imax]) / g[imax];
    g /= g.norm();
    Recombination r;
    r.g = g;
    r.combined = D * g;
    for (int p = 0; p < P; ++p) r.used.push_back(p);
    const double cn = r.combined.norm();
    if (!(cn > 0.0)) throw Error("fod", "recombination produced zero data");
    r.projection = (sys.suppressed_U().adjoint() * r.combined).norm() / cn;
    r.noise_gain = detail::noise_gain(r.g, datasets, r.combined);
    out.push_back(std::move(r));
  }
  return out;
}

/// t = sum_p g_p t_p at the collocation points.
inline CVector recombined_incident_traction(const std::vector<IncidentPlaneWave>& waves, const CVector& g,
                                            const CollocationSet& colloc, const ElasticMedium& med) {
  if (static_cast<int>(waves.size()) != g.size())
    throw Error("fod", "recombination weights and incident waves differ in length");
  std::vector<IncidentPlaneWave> used;
  std::vector<cd> w;
  for (int p = 0; p < g.size(); ++p)
    if (g[p] != 0.0) {
      used.push_back(waves[p]);
      w.push_back(g[p]);
    }
  CVector t = CVector::Zero(3 * colloc.size());
  if (used.empty()) return t;
  const CMatrix tp = incident_tractions(colloc, used, med);
  for (std::size_t p = 0; p < used.size(); ++p) t += w[p] * tp.col(p);
  return t;
}

// ---------------------------------------------------------------------------
// FOD files
//
//   fod <n_nodes>
//   <node> Re(u1) Im(u1) Re(u2) Im(u2) Re(u3) Im(u3)  Re(un) Im(un) Re(ue1) Im(ue1) Re(ue2) Im(ue2)
//
// The trailing six numbers are the components in the local frame (n, e1, e2)
// at the node (taken from its first adjacent element); the reader ignores them.

inline void write_fod(std::ostream& os, const FractureMesh& mesh, const FodVector& f) {
  os << std::setprecision(17) << "fod " << mesh.num_nodes() << '\n';
  static const Vec2 corner[4] = {Vec2(-1, -1), Vec2(1, -1), Vec2(1, 1), Vec2(-1, 1)};
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    const CVec3 v = f.at(i);
    os << i;
    for (int c = 0; c < 3; ++c) os << ' ' << v[c].real() << ' ' << v[c].imag();
    const int e = mesh.node_elements(i).front();
    int a = 0;
    while (mesh.element(e).nodes[a] != i) ++a;
    const auto sp = mesh.eval(e, corner[a][0], corner[a][1]);
    for (const Vec3& b : {sp.n, sp.e1, sp.e2}) {
      const cd l = to_complex(b).dot(v);
      os << ' ' << l.real() << ' ' << l.imag();
    }
    os << '\n';
  }
}

inline FodVector read_fod(std::istream& is) {
  std::string tag;
  int n = -1;
  is >> tag >> n;
  if (!is || tag != "fod" || n < 0) throw std::invalid_argument("fod file: malformed header");
  FodVector f(n);
  std::string line;
  std::getline(is, line);
  for (int i = 0; i < n; ++i) {
    if (!std::getline(is, line)) throw std::invalid_argument("fod file: truncated");
    std::istringstream ls(line);
    int idx;
    double re[3], im[3];
    ls >> idx >> re[0] >> im[0] >> re[1] >> im[1] >> re[2] >> im[2];
    if (!ls || idx != i) throw std::invalid_argument("fod file: bad line " + std::to_string(i));
    f.set(i, CVec3(cd(re[0], im[0]), cd(re[1], im[1]), cd(re[2], im[2])));
  }
  return f;
}

inline void save_fod(const std::string& path, const FractureMesh& mesh, const FodVector& f) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_fod(os, mesh, f);
}

inline FodVector load_fod(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_fod(is);
}

}  // namespace fracsense
