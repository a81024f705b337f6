#pragma once

// Forward scattering by a fracture with a linear-slip contact law.
//
// Sign conventions. The normal n points from the "-" face to the "+" face
// and the FOD is phi = u(+) - u(-). With S(x, xi) the stress at x due to a
// unit point force at xi, the scattered field is the double layer
//
//   u_k(xi) = int phi_i n_j S_ij^k(x, xi) dS_x,
//
// its far field is u_inf = -int Sigma_inf : (phi (x) n) dS, and the traction
// on the fracture comes from the regularized gradient
//
//   W_kl(xi) = pv int S_ab^k(x, xi) D_bl(phi_a) dS + rho w^2 int U_ak(x, xi) phi_a n_l dS,
//
// with D_bl(f) = n_b f_,l - n_l f_,b and W_kl playing the role of du_k/dxi_l.
// The contact law reads K phi = T phi + t_inc at every collocation point.

#include "fracsense/kernels.hpp"
#include "fracsense/mesh.hpp"
#include "fracsense/observation.hpp"
#include "fracsense/quadrature.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <functional>
#include <memory>
#include <vector>

namespace fracsense {

// ---------------------------------------------------------------------------
// Specific stiffness

/// Complex symmetric stiffness in the local frame (n, e1, e2), as a
/// function of position on the fracture.
class StiffnessField {
 public:
  using LocalFn = std::function<CMat3(const Vec3&)>;

  StiffnessField() : StiffnessField(diagonal(0.0, 0.0, 0.0)) {}
  explicit StiffnessField(LocalFn fn) : fn_(std::move(fn)) {}

  static StiffnessField diagonal(cd kn, cd ks1, cd ks2) {
    check_diag(kn, ks1, ks2);
    return StiffnessField([=](const Vec3&) {
      CMat3 k = CMat3::Zero();
      k.diagonal() << kn, ks1, ks2;
      return k;
    });
  }

  /// kappa_s1 = kappa_s2 = kappa_s, both possibly position dependent.
  static StiffnessField normal_shear(std::function<cd(const Vec3&)> kn,
                                     std::function<cd(const Vec3&)> ks) {
    return StiffnessField([kn = std::move(kn), ks = std::move(ks)](const Vec3& x) {
      CMat3 k = CMat3::Zero();
      k.diagonal() << kn(x), ks(x), ks(x);
      return k;
    });
  }

  /// Local-frame matrix at x; throws if it is not symmetric or not passive.
  CMat3 local(const Vec3& x) const {
    const CMat3 k = fn_(x);
    const double scale = std::max(1.0, k.norm());
    if ((k - k.transpose()).norm() > 1e-12 * scale)
      throw std::invalid_argument("StiffnessField: K must be symmetric");
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (k(i, j).imag() > 1e-12 * scale)
          throw std::invalid_argument("StiffnessField: Im(K) must be non-positive");
    return k;
  }

  CMat3 global(const Vec3& x, const Vec3& n, const Vec3& e1, const Vec3& e2) const {
    Mat3 R;
    R.col(0) = n;
    R.col(1) = e1;
    R.col(2) = e2;
    return R.cast<cd>() * local(x) * R.transpose().cast<cd>();
  }

 private:
  static void check_diag(cd a, cd b, cd c) {
    for (cd v : {a, b, c})
      if (v.imag() > 0.0) throw std::invalid_argument("StiffnessField: Im(K) must be non-positive");
  }
  LocalFn fn_;
};

// ---------------------------------------------------------------------------
// Quadrature controls

struct BemQuadrature {
  int host_angular = 12;    ///< Gauss points in angle per sub-triangle
  int host_radial = 10;     ///< Gauss points along each ray
  double near_ratio = 2.0;  ///< accept a sub-square when dist > ratio * size
  int max_depth = 10;
};

namespace detail {

/// Accumulates the regularized gradient W^{(alpha, c)} of the four nodal
/// basis functions of one element.
struct ElementGradients {
  std::array<std::array<CMat3, 3>, 4> W;

  ElementGradients() {
    for (auto& a : W)
      for (auto& m : a) m.setZero();
  }

  void add(const Tensor3c& S, const CMat3* U, double rho_w2, const Vec3& n,
           const std::array<double, 4>& N, const std::array<Vec3, 4>& grad, double w) {
    cd sn[3][3];
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 3; ++k) sn[c][k] = S(c, 0, k) * n[0] + S(c, 1, k) * n[1] + S(c, 2, k) * n[2];
    for (int a = 0; a < 4; ++a) {
      const Vec3& g = grad[a];
      for (int c = 0; c < 3; ++c) {
        CMat3& Wac = W[a][c];
        for (int k = 0; k < 3; ++k) {
          const cd sg = S(c, 0, k) * g[0] + S(c, 1, k) * g[1] + S(c, 2, k) * g[2];
          const cd u = U ? rho_w2 * (*U)(c, k) * N[a] : cd(0.0);
          for (int l = 0; l < 3; ++l) Wac(k, l) += w * (sn[c][k] * g[l] - n[l] * sg + u * n[l]);
        }
      }
    }
  }
};

/// Polar integration around an interior point (s0, t0) of element e, with the
/// 1/rho part of the static kernel subtracted and added back analytically.
inline void integrate_host_element(const FractureMesh& mesh, int e, double s0, double t0,
                                   const Vec3& xi, const ElasticMedium& med, double omega,
                                   const BemQuadrature& q, ElementGradients& acc) {
  const double rho_w2 = med.rho * omega * omega;
  const SurfacePoint p0 = mesh.eval(e, s0, t0);
  const auto& ga = gauss_legendre(q.host_angular);
  const auto& gr = gauss_legendre(q.host_radial);
  double inv_sum = 0.0;  // sum_j w_j / (1 + x_j): the subtracted 1/rho weights per unit R
  for (int j = 0; j < q.host_radial; ++j) inv_sum += gr.w[j] / (1.0 + gr.x[j]);
  const std::array<Vec2, 4> corners{Vec2(-1, -1), Vec2(1, -1), Vec2(1, 1), Vec2(-1, 1)};
  const Vec2 c0(s0, t0);
  for (int side = 0; side < 4; ++side) {
    const Vec2 a = corners[side] - c0, b = corners[(side + 1) % 4] - c0;
    double th_a = std::atan2(a[1], a[0]), th_b = std::atan2(b[1], b[0]);
    if (th_b < th_a) th_b += 2.0 * kPi;
    const Vec2 edge = (b - a).normalized();
    const Vec2 nrm(edge[1], -edge[0]);   // outward normal of the side
    const double dperp = a.dot(nrm);
    const double th_n = std::atan2(nrm[1], nrm[0]);
    for (int i = 0; i < q.host_angular; ++i) {
      const double th = 0.5 * (th_a + th_b) + 0.5 * (th_b - th_a) * ga.x[i];
      const double wth = 0.5 * (th_b - th_a) * ga.w[i];
      const double R = dperp / std::cos(th - th_n);
      const double ct = std::cos(th), st = std::sin(th);
      for (int j = 0; j < q.host_radial; ++j) {
        const double rho = 0.5 * R * (1.0 + gr.x[j]);
        const double w = wth * 0.5 * R * gr.w[j] * rho;
        const SurfacePoint sp = mesh.eval(e, s0 + rho * ct, t0 + rho * st);
        const auto [U, S] = greens_pair(sp.x, xi, med, omega);
        acc.add(S, &U, rho_w2, sp.n, sp.N, sp.grad, w * sp.jac);
      }
      const Vec3 dir = ct * p0.xs + st * p0.xt;
      const Tensor3c K = kelvin_stress(dir, med);
      acc.add(K, nullptr, 0.0, p0.n, p0.N, p0.grad, wth * p0.jac * (std::log(R) - inv_sum));
    }
  }
}

template <class Visit>
void visit_adaptive(const FractureMesh& mesh, int e, const Vec3& xi, double s0, double s1,
                    double t0, double t1, int depth, const BemQuadrature& q, Visit&& visit) {
  const double size = mesh.element_diameter(e) * 0.5 * std::max(s1 - s0, t1 - t0);
  const Vec3 c = depth == 0 ? mesh.element_center(e) : mesh.eval(e, 0.5 * (s0 + s1), 0.5 * (t0 + t1)).x;
  if ((c - xi).norm() > q.near_ratio * size) {
    if (depth == 0) {
      for (const auto& qp : mesh.quadrature(e)) visit(qp);
    } else {
      for (const auto& qp : mesh.sub_quadrature(e, s0, s1, t0, t1)) visit(qp);
    }
    return;
  }
  if (depth >= q.max_depth)
    throw std::domain_error("adaptive quadrature: evaluation point lies on the surface");
  const double sm = 0.5 * (s0 + s1), tm = 0.5 * (t0 + t1);
  visit_adaptive(mesh, e, xi, s0, sm, t0, tm, depth + 1, q, visit);
  visit_adaptive(mesh, e, xi, sm, s1, t0, tm, depth + 1, q, visit);
  visit_adaptive(mesh, e, xi, sm, s1, tm, t1, depth + 1, q, visit);
  visit_adaptive(mesh, e, xi, s0, sm, tm, t1, depth + 1, q, visit);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Traction operator

/// Discrete traction operator: rows are 3 traction components per
/// collocation point, columns 3 FOD components per free (non-edge) node.
struct TractionSystem {
  CMatrix T;
  CollocationSet colloc;

  using Svd = Eigen::BDCSVD<CMatrix>;
  const Svd& svd() const {
    if (!svd_) svd_ = std::make_shared<Svd>(T, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return *svd_;
  }
  CVector apply(const FractureMesh& mesh, const FodVector& f) const { return T * f.free_part(mesh); }

 private:
  mutable std::shared_ptr<Svd> svd_;
};

/// Traction rows (3 x 3 N_free) of one collocation point.
inline Eigen::Matrix<cd, 3, Eigen::Dynamic> traction_rows(const FractureMesh& mesh,
                                                          const CollocationPoint& p,
                                                          const ElasticMedium& med, double omega,
                                                          const BemQuadrature& q = {}) {
  const double rho_w2 = med.rho * omega * omega;
  Eigen::Matrix<cd, 3, Eigen::Dynamic> rows = Eigen::Matrix<cd, 3, Eigen::Dynamic>::Zero(3, 3 * mesh.num_free());
  for (int e = 0; e < mesh.num_elements(); ++e) {
    detail::ElementGradients acc;
    if (e == p.element) {
      detail::integrate_host_element(mesh, e, p.s, p.t, p.x, med, omega, q, acc);
    } else {
      detail::visit_adaptive(mesh, e, p.x, -1, 1, -1, 1, 0, q, [&](const QuadPoint& qp) {
        const auto [U, S] = greens_pair(qp.x, p.x, med, omega);
        acc.add(S, &U, rho_w2, qp.n, qp.N, qp.grad, qp.w);
      });
    }
    const auto& nodes = mesh.element(e).nodes;
    for (int a = 0; a < 4; ++a) {
      const int f = mesh.free_index(nodes[a]);
      if (f < 0) continue;
      for (int c = 0; c < 3; ++c) rows.col(3 * f + c) += traction_kl(acc.W[a][c], p.n, med);
    }
  }
  return rows;
}

inline TractionSystem assemble_T(const FractureMesh& mesh, const CollocationSet& colloc,
                                 const ElasticMedium& med, double omega,
                                 const BemQuadrature& q = {}) {
  med.validate();
  TractionSystem sys;
  sys.colloc = colloc;
  sys.T = CMatrix::Zero(3 * colloc.size(), 3 * mesh.num_free());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < colloc.size(); ++i) {
    try {
      sys.T.middleRows<3>(3 * i) = traction_rows(mesh, colloc.points[i], med, omega, q);
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const std::exception& ex) {
      throw Error("forward", std::string("traction assembly failed: ") + ex.what());
    }
  }
  return sys;
}

/// Incident tractions n . C : grad u_inc at the collocation points, one
/// column per wave.
inline CMatrix incident_tractions(const CollocationSet& colloc,
                                  const std::vector<IncidentPlaneWave>& waves,
                                  const ElasticMedium& med) {
  CMatrix t(3 * colloc.size(), waves.size());
  for (std::size_t w = 0; w < waves.size(); ++w)
    for (int i = 0; i < colloc.size(); ++i) {
      const auto& p = colloc.points[i];
      t.block<3, 1>(3 * i, w) = traction(eval_plane_wave(waves[w], med, p.x).grad, p.n, med);
    }
  return t;
}

/// Block matrix of K(xi_p) N_alpha(xi_p) in the global frame.
inline CMatrix stiffness_operator(const FractureMesh& mesh, const CollocationSet& colloc,
                                  const StiffnessField& K) {
  CMatrix out = CMatrix::Zero(3 * colloc.size(), 3 * mesh.num_free());
  for (int i = 0; i < colloc.size(); ++i) {
    const auto& p = colloc.points[i];
    const CMat3 kg = K.global(p.x, p.n, p.e1, p.e2);
    const auto N = shape_values(p.s, p.t);
    const auto& nodes = mesh.element(p.element).nodes;
    for (int a = 0; a < 4; ++a) {
      const int f = mesh.free_index(nodes[a]);
      if (f >= 0) out.block<3, 3>(3 * i, 3 * f) += N[a] * kg;
    }
  }
  return out;
}

/// FOD components at collocation points (3 per point, global frame).
inline CVector fod_at_collocation(const FractureMesh& mesh, const CollocationSet& colloc,
                                  const FodVector& f) {
  CVector out(3 * colloc.size());
  for (int i = 0; i < colloc.size(); ++i) {
    const auto& p = colloc.points[i];
    out.segment<3>(3 * i) = interpolate(mesh, f, p.element, p.s, p.t);
  }
  return out;
}

struct ForwardResult {
  std::vector<FodVector> fods;
  double max_residual = 0.0;  ///< max over waves of |(K - T) phi - t| / |t|
  double rcond = 0.0;
};

/// Solves (K - T) phi = t_inc for every wave with a prebuilt traction system.
/// Square systems use LU; overdetermined ones least squares, with the
/// residual then measured on the normal equations.
inline ForwardResult solve_forward(const FractureMesh& mesh, const TractionSystem& sys,
                                   const StiffnessField& K,
                                   const std::vector<IncidentPlaneWave>& waves,
                                   const ElasticMedium& med) {
  const CMatrix A = stiffness_operator(mesh, sys.colloc, K) - sys.T;
  const CMatrix rhs = incident_tractions(sys.colloc, waves, med);
  ForwardResult res;
  CMatrix X;
  if (A.rows() == A.cols()) {
    Eigen::PartialPivLU<CMatrix> lu(A);
    res.rcond = lu.rcond();
    if (!(res.rcond > 1e-13)) throw SolverError("forward", "singular contact system", 1.0 / res.rcond);
    X = lu.solve(rhs);
    for (int w = 0; w < rhs.cols(); ++w)
      res.max_residual = std::max(res.max_residual, (A * X.col(w) - rhs.col(w)).norm() / rhs.col(w).norm());
  } else {
    if (A.rows() < A.cols()) throw Error("forward", "underdetermined contact system");
    Eigen::ColPivHouseholderQR<CMatrix> qr(A);
    const auto& R = qr.matrixR();
    const double rmax = std::abs(R(0, 0)), rmin = std::abs(R(A.cols() - 1, A.cols() - 1));
    res.rcond = rmin / rmax;
    if (!(res.rcond > 1e-13)) throw SolverError("forward", "rank-deficient contact system", 1.0 / res.rcond);
    X = qr.solve(rhs);
    const CMatrix AhA = A.adjoint() * A;
    for (int w = 0; w < rhs.cols(); ++w) {
      const CVector b = A.adjoint() * rhs.col(w);
      res.max_residual = std::max(res.max_residual, (AhA * X.col(w) - b).norm() / b.norm());
    }
  }
  if (res.max_residual > 1e-8)
    throw SolverError("forward", "contact solve residual " + std::to_string(res.max_residual), 1.0 / res.rcond);
  for (int w = 0; w < rhs.cols(); ++w) res.fods.push_back(FodVector::from_free(mesh, X.col(w)));
  return res;
}

/// Convenience overload: matched square collocation (one point per free node).
inline ForwardResult solve_forward(const FractureMesh& mesh, const StiffnessField& K,
                                   const std::vector<IncidentPlaneWave>& waves,
                                   const ElasticMedium& med, double omega,
                                   const BemQuadrature& q = {}) {
  const auto sys = assemble_T(mesh, matched_collocation(mesh), med, omega, q);
  return solve_forward(mesh, sys, K, waves, med);
}

// ---------------------------------------------------------------------------
// Far field and near field

/// Linear map from nodal FOD (3 per node, all nodes) to Cartesian far-field
/// samples: rows 6k..6k+2 are u_p_inf and 6k+3..6k+5 are u_s_inf at direction k.
inline CMatrix farfield_matrix(const FractureMesh& mesh, const std::vector<Vec3>& dirs,
                               const ElasticMedium& med, double omega) {
  CMatrix M = CMatrix::Zero(6 * dirs.size(), 3 * mesh.num_nodes());
#pragma omp parallel for schedule(static)
  for (int k = 0; k < static_cast<int>(dirs.size()); ++k) {
    for (int e = 0; e < mesh.num_elements(); ++e) {
      const auto& nodes = mesh.element(e).nodes;
      for (const auto& qp : mesh.quadrature(e)) {
        const auto ff = farfield_stress_kernel(dirs[k], qp.x, med, omega);
        // contraction over j with the normal: c[p/s](i, l) = -sum_j Sigma(i, j, l) n_j
        CMat3 cp, cs;
        for (int i = 0; i < 3; ++i)
          for (int l = 0; l < 3; ++l) {
            cp(l, i) = -(ff.p_part(i, 0, l) * qp.n[0] + ff.p_part(i, 1, l) * qp.n[1] + ff.p_part(i, 2, l) * qp.n[2]);
            cs(l, i) = -(ff.s_part(i, 0, l) * qp.n[0] + ff.s_part(i, 1, l) * qp.n[1] + ff.s_part(i, 2, l) * qp.n[2]);
          }
        for (int a = 0; a < 4; ++a) {
          const double w = qp.w * qp.N[a];
          M.block<3, 3>(6 * k, 3 * nodes[a]) += w * cp;
          M.block<3, 3>(6 * k + 3, 3 * nodes[a]) += w * cs;
        }
      }
    }
  }
  return M;
}

/// Far-field samples of one FOD on the given grid.
inline std::vector<FarFieldSample> farfield_from_fod(const FractureMesh& mesh, const FodVector& fod,
                                                     const ObservationGrid& grid,
                                                     const ElasticMedium& med, double omega) {
  const auto dirs = grid.directions();
  const CVector v = farfield_matrix(mesh, dirs, med, omega) * fod.values;
  std::vector<FarFieldSample> out(dirs.size());
  for (std::size_t k = 0; k < dirs.size(); ++k)
    out[k] = {dirs[k], v.segment<3>(6 * k), v.segment<3>(6 * k + 3)};
  return out;
}

/// Double-layer potential at a point off the fracture.
inline CVec3 scattered_field_at(const FractureMesh& mesh, const FodVector& fod, const Vec3& xi,
                                const ElasticMedium& med, double omega) {
  BemQuadrature q;
  q.max_depth = 26;
  CVec3 u = CVec3::Zero();
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& nodes = mesh.element(e).nodes;
    detail::visit_adaptive(mesh, e, xi, -1, 1, -1, 1, 0, q, [&](const QuadPoint& qp) {
      CVec3 phi = CVec3::Zero();
      for (int a = 0; a < 4; ++a) phi += qp.N[a] * fod.at(nodes[a]);
      const Tensor3c S = greens_stress(qp.x, xi, med, omega);
      for (int k = 0; k < 3; ++k) {
        cd s = 0.0;
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) s += phi[i] * qp.n[j] * S(i, j, k);
        u[k] += qp.w * s;
      }
    });
  }
  return u;
}

/// Radiated-energy proxy sum_k (k_p |u_p|^2 / (lambda + 2 mu) + k_s |u_s|^2 / mu).
inline double farfield_energy(const std::vector<FarFieldSample>& ff, const ElasticMedium& med,
                              double omega) {
  double e = 0.0;
  for (const auto& s : ff)
    e += med.k_p(omega) * s.up_inf.squaredNorm() / med.p_modulus() +
         med.k_s(omega) * s.us_inf.squaredNorm() / med.mu;
  return e;
}

/// Records far fields of every wave into a dataset.
inline FarFieldDataset synthesize_dataset(const FractureMesh& mesh, const std::vector<FodVector>& fods,
                                          const std::vector<IncidentPlaneWave>& waves,
                                          const ObservationGrid& grid, const ElasticMedium& med,
                                          double omega) {
  FarFieldDataset d;
  d.n_theta = grid.n_theta();
  d.n_phi = grid.n_phi();
  d.omega = omega;
  d.incidents = waves;
  const auto dirs = grid.directions();
  const CMatrix M = farfield_matrix(mesh, dirs, med, omega);
  for (const auto& f : fods) {
    const CVector v = M * f.values;
    std::vector<FarFieldSample> rec(dirs.size());
    for (std::size_t k = 0; k < dirs.size(); ++k) rec[k] = {dirs[k], v.segment<3>(6 * k), v.segment<3>(6 * k + 3)};
    d.records.push_back(std::move(rec));
  }
  return d;
}

}  // namespace fracsense
