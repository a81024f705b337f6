#pragma once

// Geometric reconstruction with the generalized linear sampling method:
// far-field operator, its positive surrogate F#, the penalized minimizer,
// the characteristic function over a sampling grid, and extraction of a
// fracture surface from the resulting indicator map.

#include "fracsense/forward.hpp"
#include "fracsense/observation.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

namespace fracsense {

/// Thirteen unsigned trial normals: the cube's face (3), edge (6) and
/// vertex (4) directions, one representative per +/- pair.
inline std::vector<Vec3> trial_normals() {
  std::vector<Vec3> n = {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
  for (const Vec3& v : {Vec3(1, 1, 0), Vec3(1, -1, 0), Vec3(1, 0, 1), Vec3(1, 0, -1), Vec3(0, 1, 1),
                        Vec3(0, 1, -1), Vec3(1, 1, 1), Vec3(1, 1, -1), Vec3(1, -1, 1), Vec3(-1, 1, 1)})
    n.push_back(v.normalized());
  return n;
}

/// Unit excitations spanning the discrete Herglotz densities: for each grid
/// direction d_k a P wave and S waves polarized along theta_hat and phi_hat.
/// Incident 3k + c belongs to direction k and component c.
inline std::vector<IncidentPlaneWave> herglotz_incidents(const ObservationGrid& grid, double omega) {
  std::vector<IncidentPlaneWave> w;
  for (int k = 0; k < grid.size(); ++k) {
    const auto f = grid.frame(k);
    w.push_back(IncidentPlaneWave::p_wave(f[0], omega));
    w.push_back(IncidentPlaneWave::s_wave(f[0], f[1], omega));
    w.push_back(IncidentPlaneWave::s_wave(f[0], f[2], omega));
  }
  return w;
}

struct GlsmParams {
  static constexpr double kDefaultAlphaFactor = 0.01;

  double alpha = 0.0;
  double delta = 0.0;
  std::vector<Vec3> normals = trial_normals();

  void validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("GlsmParams: alpha must be positive");
    if (!(delta > 0.0)) throw std::invalid_argument("GlsmParams: delta must be positive");
    if (normals.empty()) throw std::invalid_argument("GlsmParams: empty trial-normal set");
  }

  /// Parameters for F / ||F|| with delta = delta_rel and alpha =
  /// alpha_factor * delta_rel^2, rewritten for the unnormalized F of norm
  /// f_norm (same minimizer, indicator scaled by f_norm^{-1/2}).
  static GlsmParams relative(double f_norm, double delta_rel, double alpha_factor = kDefaultAlphaFactor) {
    GlsmParams p;
    p.delta = delta_rel * f_norm;
    p.alpha = alpha_factor * delta_rel * delta_rel * f_norm;
    p.validate();
    return p;
  }
};

/// Discrete Herglotz density: (g_p, g_theta, g_phi) per source direction in
/// the scaled basis of FarFieldOperator.
struct HerglotzDensity {
  CVector coeffs;
};

/// F# = 1/2 |F + F*| + (F - F*) / (2i), with |A| from the eigendecomposition
/// of the Hermitian matrix A.
inline CMatrix f_sharp(const CMatrix& F) {
  if (F.rows() != F.cols()) throw std::invalid_argument("f_sharp: far-field operator must be square");
  const CMatrix H = 0.5 * (F + F.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(H);
  if (es.info() != Eigen::Success) throw SolverError("glsm", "eigendecomposition of Re F failed", 0.0);
  const CMatrix absH = es.eigenvectors() * es.eigenvalues().cwiseAbs().cast<cd>().asDiagonal() *
                       es.eigenvectors().adjoint();
  CMatrix S = absH + (F - F.adjoint()) / (2.0 * kI);
  return 0.5 * (S + S.adjoint());
}

/// Far-field operator in energy-normalized coordinates. Each intrinsic
/// amplitude of wave type b (P or S), both as far-field row and as source
/// column, is scaled by sqrt(w k_b / M_b), where w are direction weights, k
/// the wavenumbers and M the moduli (lambda + 2 mu or mu). Radiated power is
/// then the plain squared norm.
struct FarFieldOperator {
  CMatrix F;
  CMatrix F_sharp;            ///< PSD projection of f_sharp(F)
  double norm = 0.0;          ///< spectral norm of F
  double sharp_min_eig = 0.0; ///< most negative eigenvalue clamped away
  ObservationGrid grid;
  ElasticMedium med;
  double omega = 0.0;
  Eigen::VectorXd row_scale;

  int size() const { return static_cast<int>(F.rows()); }

  /// Scaled intrinsic vector of a far-field record; rows match F.
  CVector data_vector(const std::vector<FarFieldSample>& rec) const {
    return row_scale.cast<cd>().cwiseProduct(intrinsic_vector(rec, grid));
  }

  /// Trial patterns of a vanishing penny at z for the symmetric basis
  /// tensors E11, E22, E33, E12 + E21, E13 + E31, E23 + E32; the pattern for
  /// normal n is P * normal_coeffs(n) since it is linear in n (x) n.
  CMatrix pattern_basis(const Vec3& z) const {
    static const int ia[6] = {0, 1, 2, 0, 0, 1}, ib[6] = {0, 1, 2, 1, 2, 2};
    CMatrix P(size(), 6);
    for (int k = 0; k < grid.size(); ++k) {
      const auto fr = grid.frame(k);
      const auto ff = farfield_stress_kernel(fr[0], z, med, omega);
      const double sw = std::sqrt(grid.weight(k));
      for (int b = 0; b < 6; ++b) {
        const int i = ia[b], j = ib[b];
        CVec3 up, us;
        for (int l = 0; l < 3; ++l) {
          up[l] = -(i == j ? ff.p_part(i, i, l) : ff.p_part(i, j, l) + ff.p_part(j, i, l));
          us[l] = -(i == j ? ff.s_part(i, i, l) : ff.s_part(i, j, l) + ff.s_part(j, i, l));
        }
        P(3 * k, b) = row_scale[3 * k] * sw * to_complex(fr[0]).dot(up);
        P(3 * k + 1, b) = row_scale[3 * k + 1] * sw * to_complex(fr[1]).dot(us);
        P(3 * k + 2, b) = row_scale[3 * k + 2] * sw * to_complex(fr[2]).dot(us);
      }
    }
    return P;
  }

  static Eigen::Matrix<double, 6, 1> normal_coeffs(const Vec3& n) {
    Eigen::Matrix<double, 6, 1> c;
    c << n[0] * n[0], n[1] * n[1], n[2] * n[2], n[0] * n[1], n[0] * n[2], n[1] * n[2];
    return c;
  }

  /// Scaled far-field vector of penny_test_pattern(., z, n).
  CVector pattern(const Vec3& z, const Vec3& n) const {
    std::vector<FarFieldSample> rec(grid.size());
    for (int k = 0; k < grid.size(); ++k) rec[k] = penny_test_pattern(grid.direction(k), z, n, med, omega);
    return data_vector(rec);
  }
};

namespace detail {

inline Eigen::VectorXd energy_row_scale(const ObservationGrid& grid, const ElasticMedium& med,
                                        double omega) {
  Eigen::VectorXd s(3 * grid.size());
  const auto e = intrinsic_energy_scale(med, omega);
  for (int k = 0; k < grid.size(); ++k)
    for (int c = 0; c < 3; ++c) s[3 * k + c] = e[c];
  return s;
}

}  // namespace detail

/// Assembles F from a dataset holding the far fields of herglotz_incidents(grid).
inline FarFieldOperator assemble_F(const FarFieldDataset& data, const ObservationGrid& grid,
                                   const ElasticMedium& med) {
  if (data.n_theta != grid.n_theta() || data.n_phi != grid.n_phi())
    throw Error("glsm", "dataset grid does not match the observation grid");
  if (data.num_incidents() != 3 * grid.size())
    throw Error("glsm", "dataset must contain 3 unit excitations per grid direction");
  const auto expect = herglotz_incidents(grid, data.omega);
  for (int j = 0; j < data.num_incidents(); ++j) {
    const auto& a = data.incidents[j];
    const auto& b = expect[j];
    if ((a.d - b.d).norm() > 1e-9 || (a.q_p - b.q_p).norm() > 1e-9 || (a.q_s - b.q_s).norm() > 1e-9)
      throw Error("glsm", "incident " + std::to_string(j) + " is not the expected Herglotz excitation");
    if (static_cast<int>(data.records[j].size()) != grid.size())
      throw Error("glsm", "record " + std::to_string(j) + " has the wrong number of directions");
  }
  FarFieldOperator op;
  op.grid = grid;
  op.med = med;
  op.omega = data.omega;
  op.row_scale = detail::energy_row_scale(grid, med, data.omega);
  const int n = 3 * grid.size();
  op.F.resize(n, n);
  for (int j = 0; j < n; ++j) {
    const double col = std::sqrt(grid.weight(j / 3)) * op.row_scale[j];
    op.F.col(j) = col * op.data_vector(data.records[j]);
  }
  op.norm = Eigen::BDCSVD<CMatrix>(op.F).singularValues()[0];
  const CMatrix S = f_sharp(op.F);
  Eigen::SelfAdjointEigenSolver<CMatrix> es(S);
  op.sharp_min_eig = std::min(0.0, es.eigenvalues().minCoeff());
  op.F_sharp = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cast<cd>().asDiagonal() *
               es.eigenvectors().adjoint();
  op.F_sharp = 0.5 * (op.F_sharp + op.F_sharp.adjoint());
  return op;
}

/// Factorization of F*F + alpha F# + alpha delta I, reused for many right
/// hand sides.
class GlsmSolver {
 public:
  GlsmSolver(const FarFieldOperator& op, GlsmParams params) : op_(&op), p_(std::move(params)) {
    p_.validate();
    const int n = op.size();
    B_ = op.F_sharp + p_.delta * CMatrix::Identity(n, n);
    A_ = op.F.adjoint() * op.F + p_.alpha * B_;
    llt_.compute(A_);
    if (llt_.info() != Eigen::Success)
      throw SolverError("glsm", "penalized normal matrix not positive definite", 0.0);
  }

  const GlsmParams& params() const { return p_; }

  /// Exact minimizer of ||F g - phi||^2 + alpha (||F#^{1/2} g||^2 + delta ||g||^2).
  HerglotzDensity minimize(const CVector& phi) const {
    const CVector rhs = op_->F.adjoint() * phi;
    HerglotzDensity g{llt_.solve(rhs)};
    const double scale = rhs.norm();
    if (scale > 0.0) {
      const double res = (A_ * g.coeffs - rhs).norm() / scale;
      if (!(res <= 1e-10)) {
        const double cond = 1.0 / (llt_.rcond() > 0 ? llt_.rcond() : 1e-300);
        throw SolverError("glsm", "normal-equation residual " + std::to_string(res), cond);
      }
    }
    return g;
  }

  double functional(const CVector& g, const CVector& phi) const {
    return (op_->F * g - phi).squaredNorm() + p_.alpha * g.dot(B_ * g).real();
  }

  /// (||F#^{1/2} g||^2 + delta ||g||^2)^{-1/2}.
  double characteristic(const HerglotzDensity& g) const {
    return 1.0 / std::sqrt(g.coeffs.dot(B_ * g.coeffs).real());
  }

  /// Maximum over the trial normals of the characteristic function at the
  /// points zs; best[i] receives the index of the maximizing normal.
  std::vector<double> best_over_normals(const std::vector<Vec3>& zs, std::vector<int>& best) const {
    std::vector<double> out(zs.size());
    best.assign(zs.size(), 0);
    std::vector<Eigen::Matrix<double, 6, 1>> coeffs;
    for (const auto& n : p_.normals) coeffs.push_back(FarFieldOperator::normal_coeffs(n.normalized()));
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < static_cast<int>(zs.size()); ++i) {
      try {
        const CMatrix P = op_->pattern_basis(zs[i]);
        const CMatrix G = llt_.solve(op_->F.adjoint() * P);
        const Eigen::Matrix<cd, 6, 6> H = G.adjoint() * (B_ * G);
        double v = 0.0;
        int arg = 0;
        for (std::size_t m = 0; m < coeffs.size(); ++m) {
          const Eigen::Matrix<cd, 6, 1> c = coeffs[m].cast<cd>();
          const double q = c.dot(H * c).real();
          const double ind = 1.0 / std::sqrt(q);
          if (ind > v) {
            v = ind;
            arg = static_cast<int>(m);
          }
        }
        out[i] = v;
        best[i] = arg;
      } catch (...) {
#pragma omp critical
        failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
  }

 private:
  const FarFieldOperator* op_;
  GlsmParams p_;
  CMatrix A_, B_;
  Eigen::LLT<CMatrix> llt_;
};

inline HerglotzDensity glsm_minimizer(const FarFieldOperator& op, const CVector& phi,
                                      const GlsmParams& params) {
  return GlsmSolver(op, params).minimize(phi);
}

inline double glsm_indicator(const FarFieldOperator& op, const GlsmParams& params, const Vec3& z,
                             const Vec3& n) {
  const GlsmSolver s(op, params);
  return s.characteristic(s.minimize(op.pattern(z, n.normalized())));
}

// ---------------------------------------------------------------------------
// Indicator maps

/// Regular grid of sampling points; index = ix + nx (iy + ny iz).
struct SamplingGrid {
  Vec3 lo = Vec3::Zero(), hi = Vec3::Zero();
  int nx = 1, ny = 1, nz = 1;

  int size() const { return nx * ny * nz; }
  Vec3 spacing() const {
    auto h = [](double a, double b, int n) { return n > 1 ? (b - a) / (n - 1) : 0.0; };
    return {h(lo[0], hi[0], nx), h(lo[1], hi[1], ny), h(lo[2], hi[2], nz)};
  }
  Vec3 point(int idx) const {
    const int ix = idx % nx, iy = (idx / nx) % ny, iz = idx / (nx * ny);
    const Vec3 h = spacing();
    return lo + Vec3(ix * h[0], iy * h[1], iz * h[2]);
  }
  std::vector<Vec3> points() const {
    std::vector<Vec3> p;
    for (int i = 0; i < size(); ++i) p.push_back(point(i));
    return p;
  }
  void validate() const {
    if (nx < 1 || ny < 1 || nz < 1) throw std::invalid_argument("SamplingGrid: empty grid");
    for (int d = 0; d < 3; ++d)
      if (hi[d] < lo[d]) throw std::invalid_argument("SamplingGrid: hi < lo");
  }
};

struct IndicatorMap {
  SamplingGrid grid;
  std::vector<double> value;
  std::vector<Vec3> normal;  ///< maximizing trial normal per point

  double max() const { return *std::max_element(value.begin(), value.end()); }
  bool operator==(const IndicatorMap& o) const {
    return grid.lo == o.grid.lo && grid.hi == o.grid.hi && grid.nx == o.grid.nx &&
           grid.ny == o.grid.ny && grid.nz == o.grid.nz && value == o.value && normal == o.normal;
  }
};

inline IndicatorMap indicator_map(const FarFieldOperator& op, const GlsmParams& params,
                                  const SamplingGrid& grid) {
  grid.validate();
  const GlsmSolver solver(op, params);
  IndicatorMap map;
  map.grid = grid;
  std::vector<int> best;
  map.value = solver.best_over_normals(grid.points(), best);
  for (int b : best) map.normal.push_back(params.normals[b].normalized());
  return map;
}

// File format: header "# indicator nx ny nz lo(3) hi(3)", then one line per
// sampling point: x y z value n1 n2 n3 (n = maximizing trial normal).
inline void write_indicator_map(std::ostream& os, const IndicatorMap& m) {
  os << std::setprecision(17) << "# indicator " << m.grid.nx << ' ' << m.grid.ny << ' ' << m.grid.nz
     << ' ' << m.grid.lo.transpose() << ' ' << m.grid.hi.transpose() << '\n';
  for (int i = 0; i < m.grid.size(); ++i)
    os << m.grid.point(i).transpose() << ' ' << m.value[i] << ' ' << m.normal[i].transpose() << '\n';
}

inline IndicatorMap read_indicator_map(std::istream& is) {
  IndicatorMap m;
  std::string hash, tag;
  auto& g = m.grid;
  is >> hash >> tag >> g.nx >> g.ny >> g.nz >> g.lo[0] >> g.lo[1] >> g.lo[2] >> g.hi[0] >> g.hi[1] >> g.hi[2];
  if (!is || hash != "#" || tag != "indicator") throw std::invalid_argument("indicator map: malformed header");
  g.validate();
  m.value.resize(g.size());
  m.normal.resize(g.size());
  for (int i = 0; i < g.size(); ++i) {
    Vec3 x;
    is >> x[0] >> x[1] >> x[2] >> m.value[i] >> m.normal[i][0] >> m.normal[i][1] >> m.normal[i][2];
    if (!is) throw std::invalid_argument("indicator map: truncated at point " + std::to_string(i));
  }
  return m;
}

inline void save_indicator_map(const std::string& path, const IndicatorMap& m) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_indicator_map(os, m);
}

inline IndicatorMap load_indicator_map(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_indicator_map(is);
}

// ---------------------------------------------------------------------------
// Surface extraction

/// Indices of sampling points with value >= tau * max.
inline std::vector<int> select_points(const IndicatorMap& map, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("select_points: tau must lie in (0, 1)");
  const double cut = tau * map.max();
  std::vector<int> sel;
  for (int i = 0; i < map.grid.size(); ++i)
    if (map.value[i] >= cut) sel.push_back(i);
  return sel;
}

struct SurfaceFitOptions {
  int n_u = 8, n_v = 8;   ///< elements of the output patch
  int degree = 2;          ///< total degree of the height polynomial
  double tolerance = 0.0;  ///< rms residual above which a warning is raised (0: grid spacing)
};

struct ExtractedSurface {
  FractureMesh mesh;
  int selected = 0;
  double rms_residual = 0.0;
  bool residual_warning = false;
  Vec3 normal = Vec3::UnitZ();  ///< orientation reference (dominant trial normal)
};

/// Fits a graph patch h(u, v) over the principal plane of the selected
/// points. The plane axes come from the point covariance, the rectangle
/// half-widths from the second moments (sqrt(3) * std, exact for uniform
/// coverage), and the height from a value-weighted polynomial regression.
/// The patch normal is oriented along the dominant trial normal.
inline ExtractedSurface extract_surface(const IndicatorMap& map, double tau,
                                        const SurfaceFitOptions& opt = {}) {
  const auto sel = select_points(map, tau);
  if (sel.size() < 6) throw Error("glsm", "surface extraction: too few points above the threshold");
  ExtractedSurface out;
  out.selected = static_cast<int>(sel.size());

  // dominant trial normal by (value-weighted) vote, sign-aligned
  std::vector<std::pair<Vec3, double>> votes;
  for (int i : sel) {
    const Vec3 n = map.normal[i];
    bool found = false;
    for (auto& v : votes)
      if (std::abs(v.first.dot(n)) > 1.0 - 1e-9) {
        v.second += map.value[i];
        found = true;
      }
    if (!found) votes.push_back({n, map.value[i]});
  }
  const Vec3 dominant = std::max_element(votes.begin(), votes.end(), [](auto& a, auto& b) {
                          return a.second < b.second;
                        })->first;

  Vec3 mean = Vec3::Zero();
  for (int i : sel) mean += map.grid.point(i);
  mean /= static_cast<double>(sel.size());
  Mat3 cov = Mat3::Zero();
  for (int i : sel) {
    const Vec3 d = map.grid.point(i) - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(sel.size());
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  Vec3 ew = es.eigenvectors().col(0);
  if (ew.dot(dominant) < 0) ew = -ew;
  Vec3 eu = es.eigenvectors().col(2);
  Vec3 ev = ew.cross(eu);
  const double au = std::sqrt(3.0 * es.eigenvalues()[2]), av = std::sqrt(3.0 * es.eigenvalues()[1]);
  if (!(au > 0.0 && av > 0.0)) throw Error("glsm", "surface extraction: degenerate point cloud");

  std::vector<GraphSurface::Term> terms;
  for (int d = 0; d <= opt.degree; ++d)
    for (int pu = d; pu >= 0; --pu) terms.push_back({pu, d - pu, 0.0});
  Eigen::MatrixXd A(sel.size(), terms.size());
  Eigen::VectorXd b(sel.size()), w(sel.size());
  for (std::size_t r = 0; r < sel.size(); ++r) {
    const Vec3 d = map.grid.point(sel[r]) - mean;
    const double u = d.dot(eu) / au, v = d.dot(ev) / av;  // scaled for conditioning
    for (std::size_t c = 0; c < terms.size(); ++c) A(r, c) = std::pow(u, terms[c].pu) * std::pow(v, terms[c].pv);
    b[r] = d.dot(ew);
    w[r] = map.value[sel[r]];
  }
  const Eigen::VectorXd sw = w.cwiseSqrt();
  const Eigen::VectorXd coef = (sw.asDiagonal() * A).colPivHouseholderQr().solve(sw.asDiagonal() * b);
  const Eigen::VectorXd res = A * coef - b;
  out.rms_residual = std::sqrt(res.cwiseProduct(res).dot(w) / w.sum());
  const double tol = opt.tolerance > 0 ? opt.tolerance : map.grid.spacing().maxCoeff();
  out.residual_warning = out.rms_residual > tol;
  for (std::size_t c = 0; c < terms.size(); ++c)
    terms[c].c = coef[c] / (std::pow(au, terms[c].pu) * std::pow(av, terms[c].pv));

  auto surf = std::make_shared<GraphSurface>(mean, eu, ev, terms);
  out.mesh = build_parametric_patch(surf, -au, au, -av, av, opt.n_u, opt.n_v);
  out.normal = dominant;
  return out;
}

/// Symmetric Hausdorff distance between two meshes, using closest-point
/// projection of dense samples of each onto the other.
inline double hausdorff_distance(const FractureMesh& a, const FractureMesh& b, int samples = 6) {
  auto one_sided = [samples](const FractureMesh& from, const FractureMesh& to) {
    double d = 0.0;
    for (int e = 0; e < from.num_elements(); ++e)
      for (int i = 0; i <= samples; ++i)
        for (int j = 0; j <= samples; ++j) {
          const Vec3 x = from.eval(e, -1.0 + 2.0 * i / samples, -1.0 + 2.0 * j / samples).x;
          d = std::max(d, (closest_point(to, x).x - x).norm());
        }
    return d;
  };
  return std::max(one_sided(a, b), one_sided(b, a));
}

}  // namespace fracsense
