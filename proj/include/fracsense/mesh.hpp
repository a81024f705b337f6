#pragma once

// Boundary-element discretization of fracture surfaces.
//
// Elements are bilinear quadrilaterals on the reference square [-1,1]^2 with
// corner order (-1,-1), (1,-1), (1,1), (-1,1). A triangle is stored as a
// quad whose last two corners coincide. When a parametric Surface is
// attached, each element carries its corner parameters and geometry is
// evaluated exactly through the surface map; otherwise geometry is the
// bilinear interpolant of the corner nodes.

#include "fracsense/quadrature.hpp"
#include "fracsense/surface.hpp"
#include "fracsense/types.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fracsense {

inline constexpr int kRegularQuadOrder = 4;

struct Element {
  std::array<int, 4> nodes{};
  std::array<Vec2, 4> params{};  ///< used only with an attached surface
};

/// Geometry and shape-function data at one reference point of an element.
struct SurfacePoint {
  Vec3 x, xs, xt;         ///< position and reference-coordinate tangents
  Vec3 n, e1, e2;         ///< local orthonormal frame, e2 = n x e1
  double jac = 0.0;       ///< |xs x xt|
  std::array<double, 4> N{};
  std::array<Vec3, 4> grad{};  ///< surface gradients of the shape functions
};

struct QuadPoint {
  Vec3 x, n;
  double w = 0.0;  ///< reference weight times jacobian
  std::array<double, 4> N{};
  std::array<Vec3, 4> grad{};
};

inline std::array<double, 4> shape_values(double s, double t) {
  return {0.25 * (1 - s) * (1 - t), 0.25 * (1 + s) * (1 - t), 0.25 * (1 + s) * (1 + t),
          0.25 * (1 - s) * (1 + t)};
}

inline std::array<Vec2, 4> shape_derivs(double s, double t) {
  return {Vec2(-0.25 * (1 - t), -0.25 * (1 - s)), Vec2(0.25 * (1 - t), -0.25 * (1 + s)),
          Vec2(0.25 * (1 + t), 0.25 * (1 + s)), Vec2(-0.25 * (1 + t), 0.25 * (1 - s))};
}

class FractureMesh {
 public:
  FractureMesh() = default;

  FractureMesh(std::vector<Vec3> nodes, std::vector<Element> elements,
               std::shared_ptr<const Surface> surface = nullptr)
      : nodes_(std::move(nodes)), elements_(std::move(elements)), surface_(std::move(surface)) {
    finalize();
  }

  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int num_elements() const { return static_cast<int>(elements_.size()); }
  const std::vector<Vec3>& nodes() const { return nodes_; }
  const Vec3& node(int i) const { return nodes_[i]; }
  const std::vector<Element>& elements() const { return elements_; }
  const Element& element(int e) const { return elements_[e]; }
  const std::shared_ptr<const Surface>& surface() const { return surface_; }

  const std::vector<int>& edge_nodes() const { return edge_nodes_; }
  bool is_edge_node(int i) const { return free_index_[i] < 0; }
  const std::vector<int>& free_nodes() const { return free_nodes_; }
  int num_free() const { return static_cast<int>(free_nodes_.size()); }
  /// Position of node i among the free nodes, or -1 for edge nodes.
  int free_index(int i) const { return free_index_[i]; }

  /// Elements sharing node i.
  const std::vector<int>& node_elements(int i) const { return node_elements_[i]; }

  const std::vector<QuadPoint>& quadrature(int e) const { return quad_[e]; }

  double element_diameter(int e) const { return elem_diam_[e]; }
  const Vec3& element_center(int e) const { return elem_center_[e]; }
  double diameter() const { return diameter_; }
  double max_element_size() const {
    return elem_diam_.empty() ? 0.0 : *std::max_element(elem_diam_.begin(), elem_diam_.end());
  }

  double area() const {
    double a = 0.0;
    for (const auto& q : quad_)
      for (const auto& p : q) a += p.w;
    return a;
  }

  SurfacePoint eval(int e, double s, double t) const {
    const Element& el = elements_[e];
    const auto N = shape_values(s, t);
    const auto dN = shape_derivs(s, t);
    SurfacePoint sp;
    sp.N = N;
    Vec3 xu_dir = Vec3::Zero();
    if (surface_) {
      Vec2 p = Vec2::Zero(), ps = Vec2::Zero(), pt = Vec2::Zero();
      for (int a = 0; a < 4; ++a) {
        p += N[a] * el.params[a];
        ps += dN[a][0] * el.params[a];
        pt += dN[a][1] * el.params[a];
      }
      sp.x = surface_->point(p);
      const auto [xu, xv] = surface_->tangents(p);
      sp.xs = ps[0] * xu + ps[1] * xv;
      sp.xt = pt[0] * xu + pt[1] * xv;
      xu_dir = xu;
    } else {
      sp.x.setZero();
      sp.xs.setZero();
      sp.xt.setZero();
      for (int a = 0; a < 4; ++a) {
        const Vec3& X = nodes_[el.nodes[a]];
        sp.x += N[a] * X;
        sp.xs += dN[a][0] * X;
        sp.xt += dN[a][1] * X;
      }
      xu_dir = sp.xs;
    }
    const Vec3 c = sp.xs.cross(sp.xt);
    sp.jac = c.norm();
    if (!(sp.jac > 0.0)) throw Error("mesh", "degenerate element geometry at evaluation point");
    sp.n = c / sp.jac;
    Vec3 e1 = xu_dir - xu_dir.dot(sp.n) * sp.n;
    if (e1.norm() < 1e-14 * (xu_dir.norm() + 1e-300)) e1 = sp.xs - sp.xs.dot(sp.n) * sp.n;
    sp.e1 = e1.normalized();
    sp.e2 = sp.n.cross(sp.e1);
    // Dual tangent basis for surface gradients.
    const double g11 = sp.xs.dot(sp.xs), g12 = sp.xs.dot(sp.xt), g22 = sp.xt.dot(sp.xt);
    const double det = g11 * g22 - g12 * g12;
    const Vec3 as = (g22 * sp.xs - g12 * sp.xt) / det;
    const Vec3 at = (g11 * sp.xt - g12 * sp.xs) / det;
    for (int a = 0; a < 4; ++a) sp.grad[a] = dN[a][0] * as + dN[a][1] * at;
    return sp;
  }

  /// Gauss product points of a reference sub-rectangle, with geometry.
  std::vector<QuadPoint> sub_quadrature(int e, double s0, double s1, double t0, double t1,
                                        int order = kRegularQuadOrder) const {
    std::vector<QuadPoint> out;
    for (const auto& rp : gauss_rect(order, s0, s1, t0, t1)) {
      const SurfacePoint sp = eval(e, rp.s, rp.t);
      out.push_back({sp.x, sp.n, rp.w * sp.jac, sp.N, sp.grad});
    }
    return out;
  }

 private:
  void finalize() {
    const int nn = num_nodes();
    for (const auto& el : elements_)
      for (int a : el.nodes)
        if (a < 0 || a >= nn) throw std::invalid_argument("mesh: element refers to missing node");

    // Boundary edges: non-degenerate edges used by exactly one element.
    // Orientation: a shared edge must be traversed in opposite directions.
    std::map<std::pair<int, int>, int> directed;
    for (const auto& el : elements_)
      for (int k = 0; k < 4; ++k) {
        const int a = el.nodes[k], b = el.nodes[(k + 1) % 4];
        if (a == b) continue;
        if (++directed[{a, b}] > 1)
          throw std::invalid_argument("mesh: inconsistent element orientation");
      }
    std::vector<char> on_edge(nn, 0);
    for (const auto& [ab, cnt] : directed)
      if (!directed.count({ab.second, ab.first})) on_edge[ab.first] = on_edge[ab.second] = 1;

    edge_nodes_.clear();
    free_nodes_.clear();
    free_index_.assign(nn, -1);
    for (int i = 0; i < nn; ++i) {
      if (on_edge[i]) {
        edge_nodes_.push_back(i);
      } else {
        free_index_[i] = static_cast<int>(free_nodes_.size());
        free_nodes_.push_back(i);
      }
    }

    node_elements_.assign(nn, {});
    for (int e = 0; e < num_elements(); ++e) {
      std::array<int, 4> u = elements_[e].nodes;
      std::sort(u.begin(), u.end());
      for (int k = 0; k < 4; ++k)
        if (k == 0 || u[k] != u[k - 1]) node_elements_[u[k]].push_back(e);
    }

    quad_.resize(num_elements());
    elem_diam_.resize(num_elements());
    elem_center_.resize(num_elements());
    for (int e = 0; e < num_elements(); ++e) {
      quad_[e] = sub_quadrature(e, -1, 1, -1, 1);
      double d = 0.0;
      for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b)
          d = std::max(d, (nodes_[elements_[e].nodes[a]] - nodes_[elements_[e].nodes[b]]).norm());
      elem_diam_[e] = d;
      elem_center_[e] = eval(e, 0.0, 0.0).x;
    }
    diameter_ = 0.0;
    for (int i = 0; i < nn; ++i)
      for (int j = i + 1; j < nn; ++j) diameter_ = std::max(diameter_, (nodes_[i] - nodes_[j]).norm());
  }

  std::vector<Vec3> nodes_;
  std::vector<Element> elements_;
  std::shared_ptr<const Surface> surface_;
  std::vector<int> edge_nodes_, free_nodes_, free_index_;
  std::vector<std::vector<int>> node_elements_;
  std::vector<std::vector<QuadPoint>> quad_;
  std::vector<double> elem_diam_;
  std::vector<Vec3> elem_center_;
  double diameter_ = 0.0;
};

/// Mesh of a parameter rectangle [u0,u1] x [v0,v1] mapped through a surface.
inline FractureMesh build_parametric_patch(std::shared_ptr<const Surface> surf, double u0,
                                           double u1, double v0, double v1, int n_u, int n_v) {
  std::vector<Vec3> nodes;
  std::vector<Vec2> par;
  for (int j = 0; j <= n_v; ++j)
    for (int i = 0; i <= n_u; ++i) {
      const Vec2 p(u0 + (u1 - u0) * i / n_u, v0 + (v1 - v0) * j / n_v);
      par.push_back(p);
      nodes.push_back(surf->point(p));
    }
  auto id = [n_u](int i, int j) { return j * (n_u + 1) + i; };
  std::vector<Element> els;
  for (int j = 0; j < n_v; ++j)
    for (int i = 0; i < n_u; ++i) {
      Element el;
      el.nodes = {id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)};
      for (int a = 0; a < 4; ++a) el.params[a] = par[el.nodes[a]];
      els.push_back(el);
    }
  return FractureMesh(std::move(nodes), std::move(els), std::move(surf));
}

/// Cylindrical patch {(R sin u, v, R cos u) : |u| <= ell/(2R), |v| <= L/2}.
/// The cylinder axis is the y axis; n_u elements along the arc, n_v across
/// the width; normals point radially outward (away from the axis).
inline FractureMesh build_cylindrical_patch(double width, double arclength, double radius,
                                            int n_u, int n_v) {
  if (!(width > 0 && arclength > 0 && radius > 0))
    throw std::invalid_argument("build_cylindrical_patch: dimensions must be positive");
  if (arclength >= 2.0 * kPi * radius)
    throw std::invalid_argument("build_cylindrical_patch: arclength must be below 2*pi*R");
  if (n_u < 2 || n_v < 2)
    throw std::invalid_argument("build_cylindrical_patch: need at least 2 subdivisions");
  const double half = 0.5 * arclength / radius;
  return build_parametric_patch(std::make_shared<CylinderSurface>(radius), -half, half,
                                -0.5 * width, 0.5 * width, n_u, n_v);
}

/// Flat rectangle centred at `center` spanned by (a, b); normal a x b.
inline FractureMesh build_flat_rectangle(const Vec3& center, const Vec3& a, const Vec3& b,
                                         double len_a, double len_b, int n_a, int n_b) {
  auto surf = std::make_shared<GraphSurface>(center, a, b, std::vector<GraphSurface::Term>{});
  return build_parametric_patch(surf, -0.5 * len_a, 0.5 * len_a, -0.5 * len_b, 0.5 * len_b,
                                n_a, n_b);
}

struct PennyOptions {
  Vec3 center = Vec3::Zero();
  Vec3 axis_a = Vec3::UnitX();
  Vec3 axis_b = Vec3::UnitY();
  int sectors = 16;
  /// Ring radii a(1 - (1 - j/rings)^grading); values above 1 cluster rings
  /// toward the crack front.
  double grading = 1.5;
};

/// Disc of radius a in the plane spanned by (axis_a, axis_b), meshed by
/// concentric rings of quads around a fan of triangles at the centre.
inline FractureMesh build_penny(double a, int rings, const PennyOptions& opt = {}) {
  if (!(a > 0)) throw std::invalid_argument("build_penny: radius must be positive");
  if (rings < 2) throw std::invalid_argument("build_penny: need at least 2 rings");
  if (opt.sectors < 3) throw std::invalid_argument("build_penny: need at least 3 sectors");
  if (!(opt.grading >= 1.0)) throw std::invalid_argument("build_penny: grading must be >= 1");
  auto surf = std::make_shared<PolarPlaneSurface>(opt.center, opt.axis_a, opt.axis_b);
  const int S = opt.sectors;
  std::vector<double> r(rings + 1);
  for (int j = 0; j <= rings; ++j)
    r[j] = a * (1.0 - std::pow(1.0 - static_cast<double>(j) / rings, opt.grading));
  r[rings] = a;
  std::vector<Vec3> nodes{surf->point(Vec2(0.0, 0.0))};
  for (int j = 1; j <= rings; ++j)
    for (int k = 0; k < S; ++k) nodes.push_back(surf->point(Vec2(r[j], 2.0 * kPi * k / S)));
  auto id = [S](int j, int k) { return j == 0 ? 0 : 1 + (j - 1) * S + (k % S); };
  std::vector<Element> els;
  for (int j = 1; j <= rings; ++j)
    for (int k = 0; k < S; ++k) {
      const double t0 = 2.0 * kPi * k / S, t1 = 2.0 * kPi * (k + 1) / S;
      Element el;
      el.nodes = {id(j - 1, k), id(j, k), id(j, k + 1), id(j - 1, k + 1)};
      el.params = {Vec2(r[j - 1], t0), Vec2(r[j], t0), Vec2(r[j], t1), Vec2(r[j - 1], t1)};
      els.push_back(el);
    }
  return FractureMesh(std::move(nodes), std::move(els), std::move(surf));
}

// ---------------------------------------------------------------------------
// Collocation

struct CollocationPoint {
  int element = 0;
  double s = 0.0, t = 0.0;
  Vec3 x, n, e1, e2;
};

struct CollocationSet {
  std::vector<CollocationPoint> points;
  int size() const { return static_cast<int>(points.size()); }
};

inline CollocationPoint make_collocation_point(const FractureMesh& mesh, int e, double s,
                                               double t) {
  const SurfacePoint sp = mesh.eval(e, s, t);
  return {e, s, t, sp.x, sp.n, sp.e1, sp.e2};
}

/// Reference-square layouts: m = 1 centroid; m = 3 a triangle of points at
/// half-distance; m = 4 the points (+-1/2, +-1/2).
inline CollocationSet interior_collocation(const FractureMesh& mesh, int m) {
  std::vector<Vec2> layout;
  switch (m) {
    case 1: layout = {Vec2(0, 0)}; break;
    case 3: layout = {Vec2(-0.5, -0.5), Vec2(0.5, -0.5), Vec2(0.0, 0.5)}; break;
    case 4: layout = {Vec2(-0.5, -0.5), Vec2(0.5, -0.5), Vec2(0.5, 0.5), Vec2(-0.5, 0.5)}; break;
    default: throw std::invalid_argument("interior_collocation: m must be 1, 3 or 4");
  }
  CollocationSet set;
  for (int e = 0; e < mesh.num_elements(); ++e)
    for (const auto& p : layout) set.points.push_back(make_collocation_point(mesh, e, p[0], p[1]));
  return set;
}

/// One point per free node, giving a square traction system. Free nodes are
/// matched to distinct adjacent elements (augmenting paths) and each point
/// sits at `offset` times the reference coordinates of its node's corner,
/// i.e. inside the element but off its centroid. Centroids are avoided
/// because sign-alternating nodal modes vanish there together with their
/// gradient normal to the symmetry lines of the element.
inline CollocationSet matched_collocation(const FractureMesh& mesh, double offset = 0.5) {
  if (!(offset > 0.0 && offset < 1.0))
    throw std::invalid_argument("matched_collocation: offset must lie in (0, 1)");
  const int nf = mesh.num_free();
  std::vector<int> elem_owner(mesh.num_elements(), -1);
  std::vector<int> node_elem(nf, -1);
  std::vector<int> seen(mesh.num_elements(), -1);
  std::function<bool(int, int)> augment = [&](int f, int stamp) {
    for (int e : mesh.node_elements(mesh.free_nodes()[f])) {
      if (seen[e] == stamp) continue;
      seen[e] = stamp;
      if (elem_owner[e] < 0 || augment(elem_owner[e], stamp)) {
        elem_owner[e] = f;
        node_elem[f] = e;
        return true;
      }
    }
    return false;
  };
  for (int f = 0; f < nf; ++f)
    if (!augment(f, f)) throw Error("mesh", "no square collocation matching exists for this mesh");
  static const std::array<Vec2, 4> corners{Vec2(-1, -1), Vec2(1, -1), Vec2(1, 1), Vec2(-1, 1)};
  CollocationSet set;
  for (int f = 0; f < nf; ++f) {
    const int e = node_elem[f];
    const auto& nodes = mesh.element(e).nodes;
    Vec2 c = Vec2::Zero();
    int hits = 0;
    for (int a = 0; a < 4; ++a)
      if (nodes[a] == mesh.free_nodes()[f]) {
        c += corners[a];
        ++hits;
      }
    c *= offset / hits;
    set.points.push_back(make_collocation_point(mesh, e, c[0], c[1]));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Nodal FOD fields

/// Complex 3-vector per mesh node in the global frame, stacked node-major.
struct FodVector {
  CVector values;

  FodVector() = default;
  explicit FodVector(int num_nodes) : values(CVector::Zero(3 * num_nodes)) {}

  int num_nodes() const { return static_cast<int>(values.size() / 3); }
  CVec3 at(int i) const { return values.segment<3>(3 * i); }
  void set(int i, const CVec3& v) { values.segment<3>(3 * i) = v; }
  double norm() const { return values.norm(); }

  /// Expands free-node unknowns (3 per free node) to a full, edge-pinned field.
  static FodVector from_free(const FractureMesh& mesh, const CVector& free) {
    if (free.size() != 3 * mesh.num_free())
      throw std::invalid_argument("FodVector::from_free: size mismatch");
    FodVector f(mesh.num_nodes());
    for (int k = 0; k < mesh.num_free(); ++k) f.set(mesh.free_nodes()[k], free.segment<3>(3 * k));
    return f;
  }

  CVector free_part(const FractureMesh& mesh) const {
    CVector out(3 * mesh.num_free());
    for (int k = 0; k < mesh.num_free(); ++k) out.segment<3>(3 * k) = at(mesh.free_nodes()[k]);
    return out;
  }

  double max_edge_magnitude(const FractureMesh& mesh) const {
    double m = 0.0;
    for (int i : mesh.edge_nodes()) m = std::max(m, at(i).norm());
    return m;
  }
};

inline void check_point(const FractureMesh& mesh, int e, double s, double t) {
  if (e < 0 || e >= mesh.num_elements() || std::abs(s) > 1.0 || std::abs(t) > 1.0)
    throw std::out_of_range("point outside mesh");
}

inline CVec3 interpolate(const FractureMesh& mesh, const FodVector& f, int e, double s, double t) {
  check_point(mesh, e, s, t);
  const auto N = shape_values(s, t);
  CVec3 v = CVec3::Zero();
  for (int a = 0; a < 4; ++a) v += N[a] * f.at(mesh.element(e).nodes[a]);
  return v;
}

/// Surface gradient G(l, m) = d f_m / d x_l.
inline CMat3 surface_gradient(const FractureMesh& mesh, const FodVector& f, int e, double s,
                              double t) {
  check_point(mesh, e, s, t);
  const SurfacePoint sp = mesh.eval(e, s, t);
  CMat3 g = CMat3::Zero();
  for (int a = 0; a < 4; ++a) g += to_complex(sp.grad[a]) * f.at(mesh.element(e).nodes[a]).transpose();
  return g;
}

/// D(k, l, m) = n_k f_{m,l} - n_l f_{m,k}.
inline Tensor3c tangential_diff(const FractureMesh& mesh, const FodVector& f,
                                const CollocationPoint& p) {
  const CMat3 g = surface_gradient(mesh, f, p.element, p.s, p.t);
  const Vec3 n = mesh.eval(p.element, p.s, p.t).n;
  Tensor3c d;
  for (int k = 0; k < 3; ++k)
    for (int l = 0; l < 3; ++l)
      for (int m = 0; m < 3; ++m) d(k, l, m) = n[k] * g(l, m) - n[l] * g(k, m);
  return d;
}

struct ClosestPoint {
  int element = -1;
  double s = 0.0, t = 0.0;
  Vec3 x = Vec3::Zero();
  double distance = 0.0;
};

/// Closest point on the mesh surface: coarse sampling, then projected
/// Gauss-Newton in the parameters of the best few candidate elements.
inline ClosestPoint closest_point(const FractureMesh& mesh, const Vec3& x) {
  constexpr int kSamples = 4, kCandidates = 4;
  std::vector<std::pair<double, ClosestPoint>> cand;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    ClosestPoint best;
    best.distance = 1e300;
    for (int i = 0; i <= kSamples; ++i)
      for (int j = 0; j <= kSamples; ++j) {
        const double s = -1.0 + 2.0 * i / kSamples, t = -1.0 + 2.0 * j / kSamples;
        const Vec3 p = mesh.eval(e, s, t).x;
        const double d = (p - x).norm();
        if (d < best.distance) best = {e, s, t, p, d};
      }
    cand.push_back({best.distance, best});
  }
  const int nc = std::min<int>(kCandidates, static_cast<int>(cand.size()));
  std::partial_sort(cand.begin(), cand.begin() + nc, cand.end(),
                    [](const auto& a, const auto& b) { return a.first < b.first; });
  ClosestPoint out = cand[0].second;
  for (int c = 0; c < nc; ++c) {
    ClosestPoint p = cand[c].second;
    for (int it = 0; it < 30; ++it) {
      const SurfacePoint sp = mesh.eval(p.element, p.s, p.t);
      Eigen::Matrix<double, 3, 2> J;
      J << sp.xs, sp.xt;
      const Eigen::Matrix2d JtJ = J.transpose() * J + 1e-14 * Eigen::Matrix2d::Identity();
      const Vec2 step = JtJ.ldlt().solve(J.transpose() * (x - sp.x));
      const double s = std::clamp(p.s + step[0], -1.0, 1.0), t = std::clamp(p.t + step[1], -1.0, 1.0);
      const bool done = std::abs(s - p.s) + std::abs(t - p.t) < 1e-13;
      p.s = s;
      p.t = t;
      if (done) break;
    }
    p.x = mesh.eval(p.element, p.s, p.t).x;
    p.distance = (p.x - x).norm();
    if (p.distance < out.distance) out = p;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text format
//
//   nds <N> els <M>
//   x y z                      (N lines)
//   i0 i1 i2 [i3]              (M lines, 0-based; 3 indices = triangle)
//   surface <kind> <params>    (optional: exact parametric geometry)
//   u0 v0 u1 v1 u2 v2 u3 v3    (M lines, present iff the surface line is)

inline void write_mesh(std::ostream& os, const FractureMesh& mesh) {
  os << std::setprecision(17);
  os << "nds " << mesh.num_nodes() << " els " << mesh.num_elements() << '\n';
  for (const auto& x : mesh.nodes()) os << x[0] << ' ' << x[1] << ' ' << x[2] << '\n';
  for (const auto& el : mesh.elements())
    os << el.nodes[0] << ' ' << el.nodes[1] << ' ' << el.nodes[2] << ' ' << el.nodes[3] << '\n';
  if (mesh.surface()) {
    os << "surface " << mesh.surface()->serialize() << '\n';
    for (const auto& el : mesh.elements()) {
      for (int a = 0; a < 4; ++a) os << (a ? " " : "") << el.params[a][0] << ' ' << el.params[a][1];
      os << '\n';
    }
  }
}

inline FractureMesh read_mesh(std::istream& is) {
  std::string line, tag1, tag2;
  int n = -1, m = -1;
  auto next = [&](std::string& out) {
    while (std::getline(is, out))
      if (out.find_first_not_of(" \t\r") != std::string::npos && out[0] != '#') return true;
    return false;
  };
  if (!next(line)) throw std::invalid_argument("mesh file: empty input");
  {
    std::istringstream hs(line);
    hs >> tag1 >> n >> tag2 >> m;
    if (!hs || tag1 != "nds" || tag2 != "els" || n <= 0 || m <= 0)
      throw std::invalid_argument("mesh file: malformed header '" + line + "'");
  }
  std::vector<Vec3> nodes(n);
  for (int i = 0; i < n; ++i) {
    if (!next(line)) throw std::invalid_argument("mesh file: truncated node list");
    std::istringstream ls(line);
    ls >> nodes[i][0] >> nodes[i][1] >> nodes[i][2];
    if (!ls) throw std::invalid_argument("mesh file: bad node line " + std::to_string(i));
  }
  std::vector<Element> els(m);
  for (int e = 0; e < m; ++e) {
    if (!next(line)) throw std::invalid_argument("mesh file: truncated element list");
    std::istringstream ls(line);
    std::vector<int> idx;
    int v;
    while (ls >> v) idx.push_back(v);
    if (idx.size() == 3) idx.push_back(idx[2]);
    if (idx.size() != 4) throw std::invalid_argument("mesh file: bad element line " + std::to_string(e));
    std::copy(idx.begin(), idx.end(), els[e].nodes.begin());
  }
  std::shared_ptr<const Surface> surf;
  if (next(line)) {
    if (line.rfind("surface ", 0) != 0)
      throw std::invalid_argument("mesh file: unexpected trailing line '" + line + "'");
    surf = parse_surface(line.substr(8));
    for (int e = 0; e < m; ++e) {
      if (!next(line)) throw std::invalid_argument("mesh file: truncated parameter list");
      std::istringstream ls(line);
      for (int a = 0; a < 4; ++a) ls >> els[e].params[a][0] >> els[e].params[a][1];
      if (!ls) throw std::invalid_argument("mesh file: bad parameter line " + std::to_string(e));
    }
  }
  return FractureMesh(std::move(nodes), std::move(els), std::move(surf));
}

inline void save_mesh(const std::string& path, const FractureMesh& mesh) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_mesh(os, mesh);
}

inline FractureMesh load_mesh(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_mesh(is);
}

}  // namespace fracsense
