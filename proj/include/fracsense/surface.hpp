#pragma once

// Exact parametric descriptions of fracture surfaces. Elements of a
// FractureMesh map their reference square bilinearly into parameter space
// and then through one of these maps, so developable and flat patches are
// represented without chordal error.

#include "fracsense/types.hpp"

#include <cmath>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace fracsense {

class Surface {
 public:
  virtual ~Surface() = default;
  virtual Vec3 point(const Vec2& p) const = 0;
  /// Partial derivatives (dX/du, dX/dv).
  virtual std::pair<Vec3, Vec3> tangents(const Vec2& p) const = 0;
  /// Single-line serialization used by the mesh text format.
  virtual std::string serialize() const = 0;
};

/// {(R sin u, v, R cos u)}: axis along e2 through the origin; the normal
/// dX/du x dX/dv points radially outward.
class CylinderSurface final : public Surface {
 public:
  explicit CylinderSurface(double radius) : radius_(radius) {}
  double radius() const { return radius_; }

  Vec3 point(const Vec2& p) const override {
    return {radius_ * std::sin(p[0]), p[1], radius_ * std::cos(p[0])};
  }
  std::pair<Vec3, Vec3> tangents(const Vec2& p) const override {
    return {Vec3(radius_ * std::cos(p[0]), 0.0, -radius_ * std::sin(p[0])), Vec3::UnitY()};
  }
  std::string serialize() const override {
    std::ostringstream os;
    os << std::setprecision(17) << "cylinder " << radius_;
    return os.str();
  }

 private:
  double radius_;
};

/// Polar parametrization (r, phi) -> c + r cos(phi) a + r sin(phi) b of a
/// plane; normal a x b.
class PolarPlaneSurface final : public Surface {
 public:
  PolarPlaneSurface(Vec3 center, Vec3 a, Vec3 b) : c_(std::move(center)), a_(a.normalized()) {
    b_ = (b - b.dot(a_) * a_).normalized();
  }
  const Vec3& center() const { return c_; }
  Vec3 normal() const { return a_.cross(b_); }

  Vec3 point(const Vec2& p) const override {
    return c_ + p[0] * (std::cos(p[1]) * a_ + std::sin(p[1]) * b_);
  }
  std::pair<Vec3, Vec3> tangents(const Vec2& p) const override {
    const Vec3 er = std::cos(p[1]) * a_ + std::sin(p[1]) * b_;
    const Vec3 et = -std::sin(p[1]) * a_ + std::cos(p[1]) * b_;
    return {er, p[0] * et};
  }
  std::string serialize() const override {
    std::ostringstream os;
    os << std::setprecision(17) << "polar " << c_.transpose() << ' ' << a_.transpose() << ' '
       << b_.transpose();
    return os.str();
  }

 private:
  Vec3 c_, a_, b_;
};

/// Height field over a plane: X(u, v) = o + u e_u + v e_v + f(u, v) e_w with
/// f a bivariate polynomial. Used for surfaces fitted to point clouds.
class GraphSurface final : public Surface {
 public:
  struct Term {
    int pu, pv;
    double c;
  };

  GraphSurface(Vec3 origin, Vec3 eu, Vec3 ev, std::vector<Term> terms)
      : o_(std::move(origin)), eu_(eu.normalized()), terms_(std::move(terms)) {
    ev_ = (ev - ev.dot(eu_) * eu_).normalized();
    ew_ = eu_.cross(ev_);
  }
  const Vec3& origin() const { return o_; }
  const Vec3& eu() const { return eu_; }
  const Vec3& ev() const { return ev_; }
  const Vec3& ew() const { return ew_; }
  const std::vector<Term>& terms() const { return terms_; }

  double height(double u, double v) const {
    double f = 0.0;
    for (const auto& t : terms_) f += t.c * std::pow(u, t.pu) * std::pow(v, t.pv);
    return f;
  }

  Vec3 point(const Vec2& p) const override {
    return o_ + p[0] * eu_ + p[1] * ev_ + height(p[0], p[1]) * ew_;
  }
  std::pair<Vec3, Vec3> tangents(const Vec2& p) const override {
    double fu = 0.0, fv = 0.0;
    for (const auto& t : terms_) {
      if (t.pu > 0) fu += t.c * t.pu * std::pow(p[0], t.pu - 1) * std::pow(p[1], t.pv);
      if (t.pv > 0) fv += t.c * t.pv * std::pow(p[0], t.pu) * std::pow(p[1], t.pv - 1);
    }
    return {eu_ + fu * ew_, ev_ + fv * ew_};
  }
  std::string serialize() const override {
    std::ostringstream os;
    os << std::setprecision(17) << "graph " << o_.transpose() << ' ' << eu_.transpose() << ' '
       << ev_.transpose() << ' ' << terms_.size();
    for (const auto& t : terms_) os << ' ' << t.pu << ' ' << t.pv << ' ' << t.c;
    return os.str();
  }

 private:
  Vec3 o_, eu_, ev_, ew_;
  std::vector<Term> terms_;
};

inline std::shared_ptr<const Surface> parse_surface(const std::string& line) {
  std::istringstream is(line);
  std::string kind;
  is >> kind;
  auto read3 = [&is] {
    Vec3 v;
    is >> v[0] >> v[1] >> v[2];
    return v;
  };
  if (kind == "cylinder") {
    double r = 0.0;
    is >> r;
    if (!is) throw std::invalid_argument("surface: malformed cylinder record");
    return std::make_shared<CylinderSurface>(r);
  }
  if (kind == "polar") {
    const Vec3 c = read3(), a = read3(), b = read3();
    if (!is) throw std::invalid_argument("surface: malformed polar record");
    return std::make_shared<PolarPlaneSurface>(c, a, b);
  }
  if (kind == "graph") {
    const Vec3 o = read3(), eu = read3(), ev = read3();
    std::size_t n = 0;
    is >> n;
    std::vector<GraphSurface::Term> terms(n);
    for (auto& t : terms) is >> t.pu >> t.pv >> t.c;
    if (!is) throw std::invalid_argument("surface: malformed graph record");
    return std::make_shared<GraphSurface>(o, eu, ev, std::move(terms));
  }
  throw std::invalid_argument("surface: unknown kind '" + kind + "'");
}

}  // namespace fracsense
