#include "fracsense/glsm.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

using namespace fracsense;

namespace {

const ElasticMedium kMed = ElasticMedium::from_speeds(1.0, 2.08, 1.0);
const double kLambdaS = 0.385;
const double kOmega = 2 * kPi / kLambdaS;

struct Scene {
  FractureMesh mesh = build_cylindrical_patch(0.7, 0.55, 0.35, 6, 7);
  ObservationGrid grid{8, 6};
  FarFieldDataset data;
  FarFieldOperator op;

  explicit Scene(const StiffnessField& K) {
    const auto waves = herglotz_incidents(grid, kOmega);
    const auto res = solve_forward(mesh, K, waves, kMed, kOmega);
    data = synthesize_dataset(mesh, res.fods, waves, grid, kMed, kOmega);
    op = assemble_F(data, grid, kMed);
  }
};

const Scene& scene() {
  static const Scene s(StiffnessField::diagonal(cd(20, -5), cd(12, -3), cd(12, -3)));
  return s;
}

CVector random_vector(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CVector v(n);
  for (int i = 0; i < n; ++i) v[i] = cd(g(rng), g(rng));
  return v;
}

GlsmParams params_for(const FarFieldOperator& op) { return GlsmParams::relative(op.norm, 0.05); }

}  // namespace

TEST(FSharp, HermitianPsdUnchanged) {
  std::mt19937_64 rng(1);
  CMatrix A(5, 5);
  for (int j = 0; j < 5; ++j) A.col(j) = random_vector(5, rng);
  const CMatrix F = A * A.adjoint();
  EXPECT_LT((f_sharp(F) - F).norm(), 1e-12 * F.norm());
}

TEST(FSharp, PureImaginaryIdentity) {
  const CMatrix F = kI * CMatrix::Identity(4, 4);
  EXPECT_LT((f_sharp(F) - CMatrix::Identity(4, 4)).norm(), 1e-12);
}

TEST(FSharp, HandComputedTwoByTwo) {
  CMatrix F = CMatrix::Zero(2, 2);
  F(0, 1) = 1.0;
  // |F + F*| = I (eigenvalues +-1); (F - F*)/(2i) = [[0, -i/2], [i/2, 0]]
  CMatrix expect(2, 2);
  expect << cd(0.5, 0), cd(0, -0.5), cd(0, 0.5), cd(0.5, 0);
  EXPECT_LT((f_sharp(F) - expect).norm(), 1e-12);
}

TEST(FSharp, RejectsNonSquare) { EXPECT_THROW(f_sharp(CMatrix::Zero(2, 3)), std::invalid_argument); }

TEST(FSharp, OperatorSurrogateIsPsd) {
  const auto& op = scene().op;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(op.F_sharp);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10 * es.eigenvalues().cwiseAbs().maxCoeff());
  EXPECT_LT((op.F_sharp - op.F_sharp.adjoint()).norm(), 1e-12 * op.F_sharp.norm());
  // the clamp removes only a small negative part of the raw surrogate
  EXPECT_LE(-op.sharp_min_eig, 1e-3 * es.eigenvalues().maxCoeff());
}

TEST(AssembleF, UnitDensityExtractsColumn) {
  const auto& s = scene();
  for (int j : {0, 1, 2, 37, 143}) {
    CVector g = CVector::Zero(s.op.size());
    g[j] = 1.0;
    const CVector expect = std::sqrt(s.grid.weight(j / 3)) * s.op.row_scale[j] * s.op.data_vector(s.data.records[j]);
    EXPECT_LT((s.op.F * g - expect).norm(), 1e-14 * expect.norm());
  }
}

TEST(AssembleF, Linear) {
  const auto& op = scene().op;
  std::mt19937_64 rng(2);
  const CVector g1 = random_vector(op.size(), rng), g2 = random_vector(op.size(), rng);
  const cd a(0.3, -1.2), b(2.0, 0.5);
  const CVector lhs = op.F * (a * g1 + b * g2), rhs = a * (op.F * g1) + b * (op.F * g2);
  EXPECT_LT((lhs - rhs).norm(), 1e-12 * rhs.norm());
}

TEST(AssembleF, WeightsEnterAsSquareRootsOnBothSides) {
  // F_ij = sqrt(w_i w_j) s_i s_j raw_ij, so scaling every weight by c scales F by c.
  const auto& s = scene();
  for (int i : {0, 50, 100})
    for (int j : {3, 77, 140}) {
      const auto& smp = s.data.records[j][i / 3];
      const auto fr = s.grid.frame(i / 3);
      const cd raw = to_complex(fr[i % 3]).dot(i % 3 == 0 ? smp.up_inf : smp.us_inf);
      const cd expect = std::sqrt(s.grid.weight(i / 3) * s.grid.weight(j / 3)) * s.op.row_scale[i] *
                        s.op.row_scale[j] * raw;
      EXPECT_LT(std::abs(s.op.F(i, j) - expect), 1e-14 * s.op.norm);
    }
}

TEST(AssembleF, RejectsMismatchedData) {
  const auto& s = scene();
  EXPECT_THROW(assemble_F(s.data, ObservationGrid(8, 5), kMed), Error);
  auto bad = s.data;
  bad.records.pop_back();
  bad.incidents.pop_back();
  EXPECT_THROW(assemble_F(bad, s.grid, kMed), Error);
  bad = s.data;
  std::swap(bad.records[0], bad.records[1]);
  std::swap(bad.incidents[0], bad.incidents[1]);
  EXPECT_THROW(assemble_F(bad, s.grid, kMed), Error);
}

TEST(Minimizer, ZeroDataZeroDensity) {
  const auto& op = scene().op;
  EXPECT_EQ(glsm_minimizer(op, CVector::Zero(op.size()), params_for(op)).coeffs.norm(), 0.0);
}

TEST(Minimizer, NormalEquationsAndConvexityProbe) {
  const auto& op = scene().op;
  const auto p = params_for(op);
  const GlsmSolver solver(op, p);
  const CVector phi = op.pattern(Vec3(0.0, 0.05, 0.3), Vec3::UnitZ());
  const CVector g = solver.minimize(phi).coeffs;
  const CMatrix A = op.F.adjoint() * op.F + p.alpha * (op.F_sharp + p.delta * CMatrix::Identity(op.size(), op.size()));
  EXPECT_LE((A * g - op.F.adjoint() * phi).norm(), 1e-10 * (op.F.adjoint() * phi).norm());
  const double j0 = solver.functional(g, phi);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    CVector d = random_vector(op.size(), rng);
    d *= 1e-4 * g.norm() / d.norm();
    EXPECT_GT(solver.functional(g + d, phi), j0);
    EXPECT_GT(solver.functional(g - d, phi), j0);
  }
}

TEST(Minimizer, NormNonincreasingInAlpha) {
  const auto& op = scene().op;
  const CVector phi = op.pattern(Vec3(0.1, -0.1, 0.35), Vec3::UnitY());
  auto p = params_for(op);
  const double a0 = p.alpha;
  double prev = 1e300;
  for (int i = 0; i < 10; ++i) {
    p.alpha = a0 * std::pow(4.0, i - 5);
    const double n = glsm_minimizer(op, phi, p).coeffs.norm();
    EXPECT_LE(n, prev * (1 + 1e-12));
    prev = n;
  }
}

TEST(Indicator, PositiveAndFinite) {
  const auto& op = scene().op;
  const auto p = params_for(op);
  for (const Vec3& z : {Vec3(0, 0, 0.35), Vec3(1, 1, 1), Vec3(-0.3, 0.2, -0.4)})
    for (const Vec3& n : trial_normals()) {
      const double c = glsm_indicator(op, p, z, n);
      EXPECT_GT(c, 0.0);
      EXPECT_TRUE(std::isfinite(c));
    }
}

TEST(Indicator, ScalingPreservesRanking) {
  // F -> cF with alpha and delta following the operator norm and a fixed
  // test pattern: minimizer g / c, indicator scaled by c^{1/2}.
  const auto& s = scene();
  const double c = 7.5;
  auto scaled = s.data;
  for (auto& rec : scaled.records)
    for (auto& smp : rec) {
      smp.up_inf *= c;
      smp.us_inf *= c;
    }
  const auto op2 = assemble_F(scaled, s.grid, kMed);
  EXPECT_NEAR(op2.norm, c * s.op.norm, 1e-10 * op2.norm);
  const GlsmSolver a(s.op, params_for(s.op)), b(op2, params_for(op2));
  const std::vector<Vec3> zs = {Vec3(0, 0, 0.35), Vec3(0.1, 0.2, 0.3), Vec3(0, 0, 0), Vec3(0.3, -0.3, 0.5),
                                Vec3(-0.2, 0.1, 0.2)};
  std::vector<int> ba, bb;
  const auto va = a.best_over_normals(zs, ba), vb = b.best_over_normals(zs, bb);
  EXPECT_EQ(ba, bb);
  for (std::size_t i = 0; i < zs.size(); ++i) EXPECT_NEAR(vb[i] / va[i], std::sqrt(c), 1e-8);
  std::vector<int> ra(zs.size()), rb(zs.size());
  for (std::size_t i = 0; i < zs.size(); ++i) ra[i] = rb[i] = static_cast<int>(i);
  std::sort(ra.begin(), ra.end(), [&](int x, int y) { return va[x] < va[y]; });
  std::sort(rb.begin(), rb.end(), [&](int x, int y) { return vb[x] < vb[y]; });
  EXPECT_EQ(ra, rb);
}

TEST(Indicator, InvariantUnderDirectionRelabeling) {
  const auto& op = scene().op;
  const int nd = op.grid.size();
  std::vector<int> perm(nd);
  for (int k = 0; k < nd; ++k) perm[k] = k;
  std::mt19937_64 rng(4);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> P(3 * nd);
  for (int k = 0; k < nd; ++k)
    for (int c = 0; c < 3; ++c) P.indices()[3 * k + c] = 3 * perm[k] + c;
  const CMatrix F2 = P * op.F * P.transpose();
  const CMatrix S2 = f_sharp(F2);
  EXPECT_LT((S2 - P * f_sharp(op.F) * P.transpose()).norm(), 1e-10 * S2.norm());
  FarFieldOperator op2 = op;
  op2.F = F2;
  op2.F_sharp = P * op.F_sharp * P.transpose();
  const auto p = params_for(op);
  const CVector phi = op.pattern(Vec3(0.05, 0.0, 0.33), Vec3(0, 0, 1));
  const GlsmSolver a(op, p), b(op2, p);
  const auto ga = a.minimize(phi), gb = b.minimize(P * phi);
  EXPECT_LT((gb.coeffs - P * ga.coeffs).norm(), 1e-8 * ga.coeffs.norm());
  EXPECT_NEAR(b.characteristic(gb), a.characteristic(ga), 1e-8 * a.characteristic(ga));
}

TEST(IndicatorMap, PositiveDeterministicPeakNearSurface) {
  const auto& s = scene();
  SamplingGrid g{Vec3(-0.4, -0.45, -0.05), Vec3(0.4, 0.45, 0.55), 9, 10, 7};
  const auto p = params_for(s.op);
  const auto m1 = indicator_map(s.op, p, g);
  const auto m2 = indicator_map(s.op, p, g);
  EXPECT_TRUE(m1 == m2);
  for (double v : m1.value) EXPECT_GT(v, 0.0);
  const int peak = static_cast<int>(std::max_element(m1.value.begin(), m1.value.end()) - m1.value.begin());
  const Vec3 z = g.point(peak);
  EXPECT_LE((closest_point(s.mesh, z).x - z).norm(), kLambdaS / 4);
}

TEST(IndicatorMap, FileRoundTrip) {
  IndicatorMap m;
  m.grid = {Vec3(-1, 0, 0), Vec3(1, 1, 2), 3, 2, 2};
  for (int i = 0; i < m.grid.size(); ++i) {
    m.value.push_back(0.1 * i + 1.0 / 3.0);
    m.normal.push_back(trial_normals()[i % 13]);
  }
  std::stringstream ss;
  write_indicator_map(ss, m);
  EXPECT_TRUE(read_indicator_map(ss) == m);
  std::stringstream bad("# indicator 2 2 2 0 0 0 1 1 1\n0 0 0 1");
  EXPECT_THROW(read_indicator_map(bad), std::invalid_argument);
}

namespace {

/// Map equal to 1 on the grid layer z = z0 (normal +z) and 1e-3 elsewhere.
IndicatorMap planar_map(double z0) {
  IndicatorMap m;
  m.grid = {Vec3(-0.5, -0.4, -0.2), Vec3(0.5, 0.4, 0.2), 11, 9, 9};
  for (int i = 0; i < m.grid.size(); ++i) {
    const Vec3 x = m.grid.point(i);
    m.value.push_back(std::abs(x[2] - z0) < 1e-9 ? 1.0 : 1e-3);
    m.normal.push_back(Vec3::UnitZ());
  }
  return m;
}

}  // namespace

TEST(ExtractSurface, PlanarMapGivesPlane) {
  const auto m = planar_map(0.05);
  const auto s = extract_surface(m, 0.5, {.n_u = 6, .n_v = 5});
  const double h = m.grid.spacing().maxCoeff();
  EXPECT_EQ(s.selected, 99);
  EXPECT_FALSE(s.residual_warning);
  for (const auto& x : s.mesh.nodes()) EXPECT_NEAR(x[2], 0.05, h);
  for (int e = 0; e < s.mesh.num_elements(); ++e) EXPECT_GT(s.mesh.eval(e, 0, 0).n.dot(Vec3::UnitZ()), 0.999);
  EXPECT_NEAR(s.mesh.area(), 1.0 * 0.8, 0.25);
}

TEST(ExtractSurface, ThresholdMonotoneAndErrors) {
  const auto& s = scene();
  SamplingGrid g{Vec3(-0.4, -0.45, -0.05), Vec3(0.4, 0.45, 0.55), 7, 8, 6};
  const auto m = indicator_map(s.op, params_for(s.op), g);
  const auto hi = select_points(m, 0.99), lo = select_points(m, 0.5);
  EXPECT_FALSE(hi.empty());
  for (int i : hi) EXPECT_TRUE(std::find(lo.begin(), lo.end(), i) != lo.end());
  EXPECT_THROW(select_points(m, 0.0), std::invalid_argument);
  EXPECT_THROW(select_points(m, 1.0), std::invalid_argument);
  auto flat = planar_map(0.0);
  std::fill(flat.value.begin(), flat.value.end(), 1e-3);
  flat.value[0] = 1.0;
  EXPECT_THROW(extract_surface(flat, 0.5, {}), Error);
}

TEST(Hausdorff, IdenticalAndShifted) {
  const auto a = build_flat_rectangle(Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY(), 1.0, 0.5, 4, 3);
  const auto b = build_flat_rectangle(Vec3(0, 0, 0.1), Vec3::UnitX(), Vec3::UnitY(), 1.0, 0.5, 4, 3);
  EXPECT_LT(hausdorff_distance(a, a), 1e-12);
  EXPECT_NEAR(hausdorff_distance(a, b), 0.1, 1e-9);
}

TEST(TrialNormals, ThirteenDistinctUnitDirections) {
  const auto n = trial_normals();
  ASSERT_EQ(n.size(), 13u);
  for (std::size_t i = 0; i < n.size(); ++i) {
    EXPECT_NEAR(n[i].norm(), 1.0, 1e-14);
    for (std::size_t j = 0; j < i; ++j) EXPECT_LT(std::abs(n[i].dot(n[j])), 1.0 - 1e-6);
  }
}
