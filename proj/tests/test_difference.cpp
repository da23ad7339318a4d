#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mcf/difference.hpp"

using namespace mcf;

namespace {

double sup_abs(const TensorField& t) {
  double s = 0.0;
  for (double v : t.raw()) s = std::max(s, std::abs(v));
  return s;
}

PairWindow identity_pair(const Immersion& a, const Immersion& b) {
  const double dt = identity_dt(a.grid);
  const double tc = std::round(0.02 / dt) * dt;
  return make_pair_window(identity_window(a, tc, dt), identity_window(b, tc, dt));
}

}  // namespace

TEST(BuildDifference, IdenticalStatesGiveZeroPack) {
  const Immersion e = shapes::ellipse(GridSpec(1, 32), 1.5, 1.0);
  const DifferencePack p = build_difference(e, e);
  EXPECT_TRUE(p.d.is_zero());
  EXPECT_TRUE(p.N.is_zero());
  EXPECT_TRUE(p.W.is_zero());
  for (const auto& t : p.w) EXPECT_TRUE(t.is_zero());
  for (const auto& t : p.U) EXPECT_TRUE(t.is_zero());
  for (const auto& t : p.V) EXPECT_TRUE(t.is_zero());
}

TEST(BuildDifference, ConcentricCircles) {
  GridSpec grid(1, 64);
  const DifferencePack p = build_difference(shapes::circle(grid, 1.0), shapes::circle(grid, 2.0));
  const double s1 = first_derivative_symbol(grid, 1);
  for (std::size_t n = 0; n < grid.nodes(); ++n) EXPECT_NEAR(p.d(n, 0, 0), -3.0 * s1 * s1, 1e-14 * 3.0);
  EXPECT_LE(sup_abs(p.N), 1e-14);
  EXPECT_LE(sup_abs(p.W), 1e-14);
}

TEST(BuildDifference, CircleVersusEllipse) {
  GridSpec grid(1, 64);
  const DifferencePack p = build_difference(shapes::circle(grid, 1.0), shapes::ellipse(grid, 1.5, 1.0));
  double umax = 0.0;
  for (double v : p.geo.norm_squared(p.U)) umax = std::max(umax, v);
  EXPECT_GT(umax, 0.0);
  for (double v : p.Y_norm_squared()) EXPECT_TRUE(std::isfinite(v));
  for (double v : p.Z_norm_squared()) EXPECT_TRUE(std::isfinite(v));
}

TEST(BuildDifference, DirectSumNorms) {
  GridSpec grid(2, 16);
  const DifferencePack p = build_difference(shapes::product_torus(grid, 1.0, 1.5, 0.1),
                                            shapes::perturb(shapes::product_torus(grid, 1.0, 1.5), 0.05, 3, 8));
  const Field Y = p.Y_norm_squared(), Z = p.Z_norm_squared();
  const Field u = p.geo.norm_squared(p.U), v = p.geo.norm_squared(p.V), w = p.geo.norm_squared(p.w);
  const Field d = p.geo.norm_squared(p.d), N = p.geo.norm_squared(p.N), W = p.geo.norm_squared(p.W);
  for (std::size_t n = 0; n < grid.nodes(); ++n) {
    EXPECT_NEAR(Y[n], u[n] + v[n], 1e-14 * Y[n]);
    EXPECT_NEAR(Z[n], w[n] + d[n] + N[n] + W[n], 1e-14 * Z[n]);
  }
}

TEST(BuildDifference, RejectsMismatchedSamples) {
  const Immersion a = shapes::circle(GridSpec(1, 32), 1.0);
  EXPECT_THROW(build_difference(a, shapes::circle(GridSpec(1, 16), 1.0)), ProtocolError);
  EXPECT_THROW(build_difference(a, shapes::circle(GridSpec(1, 32), 1.0, 0.1)), ProtocolError);
}

TEST(CheckDd, IdenticalFlowsGiveZero) {
  const PairWindow w = identity_pair(shapes::ellipse(GridSpec(1, 32), 1.5, 1.0), shapes::ellipse(GridSpec(1, 32), 1.5, 1.0));
  EXPECT_EQ(check_dd(w).sup, 0.0);
  EXPECT_EQ(check_dw(w).sup, 0.0);
}

TEST(CheckDd, CirclePairStencilDefectsCancel) {
  // d/dt g + 2S is the same constant for every circle on a given grid, so the difference cancels.
  GridSpec grid(1, 128);
  const FlowTrajectory A = run_uniform(shapes::circle(grid, 1.0), 1e-4, 1, 7);
  const FlowTrajectory B = run_uniform(shapes::circle(grid, 1.2), 1e-4, 1, 7);
  EXPECT_LE(check_dd(A, B).sup, 1e-6);
  EXPECT_LE(check_dw(A, B).sup, 1e-10);
}

TEST(CheckDd, EllipseVersusCircleConverges) {
  std::vector<double> dd, dw;
  for (int N : {64, 128, 256}) {
    GridSpec grid(1, N);
    const PairWindow w = identity_pair(shapes::ellipse(grid, 1.5, 1.0), shapes::circle(grid, 1.0));
    dd.push_back(check_dd(w).sup);
    dw.push_back(check_dw(w).sup);
  }
  const ConvergenceVerdict vd = classify(dd);
  EXPECT_FALSE(vd.exact);
  EXPECT_GE(vd.finest_order(), 1.9);
  // w is differenced in time only; no spatial truncation remains.
  EXPECT_TRUE(classify(dw).exact);
}

TEST(CheckDd, RejectsMismatchedSampling) {
  GridSpec grid(1, 32);
  const FlowTrajectory A = run_uniform(shapes::circle(grid, 1.0), 1e-3, 1, 7);
  const FlowTrajectory B = run_uniform(shapes::circle(grid, 1.2), 2e-3, 1, 7);
  EXPECT_THROW(check_dd(A, B), ProtocolError);
  const FlowTrajectory C = run_uniform(shapes::circle(grid, 1.2), 1e-3, 1, 6);
  EXPECT_THROW(check_dw(A, C), ProtocolError);
}

TEST(CheckNIntegral, IdenticalAndCirclePairs) {
  GridSpec grid(1, 32);
  const FlowTrajectory A = run_uniform(shapes::circle(grid, 1.0), 1e-3, 2, 20);
  const NIntegralReport same = check_N_integral(A, A);
  for (double v : same.lhs_sup) EXPECT_EQ(v, 0.0);
  for (double v : same.rhs_sup) EXPECT_EQ(v, 0.0);
  const FlowTrajectory B = run_uniform(shapes::circle(grid, 1.2), 1e-3, 2, 20);
  const NIntegralReport pair = check_N_integral(A, B);
  for (double v : pair.lhs_sup) EXPECT_LE(v, 1e-10);
  for (double v : pair.rhs_sup) EXPECT_LE(v, 1e-10);
  EXPECT_TRUE(pair.holds);
}

TEST(CheckNIntegral, EllipsePairHolds) {
  GridSpec grid(1, 64);
  const FlowTrajectory A = run_uniform(shapes::ellipse(grid, 1.5, 1.0), 1e-4, 5, 60);
  const FlowTrajectory B = run_uniform(shapes::ellipse(grid, 1.4, 1.1), 1e-4, 5, 60);
  const NIntegralReport r = check_N_integral(A, B);
  EXPECT_TRUE(r.holds) << r.min_slack;
  EXPECT_GT(r.lhs_sup.front(), 0.0);
  EXPECT_EQ(r.times.size(), 59u);
}

TEST(HeatOperatorY, IdenticalFlowsGiveExactZero) {
  const Immersion e = shapes::ellipse(GridSpec(1, 32), 1.5, 1.0);
  for (double v : heat_operator_Y(identity_pair(e, e))) EXPECT_EQ(v, 0.0);
}

TEST(HeatOperatorY, CirclePairIsSpatiallyConstant) {
  // V carries third derivatives and the time stencil divides by the sample
  // spacing, so rounding grows like eps / (h^3 dt); keep both moderate.
  GridSpec grid(1, 32);
  const PairWindow w = make_pair_window(run_uniform(shapes::circle(grid, 1.0), 5e-3, 1, 7),
                                        run_uniform(shapes::circle(grid, 1.2), 5e-3, 1, 7), 3);
  const Field f = heat_operator_Y(w);
  const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
  EXPECT_GT(*hi, 0.0);
  EXPECT_LE(*hi - *lo, 1e-10 * *hi);
}

TEST(HeatOperatorY, QuadraticInSmallPerturbation) {
  GridSpec grid(1, 64);
  const double eps = 1e-4;
  const Immersion a = shapes::ellipse(grid, 1.5, 1.0);
  const Field f1 = heat_operator_Y(identity_pair(a, shapes::ellipse(grid, 1.5 + eps, 1.0)));
  const Field f2 = heat_operator_Y(identity_pair(a, shapes::ellipse(grid, 1.5 + 2.0 * eps, 1.0)));
  std::size_t worst = 0;
  for (std::size_t n = 1; n < f1.size(); ++n)
    if (f1[n] > f1[worst]) worst = n;
  EXPECT_NEAR(f2[worst] / f1[worst], 4.0, 0.01);
}

TEST(VerifyInequalities, IdenticalFlowsAreDegenerate) {
  GridSpec grid(1, 32);
  const FlowTrajectory A = run_uniform(shapes::ellipse(grid, 1.5, 1.0), 1e-3, 2, 30);
  const InequalityReport r = verify_inequalities(A, A, 0.01);
  EXPECT_EQ(r.C1, 0.0);
  EXPECT_EQ(r.C2, 0.0);
  EXPECT_EQ(r.flagged, 0u);
  ASSERT_FALSE(r.rows.empty());
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.energy_Y, 0.0);
    EXPECT_EQ(row.energy_Z, 0.0);
    EXPECT_EQ(row.lhs1_sup, 0.0);
    EXPECT_EQ(row.lhs2_sup, 0.0);
  }
  const GronwallReport g = forward_gronwall(r);
  for (const auto& row : g.rows) EXPECT_EQ(row.energy, 0.0);
}

TEST(VerifyInequalities, DeltaMustLieInsideWindow) {
  GridSpec grid(1, 16);
  const FlowTrajectory A = run_uniform(shapes::circle(grid, 1.0), 1e-3, 1, 12);
  EXPECT_THROW(verify_inequalities(A, A, 0.0), DomainError);
  EXPECT_THROW(verify_inequalities(A, A, 0.05), DomainError);
  EXPECT_THROW(verify_inequalities(A, A, 0.001), ProtocolError);  // no centred stencil at t = 0.001
}

TEST(VerifyInequalities, CirclePairIsFiniteAndShrinksWithDelta) {
  GridSpec grid(1, 32);
  const auto [A, B] = run_pair(shapes::circle(grid, 1.0), shapes::circle(grid, 1.2), 0.1, 2.5e-4, 4);
  const InequalityReport r = verify_inequalities(A, B, 0.01, 0.1);
  EXPECT_TRUE(std::isfinite(r.C1));
  EXPECT_TRUE(std::isfinite(r.C2));
  EXPECT_GT(r.C1, 0.0);
  EXPECT_EQ(r.flagged, 0u);
  EXPECT_NEAR(r.rows.front().t, 0.01, 1e-12);
  EXPECT_NEAR(r.rows.back().t, 0.1, 1e-12);
  const InequalityReport later = r.restricted(0.05);
  EXPECT_LE(later.C1, r.C1);
  EXPECT_LE(later.C2, r.C2);
  const InequalityReport direct = verify_inequalities(A, B, 0.05, 0.1);
  EXPECT_EQ(direct.C1, later.C1);
  EXPECT_EQ(direct.C2, later.C2);
}

namespace {

double worst_relative_gap(const InequalityReport& r1, const InequalityReport& r2) {
  auto rel = [](double a, double b) { return a == b ? 0.0 : std::abs(a - b) / std::max(std::abs(a), std::abs(b)); };
  double worst = std::max(rel(r1.C1, r2.C1), rel(r1.C2, r2.C2));
  for (std::size_t k = 0; k < r1.rows.size(); ++k)
    worst = std::max({worst, rel(r1.rows[k].energy_Y, r2.rows[k].energy_Y),
                      rel(r1.rows[k].energy_Z, r2.rows[k].energy_Z), rel(r1.rows[k].lhs1_sup, r2.rows[k].lhs1_sup)});
  return worst;
}

InequalityReport moved_report(const SymmetryAction& s) {
  GridSpec grid(1, 32);
  const Immersion a = shapes::ellipse(grid, 1.5, 1.0), b = shapes::circle(grid, 1.0);
  const auto [A, B] = run_pair(apply_symmetry(a, s), apply_symmetry(b, s), 0.03, 2.5e-3, 1);
  return verify_inequalities(A, B, 0.01, 0.03);
}

}  // namespace

TEST(VerifyInequalities, QuarterTurnOfBothFlowsIsExact) {
  SymmetryAction s = SymmetryAction::identity(GridSpec(1, 32), 2);
  const InequalityReport r1 = moved_report(s);
  s.Q = {{0.0, -1.0}, {1.0, 0.0}};
  const InequalityReport r2 = moved_report(s);
  ASSERT_EQ(r1.rows.size(), r2.rows.size());
  EXPECT_LE(worst_relative_gap(r1, r2), 1e-14);
}

TEST(VerifyInequalities, GenericRigidMotionOfBothFlows) {
  // Rounding of a generic rotation is amplified by third differences and the
  // time stencil (measured 2e-12 to 7e-12 here), so the bound sits above that.
  SymmetryAction s = SymmetryAction::identity(GridSpec(1, 32), 2);
  const InequalityReport r1 = moved_report(s);
  const double c = std::cos(0.7), si = std::sin(0.7);
  s.Q = {{c, -si}, {si, c}};
  s.b = {0.3, -2.0};
  const InequalityReport r2 = moved_report(s);
  ASSERT_EQ(r1.rows.size(), r2.rows.size());
  EXPECT_LE(worst_relative_gap(r1, r2), 1e-10);
}

TEST(ForwardGronwall, CirclePairStaysInsideEnvelope) {
  GridSpec grid(1, 32);
  const auto [A, B] = run_pair(shapes::circle(grid, 1.0), shapes::circle(grid, 1.2), 0.1, 2.5e-4, 4);
  const GronwallReport g = forward_gronwall(A, B, 0.01);
  EXPECT_TRUE(g.holds);
  EXPECT_GT(g.C_star, g.C_fitted);
  for (const auto& row : g.rows) {
    EXPECT_LE(row.rate, row.bound);
    EXPECT_LE(row.energy, row.envelope * (1.0 + 1e-9));
  }
}

TEST(ForwardGronwall, EnergiesAreQuadraticInPerturbation) {
  GridSpec grid(1, 32);
  const double eps = 1e-4;
  const Immersion a = shapes::ellipse(grid, 1.5, 1.0);
  const auto [A1, B1] = run_pair(a, shapes::ellipse(grid, 1.5 + eps, 1.0), 0.02, 2.5e-4, 4);
  const auto [A2, B2] = run_pair(a, shapes::ellipse(grid, 1.5 + 2.0 * eps, 1.0), 0.02, 2.5e-4, 4);
  const GronwallReport g1 = forward_gronwall(A1, B1, 0.005);
  const GronwallReport g2 = forward_gronwall(A2, B2, 0.005);
  EXPECT_NEAR(g2.rows.front().energy / g1.rows.front().energy, 4.0, 0.01);
}

TEST(InequalityReport, SerializesMetadataAndEnergyBlock) {
  GridSpec grid(1, 16);
  const auto [A, B] = run_pair(shapes::circle(grid, 1.0), shapes::circle(grid, 1.2), 0.02, 1e-3, 1);
  const InequalityReport r = verify_inequalities(A, B, 0.005, 0.02);
  std::ostringstream os;
  write_inequality_report(os, r);
  const std::string s = os.str();
  for (const char* key : {"limitation: ", "N: 16", "delta: 0.005", "T: 0.02", "K: ", "K_tilde: ", "C1: ", "C2: ",
                          "t,energy_Y,energy_Z,energy_core"})
    EXPECT_NE(s.find(key), std::string::npos) << key;
  EXPECT_NE(s.find("not integrated"), std::string::npos);
}
