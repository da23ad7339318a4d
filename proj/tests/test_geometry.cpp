#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mcf/geometry.hpp"

using namespace mcf;

namespace {

double sup(const Field& f) {
  double s = 0.0;
  for (double v : f) s = std::max(s, std::abs(v));
  return s;
}

double sup_abs(const TensorField& t) {
  double s = 0.0;
  for (double v : t.raw()) s = std::max(s, std::abs(v));
  return s;
}

double s1(const GridSpec& g) { return std::sin(g.spacing()) / g.spacing(); }
double s2(const GridSpec& g) { return std::pow(std::sin(g.spacing() / 2) / (g.spacing() / 2), 2); }

Immersion wavy_torus(int N) { return shapes::product_torus(GridSpec(2, N), 1.0, 1.0, 0.1); }

}  // namespace

TEST(InducedMetric, CircleRadiusTwo) {
  GridSpec grid(1, 8);
  const MetricPack mp = induced_metric(shapes::circle(grid, 2.0));
  const double expected = 4.0 * s1(grid) * s1(grid);
  EXPECT_NEAR(expected, 3.242278, 1e-6);
  for (std::size_t n = 0; n < grid.nodes(); ++n) {
    EXPECT_NEAR(mp.g(n, 0, 0), expected, 1e-14);
    EXPECT_NEAR(mp.ginv(n, 0, 0) * mp.g(n, 0, 0), 1.0, 1e-15);
  }
}

TEST(InducedMetric, FlatProductTorus) {
  for (int N : {8, 16, 64}) {
    GridSpec grid(2, N);
    const MetricPack mp = induced_metric(shapes::product_torus(grid, 1.0, 1.0));
    const double e = s1(grid) * s1(grid);
    for (std::size_t n = 0; n < grid.nodes(); ++n) {
      EXPECT_NEAR(mp.g(n, 0, 0), e, 1e-14);
      EXPECT_NEAR(mp.g(n, 1, 1), e, 1e-14);
      EXPECT_LE(std::abs(mp.g(n, 0, 1)), 1e-15);
      EXPECT_EQ(mp.g(n, 0, 1), mp.g(n, 1, 0));
    }
  }
}

TEST(InducedMetric, InverseAndSymmetryOnGenericInput) {
  const Immersion t = shapes::perturb(wavy_torus(16), 0.05, 2, 1);
  const MetricPack mp = induced_metric(t);
  for (std::size_t n = 0; n < t.nodes(); ++n) {
    EXPECT_EQ(mp.g(n, 0, 1), mp.g(n, 1, 0));
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        double s = 0;
        for (int k = 0; k < 2; ++k) s += mp.g(n, i, k) * mp.ginv(n, k, j);
        EXPECT_NEAR(s, i == j ? 1.0 : 0.0, 1e-10);
      }
  }
}

TEST(InducedMetric, DegenerateImmersionNamesNode) {
  GridSpec grid(1, 16);
  Immersion point(grid, 2);
  try {
    (void)induced_metric(point);
    FAIL() << "expected a degenerate-immersion error";
  } catch (const DegenerateImmersionError& e) {
    EXPECT_NE(std::string(e.what()).find("(0)"), std::string::npos);
  }
}

// The metric is constant up to rounding, so Gamma is rounding noise amplified by 1/h.
TEST(Christoffels, VanishOnConstantMetrics) {
  for (double r : {0.5, 1.0, 3.0}) {
    GridSpec grid(1, 64);
    const GeometryPack geo = compute_geometry(shapes::circle(grid, r));
    EXPECT_LE(sup_abs(geo.christoffel), 20 * 2.2e-16 / grid.spacing());
  }
  GridSpec grid(2, 32);
  const GeometryPack geo = compute_geometry(shapes::product_torus(grid, 1.0, 2.0));
  EXPECT_LE(sup_abs(geo.christoffel), 20 * 2.2e-16 / grid.spacing());
}

TEST(Christoffels, LowerIndexSymmetry) {
  const GeometryPack geo = compute_geometry(shapes::perturb(wavy_torus(16), 0.05, 2, 3));
  for (std::size_t n = 0; n < geo.nodes(); ++n)
    for (int k = 0; k < 2; ++k) EXPECT_EQ(geo.christoffel(n, k, 0, 1), geo.christoffel(n, k, 1, 0));
}

TEST(SecondFundamentalForm, UnitCircleMeanCurvature) {
  GridSpec grid(1, 64);
  const GeometryPack geo = compute_geometry(shapes::circle(grid, 1.0));
  const double expected = s2(grid) / (s1(grid) * s1(grid));
  EXPECT_NEAR(expected, 1.002413, 1e-6);
  const Field H = geo.mean_curvature_norm();
  for (std::size_t n = 0; n < grid.nodes(); ++n) {
    EXPECT_NEAR(H[n], expected, 1e-12);
    // inward: H is antiparallel to X
    EXPECT_LT(geo.H[0][n] * std::cos(grid.coordinate(n, 0)) + geo.H[1][n] * std::sin(grid.coordinate(n, 0)), 0.0);
  }
}

TEST(SecondFundamentalForm, HugeCircleScalesInverselyWithRadius) {
  GridSpec grid(1, 64);
  const GeometryPack geo = compute_geometry(shapes::circle(grid, 1e3));
  const double expected = 1e-3 * s2(grid) / (s1(grid) * s1(grid));
  for (double v : geo.mean_curvature_norm()) EXPECT_NEAR(v, expected, 1e-15);
}

TEST(SecondFundamentalForm, ProductTorusHasNoMixedComponent) {
  const GeometryPack geo = compute_geometry(shapes::product_torus(GridSpec(2, 32), 1.0, 0.5));
  for (const auto& ha : geo.h)
    for (std::size_t n = 0; n < geo.nodes(); ++n) EXPECT_LE(std::abs(ha(n, 0, 1)), 1e-14);
}

TEST(SecondFundamentalForm, NormalityConvergesAtSecondOrder) {
  double prev = 0.0;
  for (int N : {32, 64, 128}) {
    const double r = sup(normality_residual(compute_geometry(shapes::ellipse(GridSpec(1, N), 1.5, 1.0))));
    if (prev > 0.0) {
      EXPECT_GE(std::log2(prev / r), 1.9) << "N=" << N;
    }
    prev = r;
  }
  prev = 0.0;
  for (int N : {16, 32, 64}) {
    const double r = sup(normality_residual(compute_geometry(wavy_torus(N))));
    if (prev > 0.0) {
      EXPECT_GE(std::log2(prev / r), 1.9) << "N=" << N;
    }
    prev = r;
  }
}

TEST(GradientTrace, EqualsIntrinsicDimension) {
  std::vector<Immersion> samples = {
      shapes::circle(GridSpec(1, 16), 0.3),
      shapes::ellipse(GridSpec(1, 64), 1.5, 1.0),
      shapes::perturb(shapes::ellipse(GridSpec(1, 32), 2.0, 0.5), 0.1, 3, 5),
      shapes::product_torus(GridSpec(2, 16), 1.0, 0.4),
      shapes::perturb(wavy_torus(16), 0.05, 2, 8),
      shapes::revolution_torus(GridSpec(2, 32, 4), 2.0, 0.5),
  };
  for (const auto& imm : samples) {
    const Field tr = gradient_trace(compute_geometry(imm));
    for (double v : tr) EXPECT_NEAR(v, imm.grid.m, 1e-12);
  }
}

// Gamma is assembled from the same difference operator that nabla uses, so
// Gamma_{c,ab} + Gamma_{b,ac} = d_a g_bc holds algebraically and nabla g vanishes
// up to rounding on every input, not just to O(h^2).
TEST(CovariantDerivative, MetricCompatibility) {
  const std::vector<Immersion> samples = {
      shapes::circle(GridSpec(1, 64), 1.0),
      shapes::ellipse(GridSpec(1, 128), 1.5, 1.0),
      shapes::perturb(wavy_torus(32), 0.05, 2, 12),
      shapes::revolution_torus(GridSpec(2, 32, 4), 2.0, 0.7),
  };
  for (const auto& imm : samples) {
    const GeometryPack geo = compute_geometry(imm);
    for (double v : geo.norm_squared(geo.nabla(geo.g))) EXPECT_LE(std::sqrt(v), 1e-10);
  }
}

TEST(CovariantDerivative, ScalarIsPartialAndCircleMeanCurvatureIsParallel) {
  const GeometryPack geo = compute_geometry(shapes::circle(GridSpec(1, 64), 1.0));
  const TensorFamily dH = geo.nabla(geo.H_fields());
  for (int a = 0; a < 2; ++a) {
    const Field p = partial(geo.grid, geo.H[a], 0);
    for (std::size_t n = 0; n < geo.nodes(); ++n) EXPECT_EQ(dH[a](n, 0), p[n]);
  }
  // |nabla H|_g summed over alpha measures the change of the vector H along the curve,
  // which is nonzero; the rotationally invariant quantity is nabla |H|^2.
  TensorField H2(geo.grid, 0);
  for (std::size_t n = 0; n < geo.nodes(); ++n) H2(n) = geo.H[0][n] * geo.H[0][n] + geo.H[1][n] * geo.H[1][n];
  for (double v : geo.norm_squared(geo.nabla(H2))) EXPECT_LE(std::sqrt(v), 1e-12);
}

TEST(CovariantDerivative, ValenceAndShapeErrors) {
  const GeometryPack a = compute_geometry(shapes::circle(GridSpec(1, 16), 1.0));
  const GeometryPack b = compute_geometry(shapes::circle(GridSpec(1, 32), 1.0));
  EXPECT_THROW(covariant_derivative(a.g, b.christoffel), ShapeError);
  EXPECT_THROW(trace_first_pair(a.christoffel, a.ginv), ShapeError);
}

TEST(CurvatureIntrinsic, FlatTorusAndCurves) {
  const GeometryPack flat = compute_geometry(shapes::product_torus(GridSpec(2, 32), 1.0, 0.6));
  EXPECT_LE(sup_abs(curvature_intrinsic(flat).riemann), 1e-10);
  const GeometryPack curve = compute_geometry(shapes::ellipse(GridSpec(1, 32), 1.5, 1.0));
  EXPECT_TRUE(curvature_intrinsic(curve).riemann.is_zero());
  EXPECT_TRUE(curvature_gauss(curve).riemann.is_zero());
  EXPECT_TRUE(curvature_gauss(curve).ricci.is_zero());
}

TEST(CurvatureGauss, FlatTorusVanishes) {
  const GeometryPack flat = compute_geometry(shapes::product_torus(GridSpec(2, 32), 1.0, 0.6));
  EXPECT_LE(sup_abs(curvature_gauss(flat).riemann), 1e-13);
}

TEST(CurvatureGauss, AlgebraicSymmetriesOnRandomTori) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const Immersion t = shapes::perturb(wavy_torus(16), 0.05, 2, rng());
    const GeometryPack geo = compute_geometry(t);
    const TensorField& R = curvature_gauss(geo).riemann;
    for (std::size_t n = 0; n < geo.nodes(); ++n)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
          for (int k = 0; k < 2; ++k)
            for (int l = 0; l < 2; ++l) {
              EXPECT_NEAR(R(n, i, j, k, l), -R(n, j, i, k, l), 1e-10);
              EXPECT_NEAR(R(n, i, j, k, l), -R(n, i, j, l, k), 1e-10);
              EXPECT_NEAR(R(n, i, j, k, l), R(n, k, l, i, j), 1e-10);
              EXPECT_NEAR(R(n, i, j, k, l) + R(n, i, k, l, j) + R(n, i, l, j, k), 0.0, 1e-10);
            }
  }
}

TEST(CurvatureIntrinsic, SymmetriesHoldToSecondOrder) {
  auto defect = [](int N) {
    const GeometryPack geo = compute_geometry(wavy_torus(N));
    const TensorField& R = curvature_intrinsic(geo).riemann;
    double worst = 0.0;
    for (std::size_t n = 0; n < geo.nodes(); ++n)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
          for (int k = 0; k < 2; ++k)
            for (int l = 0; l < 2; ++l) {
              worst = std::max(worst, std::abs(R(n, i, j, k, l) + R(n, j, i, k, l)));
              worst = std::max(worst, std::abs(R(n, i, j, k, l) + R(n, i, j, l, k)));
              worst = std::max(worst, std::abs(R(n, i, j, k, l) - R(n, k, l, i, j)));
            }
    return worst;
  };
  const double a = defect(32), b = defect(64);
  EXPECT_LE(b, 1e-2);
  EXPECT_TRUE(b <= 1e-12 || std::log2(a / b) >= 1.9) << a << ' ' << b;
}

// Convention audit: on the torus of revolution the outer equator has positive
// Gauss curvature K = cos v / (r (R + r cos v)); both routes must reproduce
// R_uvuv = K det g with that sign.
TEST(CurvatureConvention, TorusOfRevolutionMatchesClosedForm) {
  const double Rc = 2.0, r = 0.7;
  double prev_g = 0.0, prev_i = 0.0;
  for (int N : {32, 64, 128}) {
    GridSpec grid(2, N);
    const GeometryPack geo = compute_geometry(shapes::revolution_torus(grid, Rc, r));
    const CurvaturePack gauss = curvature_gauss(geo);
    const CurvaturePack intr = curvature_intrinsic(geo);
    double err_g = 0.0, err_i = 0.0;
    for (std::size_t n = 0; n < geo.nodes(); ++n) {
      const double v = grid.coordinate(n, 1);
      const double K = std::cos(v) / (r * (Rc + r * std::cos(v)));
      const double ref = K * std::pow(Rc + r * std::cos(v), 2) * r * r;
      err_g = std::max(err_g, std::abs(gauss.riemann(n, 0, 1, 0, 1) - ref));
      err_i = std::max(err_i, std::abs(intr.riemann(n, 0, 1, 0, 1) - ref));
    }
    if (prev_g > 0.0) {
      EXPECT_GE(std::log2(prev_g / err_g), 1.9) << N;
      EXPECT_GE(std::log2(prev_i / err_i), 1.9) << N;
    }
    prev_g = err_g;
    prev_i = err_i;
  }
  EXPECT_LE(prev_g, 1e-2);
  EXPECT_LE(prev_i, 1e-2);
}

TEST(CurvatureGauss, CrossCheckConvergesOnWavyTorus) {
  double prev = 0.0;
  for (int N : {16, 32, 64}) {
    const GeometryPack geo = compute_geometry(wavy_torus(N));
    const double d = curvature_discrepancy(geo, curvature_gauss(geo), curvature_intrinsic(geo));
    if (prev > 0.0) {
      EXPECT_GE(std::log2(prev / d), 1.9) << N;
    }
    prev = d;
  }
}

TEST(Geometry, ReflectionPushforwardIsNodeExact) {
  GridSpec grid(1, 64);
  const Immersion e = shapes::ellipse(grid, 1.5, 1.0);
  SymmetryAction s = SymmetryAction::identity(grid, 2);
  s.Q = {{1, 0}, {0, -1}};
  s.perm = node_maps::reflect(grid, 0);
  const GeometryPack a = compute_geometry(e);
  const GeometryPack b = compute_geometry(apply_symmetry(e, s));
  for (std::size_t n = 0; n < grid.nodes(); ++n) {
    const std::size_t src = s.perm[n];  // reflection is an involution
    EXPECT_EQ(b.g(n, 0, 0), a.g(src, 0, 0));
    EXPECT_EQ(b.christoffel(n, 0, 0, 0), -a.christoffel(src, 0, 0, 0));
    EXPECT_EQ(b.H[0][n], a.H[0][src]);
    EXPECT_EQ(b.H[1][n], -a.H[1][src]);
  }
}
