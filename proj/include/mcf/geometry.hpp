#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "mcf/immersion.hpp"
#include "mcf/tensor.hpp"

namespace mcf {

inline constexpr double kDefaultImmersionEps = 1e-10;

struct MetricPack {
  TensorField g;     // g_ij
  TensorField ginv;  // g^ij
  Field det;
};

/// Per-node geometry of an immersion, decomposed along the fixed ambient
/// coordinates: every alpha-indexed quantity is an ordinary tensor on M.
struct GeometryPack {
  GridSpec grid;
  int ambient = 0;
  TensorFamily dX;  // X^alpha_i
  TensorField g;
  TensorField ginv;
  Field det_g;
  TensorField christoffel;  // Gamma^k_ij as (k, i, j)
  TensorFamily h;           // h^alpha_ij
  std::vector<Field> H;     // H^alpha
  MetricFrame frame;

  int m() const { return grid.m; }
  std::size_t nodes() const { return grid.nodes(); }

  /// |T|^2 in this pack's metric.
  Field norm_squared(const TensorField& T) const { return frame.norm_squared(T); }
  Field norm_squared(const TensorFamily& F) const { return frame.norm_squared(F); }

  TensorField nabla(const TensorField& T) const { return covariant_derivative(T, christoffel); }
  TensorFamily nabla(const TensorFamily& F) const { return covariant_derivative(F, christoffel); }
  TensorField laplacian(const TensorField& T) const { return rough_laplacian(T, christoffel, ginv); }

  /// H^alpha as rank-0 tensor fields.
  TensorFamily H_fields() const {
    TensorFamily out;
    for (const auto& f : H) out.push_back(TensorField::scalar(grid, f));
    return out;
  }

  /// Mean curvature as a family of scalars summed in quadrature: |H| per node.
  Field mean_curvature_norm() const {
    Field out(nodes(), 0.0);
    for (const auto& f : H)
      for (std::size_t n = 0; n < out.size(); ++n) out[n] += f[n] * f[n];
    for (double& v : out) v = std::sqrt(v);
    return out;
  }
};

inline std::string describe_node(const GridSpec& grid, std::size_t node) {
  const auto idx = grid.multi_index(node);
  std::ostringstream os;
  os << '(' << idx[0];
  if (grid.m == 2) os << ", " << idx[1];
  os << ')';
  return os.str();
}

/// X^alpha_i = partial(X^alpha, i).
inline TensorFamily position_gradients(const Immersion& imm) {
  TensorFamily dX;
  for (int a = 0; a < imm.ambient(); ++a) {
    TensorField d(imm.grid, 1);
    for (int i = 0; i < imm.grid.m; ++i) {
      const Field p = partial(imm.grid, imm.coords[a], i);
      std::copy(p.begin(), p.end(), d.component(i).begin());
    }
    dX.push_back(std::move(d));
  }
  return dX;
}

/// Closed-form inverse of a 1x1 or 2x2 symmetric metric field.
inline MetricPack invert_metric(const TensorField& g, double eps = kDefaultImmersionEps) {
  const GridSpec& grid = g.grid();
  MetricPack mp{g, TensorField(grid, 2, 0b11u), Field(grid.nodes())};
  for (std::size_t n = 0; n < grid.nodes(); ++n) {
    if (grid.m == 1) {
      const double d = g(n, 0, 0);
      mp.det[n] = d;
      if (!(d >= eps)) throw DegenerateImmersionError("degenerate metric at node " + describe_node(grid, n));
      mp.ginv(n, 0, 0) = 1.0 / d;
    } else {
      const double a = g(n, 0, 0), b = g(n, 0, 1), c = g(n, 1, 1);
      const double d = a * c - b * b;
      mp.det[n] = d;
      if (!(d >= eps) || !(a > 0.0)) throw DegenerateImmersionError("degenerate metric at node " + describe_node(grid, n));
      mp.ginv(n, 0, 0) = c / d;
      mp.ginv(n, 0, 1) = -b / d;
      mp.ginv(n, 1, 0) = -b / d;
      mp.ginv(n, 1, 1) = a / d;
    }
  }
  return mp;
}

/// g_ij = sum_alpha X^alpha_i X^alpha_j, with its inverse and determinant.
inline MetricPack induced_metric(const Immersion& imm, const TensorFamily& dX, double eps = kDefaultImmersionEps) {
  const GridSpec& grid = imm.grid;
  const int m = grid.m;
  TensorField g(grid, 2);
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j) {
      for (std::size_t n = 0; n < grid.nodes(); ++n) {
        double s = 0.0;
        for (const auto& d : dX) s += d(n, i) * d(n, j);
        g(n, i, j) = s;
        g(n, j, i) = s;
      }
    }
  return invert_metric(g, eps);
}

inline MetricPack induced_metric(const Immersion& imm, double eps = kDefaultImmersionEps) {
  return induced_metric(imm, position_gradients(imm), eps);
}

/// Gamma^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij).
inline TensorField christoffels(const TensorField& g, const TensorField& ginv) {
  const GridSpec& grid = g.grid();
  const int m = grid.m;
  const std::size_t nodes = grid.nodes();
  // dg[l](n, i, j) = d_l g_ij
  std::vector<TensorField> dg;
  for (int l = 0; l < m; ++l) {
    TensorField d(grid, 2);
    for (int i = 0; i < m; ++i)
      for (int j = i; j < m; ++j) {
        const Field p = partial(grid, g.component(static_cast<std::size_t>(i * m + j)), l);
        std::copy(p.begin(), p.end(), d.component(static_cast<std::size_t>(i * m + j)).begin());
        std::copy(p.begin(), p.end(), d.component(static_cast<std::size_t>(j * m + i)).begin());
      }
    dg.push_back(std::move(d));
  }
  TensorField gamma(grid, 3, 0b001u);
  for (int k = 0; k < m; ++k)
    for (int i = 0; i < m; ++i)
      for (int j = i; j < m; ++j)
        for (std::size_t n = 0; n < nodes; ++n) {
          double s = 0.0;
          for (int l = 0; l < m; ++l) s += ginv(n, k, l) * (dg[i](n, j, l) + dg[j](n, i, l) - dg[l](n, i, j));
          gamma(n, k, i, j) = 0.5 * s;
          gamma(n, k, j, i) = 0.5 * s;
        }
  return gamma;
}

/// h^alpha_ij = d_i d_j X^alpha - Gamma^k_ij X^alpha_k and H^alpha = g^ij h^alpha_ij.
inline void second_fundamental_form(const Immersion& imm, const TensorFamily& dX, const TensorField& ginv,
                                    const TensorField& gamma, TensorFamily& h, std::vector<Field>& H) {
  const GridSpec& grid = imm.grid;
  const int m = grid.m;
  const std::size_t nodes = grid.nodes();
  h.clear();
  H.clear();
  for (int a = 0; a < imm.ambient(); ++a) {
    TensorField ha(grid, 2);
    for (int i = 0; i < m; ++i)
      for (int j = i; j < m; ++j) {
        const Field d2 = second_partial(grid, imm.coords[a], i, j);
        for (std::size_t n = 0; n < nodes; ++n) {
          double s = d2[n];
          for (int k = 0; k < m; ++k) s -= gamma(n, k, i, j) * dX[a](n, k);
          ha(n, i, j) = s;
          ha(n, j, i) = s;
        }
      }
    Field Ha(nodes, 0.0);
    for (std::size_t n = 0; n < nodes; ++n) {
      double s = 0.0;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) s += ginv(n, i, j) * ha(n, i, j);
      Ha[n] = s;
    }
    h.push_back(std::move(ha));
    H.push_back(std::move(Ha));
  }
}

inline GeometryPack compute_geometry(const Immersion& imm, double eps = kDefaultImmersionEps) {
  GeometryPack geo;
  geo.grid = imm.grid;
  geo.ambient = imm.ambient();
  geo.dX = position_gradients(imm);
  MetricPack mp = induced_metric(imm, geo.dX, eps);
  geo.g = std::move(mp.g);
  geo.ginv = std::move(mp.ginv);
  geo.det_g = std::move(mp.det);
  geo.christoffel = christoffels(geo.g, geo.ginv);
  second_fundamental_form(imm, geo.dX, geo.ginv, geo.christoffel, geo.h, geo.H);
  geo.frame = MetricFrame(geo.g);
  return geo;
}

/// Throws DegenerateImmersionError naming the first node with det g < eps.
inline void check_nondegenerate(const Immersion& imm, double eps = kDefaultImmersionEps) {
  if (!imm.all_finite()) throw DegenerateImmersionError("immersion has non-finite coordinates");
  (void)induced_metric(imm, eps);
}

/// nabla^k applied to every member of a family.
inline TensorFamily iterated_nabla(const TensorFamily& F, const TensorField& gamma, int k) {
  TensorFamily out = F;
  for (int i = 0; i < k; ++i) out = covariant_derivative(out, gamma);
  return out;
}

/// sum_alpha |nabla X^alpha|^2_g, equal to g^ij g_ij = m.
inline Field gradient_trace(const GeometryPack& geo) { return geo.norm_squared(geo.dX); }

/// |sum_alpha h^alpha_ij X^alpha_k|_g per node: the tangential part of the second fundamental form.
inline Field normality_residual(const GeometryPack& geo) {
  const int m = geo.m();
  TensorField t(geo.grid, 3);
  for (int a = 0; a < geo.ambient; ++a)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k)
          for (std::size_t n = 0; n < geo.nodes(); ++n) t(n, i, j, k) += geo.h[a](n, i, j) * geo.dX[a](n, k);
  Field r = geo.norm_squared(t);
  for (double& v : r) v = std::sqrt(v);
  return r;
}

/// Total induced volume: sum of sqrt(det g) h^m.
inline double induced_volume(const GeometryPack& geo) {
  double s = 0.0;
  for (double d : geo.det_g) s += std::sqrt(d);
  return s * geo.grid.cell_measure();
}

enum class CurvatureSource { intrinsic, gauss };

struct CurvaturePack {
  TensorField riemann;  // R_ijkl, all lower
  TensorField ricci;    // R_ij = g^kl R_ikjl
  CurvatureSource source = CurvatureSource::gauss;
};

inline TensorField ricci_from_riemann(const TensorField& R, const TensorField& ginv) {
  const GridSpec& grid = R.grid();
  const int m = grid.m;
  TensorField ric(grid, 2);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (std::size_t n = 0; n < grid.nodes(); ++n) {
        double s = 0.0;
        for (int k = 0; k < m; ++k)
          for (int l = 0; l < m; ++l) s += ginv(n, k, l) * R(n, i, k, j, l);
        ric(n, i, j) = s;
      }
  return ric;
}

/// Gauss equation R_ijkl = sum_alpha (h_ik h_jl - h_il h_jk).
inline CurvaturePack curvature_gauss(const GeometryPack& geo) {
  const int m = geo.m();
  CurvaturePack cp{TensorField(geo.grid, 4), TensorField(geo.grid, 2), CurvatureSource::gauss};
  if (m == 1) return cp;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k)
        for (int l = 0; l < m; ++l)
          for (std::size_t n = 0; n < geo.nodes(); ++n) {
            double s = 0.0;
            for (const auto& ha : geo.h) s += ha(n, i, k) * ha(n, j, l) - ha(n, i, l) * ha(n, j, k);
            cp.riemann(n, i, j, k, l) = s;
          }
  cp.ricci = ricci_from_riemann(cp.riemann, geo.ginv);
  return cp;
}

/// Riemann tensor of the metric alone:
/// R^p_ijl = d_i Gamma^p_jl - d_j Gamma^p_il + Gamma^p_iq Gamma^q_jl - Gamma^p_jq Gamma^q_il,
/// lowered as R_ijkl = g_kp R^p_ijl so that R_ijij is the sectional curvature times det g.
inline CurvaturePack curvature_intrinsic(const TensorField& g, const TensorField& ginv, const TensorField& gamma) {
  const GridSpec& grid = g.grid();
  const int m = grid.m;
  CurvaturePack cp{TensorField(grid, 4), TensorField(grid, 2), CurvatureSource::intrinsic};
  if (m == 1) return cp;
  const std::size_t nodes = grid.nodes();
  // dG[a](n, p, j, l) = d_a Gamma^p_jl
  std::vector<TensorField> dG;
  for (int a = 0; a < m; ++a) {
    TensorField d(grid, 3, 0b001u);
    for (std::size_t c = 0; c < gamma.components(); ++c) {
      const Field p = partial(grid, gamma.component(c), a);
      std::copy(p.begin(), p.end(), d.component(c).begin());
    }
    dG.push_back(std::move(d));
  }
  TensorField up(grid, 4, 0b0001u);  // R^p_ijl stored as (p, i, j, l)
  for (int p = 0; p < m; ++p)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        for (int l = 0; l < m; ++l)
          for (std::size_t n = 0; n < nodes; ++n) {
            double s = dG[i](n, p, j, l) - dG[j](n, p, i, l);
            for (int q = 0; q < m; ++q) s += gamma(n, p, i, q) * gamma(n, q, j, l) - gamma(n, p, j, q) * gamma(n, q, i, l);
            up(n, p, i, j, l) = s;
          }
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k)
        for (int l = 0; l < m; ++l)
          for (std::size_t n = 0; n < nodes; ++n) {
            double s = 0.0;
            for (int p = 0; p < m; ++p) s += g(n, k, p) * up(n, p, i, j, l);
            cp.riemann(n, i, j, k, l) = s;
          }
  cp.ricci = ricci_from_riemann(cp.riemann, ginv);
  return cp;
}

inline CurvaturePack curvature_intrinsic(const GeometryPack& geo) {
  return curvature_intrinsic(geo.g, geo.ginv, geo.christoffel);
}

/// Sup over nodes of |R_a - R_b|_g.
inline double curvature_discrepancy(const GeometryPack& geo, const CurvaturePack& a, const CurvaturePack& b) {
  const Field d = geo.norm_squared(a.riemann - b.riemann);
  double worst = 0.0;
  for (double v : d) worst = std::max(worst, std::sqrt(v));
  return worst;
}

}  // namespace mcf
