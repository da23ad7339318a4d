#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mcf/grid.hpp"

namespace mcf {

/// A discretized map from the periodic parameter grid into R^{m+n}.
/// coords[alpha] holds the alpha-th ambient coordinate at every node.
struct Immersion {
  GridSpec grid;
  std::vector<Field> coords;
  double time = 0.0;

  Immersion() = default;
  Immersion(GridSpec g, int ambient_dim, double t = 0.0) : grid(g), coords(ambient_dim, Field(g.nodes(), 0.0)), time(t) {
    if (ambient_dim <= g.m) throw DomainError("ambient dimension must exceed the intrinsic dimension");
  }

  int ambient() const { return static_cast<int>(coords.size()); }
  int codim() const { return ambient() - grid.m; }
  std::size_t nodes() const { return grid.nodes(); }

  bool all_finite() const {
    for (const auto& c : coords)
      for (double v : c)
        if (!std::isfinite(v)) return false;
    return true;
  }
};

/// Ambient isometry x -> Q x + b paired with a grid-node permutation.
/// `perm[node]` is the image of `node`; apply_symmetry evaluates X at perm^{-1}.
struct SymmetryAction {
  std::vector<std::vector<double>> Q;
  std::vector<double> b;
  std::vector<std::size_t> perm;

  static SymmetryAction identity(const GridSpec& grid, int ambient) {
    SymmetryAction s;
    s.Q.assign(ambient, std::vector<double>(ambient, 0.0));
    for (int a = 0; a < ambient; ++a) s.Q[a][a] = 1.0;
    s.b.assign(ambient, 0.0);
    s.perm.resize(grid.nodes());
    for (std::size_t n = 0; n < grid.nodes(); ++n) s.perm[n] = n;
    return s;
  }

  void validate(const GridSpec& grid, int ambient) const {
    if (static_cast<int>(Q.size()) != ambient || static_cast<int>(b.size()) != ambient)
      throw ShapeError("symmetry ambient dimension does not match the immersion");
    for (const auto& row : Q)
      if (static_cast<int>(row.size()) != ambient) throw ShapeError("symmetry matrix is not square");
    for (int i = 0; i < ambient; ++i)
      for (int j = 0; j < ambient; ++j) {
        double s = 0.0;
        for (int k = 0; k < ambient; ++k) s += Q[k][i] * Q[k][j];
        if (std::abs(s - (i == j ? 1.0 : 0.0)) > 1e-12) throw DomainError("symmetry matrix is not orthogonal");
      }
    if (perm.size() != grid.nodes()) throw ShapeError("node permutation has the wrong size");
    std::vector<bool> seen(perm.size(), false);
    for (std::size_t p : perm) {
      if (p >= perm.size() || seen[p]) throw DomainError("node map is not a bijection");
      seen[p] = true;
    }
  }

  std::vector<std::size_t> inverse_perm() const {
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t n = 0; n < perm.size(); ++n) inv[perm[n]] = n;
    return inv;
  }
};

/// Node maps that preserve the grid and its difference stencils.
namespace node_maps {

inline std::vector<std::size_t> shift(const GridSpec& grid, int axis, int amount) {
  detail::check_axis(grid, axis);
  std::vector<std::size_t> p(grid.nodes());
  for (std::size_t n = 0; n < p.size(); ++n) {
    auto idx = grid.multi_index(n);
    idx[axis] += amount;
    p[n] = grid.node_of(idx[0], idx[1]);
  }
  return p;
}

inline std::vector<std::size_t> reflect(const GridSpec& grid, int axis) {
  detail::check_axis(grid, axis);
  std::vector<std::size_t> p(grid.nodes());
  for (std::size_t n = 0; n < p.size(); ++n) {
    auto idx = grid.multi_index(n);
    idx[axis] = -idx[axis];
    p[n] = grid.node_of(idx[0], idx[1]);
  }
  return p;
}

inline std::vector<std::size_t> swap_axes(const GridSpec& grid) {
  if (grid.m != 2) throw InvalidAxisError("axis swap needs a two-dimensional grid");
  std::vector<std::size_t> p(grid.nodes());
  for (std::size_t n = 0; n < p.size(); ++n) {
    auto idx = grid.multi_index(n);
    p[n] = grid.node_of(idx[1], idx[0]);
  }
  return p;
}

/// first then second.
inline std::vector<std::size_t> compose(const std::vector<std::size_t>& first, const std::vector<std::size_t>& second) {
  if (first.size() != second.size()) throw ShapeError("cannot compose node maps of different sizes");
  std::vector<std::size_t> p(first.size());
  for (std::size_t n = 0; n < p.size(); ++n) p[n] = second[first[n]];
  return p;
}

}  // namespace node_maps

/// Node-wise Q * X(perm^{-1}(node)) + b.
inline Immersion apply_symmetry(const Immersion& imm, const SymmetryAction& s) {
  s.validate(imm.grid, imm.ambient());
  const auto inv = s.inverse_perm();
  Immersion out(imm.grid, imm.ambient(), imm.time);
  const int A = imm.ambient();
  for (std::size_t n = 0; n < imm.nodes(); ++n) {
    const std::size_t src = inv[n];
    for (int a = 0; a < A; ++a) {
      double v = 0.0;
      for (int c = 0; c < A; ++c)
        if (s.Q[a][c] != 0.0) v += s.Q[a][c] * imm.coords[c][src];
      out.coords[a][n] = v + s.b[a];
    }
  }
  return out;
}

/// max over nodes of |Q X(perm^{-1}(n)) + b - X(n)|.
inline double symmetry_defect(const Immersion& imm, const SymmetryAction& s) {
  const Immersion moved = apply_symmetry(imm, s);
  double worst = 0.0;
  for (std::size_t n = 0; n < imm.nodes(); ++n) {
    double d2 = 0.0;
    for (int a = 0; a < imm.ambient(); ++a) {
      const double d = moved.coords[a][n] - imm.coords[a][n];
      d2 += d * d;
    }
    worst = std::max(worst, std::sqrt(d2));
  }
  return worst;
}

/// Closed-form initial data. All builders sample angles through TrigTable, so the
/// grid's dihedral symmetries hold exactly in floating point.
namespace shapes {

inline Immersion circle(const GridSpec& grid, double r, double t = 0.0) {
  if (grid.m != 1) throw DomainError("circle needs m = 1");
  TrigTable trig(grid.N);
  Immersion imm(grid, 2, t);
  for (int k = 0; k < grid.N; ++k) {
    imm.coords[0][k] = r * trig.cos(k);
    imm.coords[1][k] = r * trig.sin(k);
  }
  return imm;
}

inline Immersion ellipse(const GridSpec& grid, double a, double b, double t = 0.0) {
  if (grid.m != 1) throw DomainError("ellipse needs m = 1");
  TrigTable trig(grid.N);
  Immersion imm(grid, 2, t);
  for (int k = 0; k < grid.N; ++k) {
    imm.coords[0][k] = a * trig.cos(k);
    imm.coords[1][k] = b * trig.sin(k);
  }
  return imm;
}

/// S^1(r1) x S^1(r2) in R^4; radius r2 optionally modulated by eps*cos(u).
inline Immersion product_torus(const GridSpec& grid, double r1, double r2, double eps = 0.0, double t = 0.0) {
  if (grid.m != 2) throw DomainError("product torus needs m = 2");
  TrigTable trig(grid.N);
  Immersion imm(grid, 4, t);
  for (std::size_t n = 0; n < grid.nodes(); ++n) {
    const auto [i, j] = grid.multi_index(n);
    const double rho = r2 + eps * trig.cos(i);
    imm.coords[0][n] = r1 * trig.cos(i);
    imm.coords[1][n] = r1 * trig.sin(i);
    imm.coords[2][n] = rho * trig.cos(j);
    imm.coords[3][n] = rho * trig.sin(j);
  }
  return imm;
}

/// Torus of revolution in R^3 with tube radius r about a core circle of radius R.
inline Immersion revolution_torus(const GridSpec& grid, double R, double r, double t = 0.0) {
  if (grid.m != 2) throw DomainError("torus of revolution needs m = 2");
  if (!(R > r && r > 0.0)) throw DomainError("torus of revolution needs R > r > 0");
  TrigTable trig(grid.N);
  Immersion imm(grid, 3, t);
  for (std::size_t n = 0; n < grid.nodes(); ++n) {
    const auto [i, j] = grid.multi_index(n);
    const double rho = R + r * trig.cos(j);
    imm.coords[0][n] = rho * trig.cos(i);
    imm.coords[1][n] = rho * trig.sin(i);
    imm.coords[2][n] = r * trig.sin(j);
  }
  return imm;
}

/// Adds a low-mode trigonometric displacement: every coordinate receives
/// amplitude * sum_{1<=|k|<=modes} (a cos(k.x) + b sin(k.x)) with a, b uniform in [-1, 1].
/// The coefficient stream depends only on the seed.
inline Immersion perturb(const Immersion& imm, double amplitude, int modes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng] { return 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0; };
  Immersion out = imm;
  const GridSpec& grid = imm.grid;
  for (int a = 0; a < imm.ambient(); ++a) {
    for (int k0 = 0; k0 <= modes; ++k0) {
      for (int k1 = (grid.m == 2 ? -modes : 0); k1 <= (grid.m == 2 ? modes : 0); ++k1) {
        if (k0 == 0 && k1 <= 0) continue;
        if (std::abs(k0) + std::abs(k1) > modes) continue;
        const double ca = uniform();
        const double cb = uniform();
        for (std::size_t n = 0; n < grid.nodes(); ++n) {
          const double phase = k0 * grid.coordinate(n, 0) + (grid.m == 2 ? k1 * grid.coordinate(n, 1) : 0.0);
          out.coords[a][n] += amplitude * (ca * std::cos(phase) + cb * std::sin(phase));
        }
      }
    }
  }
  return out;
}

}  // namespace shapes

/// Writes `m n N t`, then one line per node: multi-index and the m+n coordinates.
inline void write_immersion(std::ostream& os, const Immersion& imm) {
  os << imm.grid.m << ' ' << imm.codim() << ' ' << imm.grid.N << ' ' << std::setprecision(17) << imm.time << '\n';
  for (std::size_t n = 0; n < imm.nodes(); ++n) {
    const auto idx = imm.grid.multi_index(n);
    for (int i = 0; i < imm.grid.m; ++i) os << idx[i] << ' ';
    for (int a = 0; a < imm.ambient(); ++a) {
      os << std::setprecision(17) << imm.coords[a][n];
      os << (a + 1 < imm.ambient() ? ' ' : '\n');
    }
  }
}

inline Immersion read_immersion(std::istream& is, int stencil_order = 2) {
  int m = 0, codim = 0, N = 0;
  double t = 0.0;
  if (!(is >> m >> codim >> N >> t)) throw ProtocolError("immersion file: malformed header");
  if (codim < 1) throw ProtocolError("immersion file: codimension must be >= 1");
  Immersion imm(GridSpec(m, N, stencil_order), m + codim, t);
  for (std::size_t count = 0; count < imm.nodes(); ++count) {
    int idx[2] = {0, 0};
    for (int i = 0; i < m; ++i)
      if (!(is >> idx[i])) throw ProtocolError("immersion file: truncated node list");
    const std::size_t n = imm.grid.node_of(idx[0], idx[1]);
    for (int a = 0; a < imm.ambient(); ++a)
      if (!(is >> imm.coords[a][n])) throw ProtocolError("immersion file: truncated coordinates");
  }
  if (!imm.all_finite()) throw ProtocolError("immersion file: non-finite coordinate");
  return imm;
}

inline void save_immersion(const std::string& path, const Immersion& imm) {
  std::ofstream os(path);
  if (!os) throw ProtocolError("cannot write " + path);
  write_immersion(os, imm);
}

inline Immersion load_immersion(const std::string& path, int stencil_order = 2) {
  std::ifstream is(path);
  if (!is) throw ProtocolError("cannot read " + path);
  return read_immersion(is, stencil_order);
}

}  // namespace mcf
