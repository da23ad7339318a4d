#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mcf/anchors.hpp"
#include "mcf/flow.hpp"

namespace mcf {

/// Residuals below this sup-norm at every resolution are classed as exact
/// (rounding only) and excluded from order fitting. Rounding in the time
/// stencil stays under 1e-8 for N <= 256 with dt = h^2/40; truncation error of
/// the non-exact identities is above 1e-4 there.
inline constexpr double kExactResidualFloor = 1e-7;

struct ResidualReport {
  std::string identity;
  std::string anchor;
  Field per_node;  // g(t)-norm of the residual tensor at each node
  double sup = 0.0;
  double l2 = 0.0;  // sqrt(sum r^2 sqrt(det g) h^m)
  int N = 0;
  double dt = 0.0;
  double t = 0.0;
  double order_estimate = std::numeric_limits<double>::quiet_NaN();
};

/// Builds a report from per-node squared norms measured in `geo`'s metric.
inline ResidualReport make_report(const std::string& identity, const GeometryPack& geo, const Field& norm_sq, double dt,
                                  double t) {
  ResidualReport r;
  r.identity = identity;
  r.anchor = anchor_for(identity);
  r.per_node.resize(norm_sq.size());
  double l2 = 0.0;
  for (std::size_t n = 0; n < norm_sq.size(); ++n) {
    const double v = std::sqrt(std::max(0.0, norm_sq[n]));
    r.per_node[n] = v;
    r.sup = std::max(r.sup, v);
    l2 += norm_sq[n] * std::sqrt(geo.det_g[n]);
  }
  r.l2 = std::sqrt(l2 * geo.grid.cell_measure());
  r.N = geo.grid.N;
  r.dt = dt;
  r.t = t;
  return r;
}

namespace detail {

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

inline void write_residual_csv_header(std::ostream& os) {
  os << "identity,anchor,N,dt,t,sup_residual,l2_residual,order_estimate\n";
}

inline void write_residual_csv_row(std::ostream& os, const ResidualReport& r) {
  const auto old = os.precision(10);
  os << r.identity << ',' << detail::csv_quote(r.anchor) << ',' << r.N << ',' << r.dt << ',' << r.t << ',' << r.sup
     << ',' << r.l2 << ',';
  if (std::isnan(r.order_estimate))
    os << "";
  else
    os << r.order_estimate;
  os << '\n';
  os.precision(old);
}

/// Five uniformly spaced states and their geometry, centred on states[2].
struct TimeWindow {
  std::array<GeometryPack, 5> geo;
  double dt = 0.0;
  double t = 0.0;

  const GeometryPack& center() const { return geo[2]; }
};

inline void check_uniform(std::span<const Immersion> states) {
  const double dt = states[1].time - states[0].time;
  if (!(dt > 0.0)) throw ProtocolError("time samples must be strictly increasing");
  for (std::size_t k = 1; k < states.size(); ++k) {
    const double d = states[k].time - states[k - 1].time;
    if (std::abs(d - dt) > 1e-9 * dt + 1e-15) throw ProtocolError("time samples are not uniformly spaced");
    if (!(states[k].grid == states[0].grid)) throw ProtocolError("time samples use different grids");
  }
}

inline TimeWindow make_window(const FlowTrajectory& traj, std::optional<std::size_t> center = {}) {
  if (traj.size() < 5) throw ProtocolError("time derivatives need at least five states");
  const std::size_t c = center.value_or(traj.size() / 2);
  if (c < 2 || c + 2 >= traj.size()) throw ProtocolError("window centre too close to the trajectory ends");
  std::span<const Immersion> five(traj.states.data() + c - 2, 5);
  check_uniform(five);
  TimeWindow w;
  for (int k = 0; k < 5; ++k) {
    w.geo[k] = compute_geometry(five[k]);
  }
  w.dt = five[1].time - five[0].time;
  w.t = five[2].time;
  return w;
}

/// Fourth-order central difference (f(-2) - 8 f(-1) + 8 f(1) - f(2)) / (12 dt).
inline TensorField time_derivative(const std::array<const TensorField*, 5>& f, double dt) {
  TensorField out(f[0]->grid(), f[0]->rank(), f[0]->upper_mask());
  auto& o = out.raw();
  const auto &a = f[0]->raw(), &b = f[1]->raw(), &d = f[3]->raw(), &e = f[4]->raw();
  const double c = 1.0 / (12.0 * dt);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = ((a[i] - e[i]) + 8.0 * (d[i] - b[i])) * c;
  return out;
}

template <class Getter>
TensorField time_derivative(const TimeWindow& w, Getter get) {
  return time_derivative({&get(w.geo[0]), &get(w.geo[1]), &get(w.geo[2]), &get(w.geo[3]), &get(w.geo[4])}, w.dt);
}

/// S_ij = sum_alpha H^alpha h^alpha_ij.
inline TensorField mean_curvature_contraction(const GeometryPack& geo) {
  TensorField S(geo.grid, 2);
  for (int a = 0; a < geo.ambient; ++a)
    for (std::size_t c = 0; c < S.components(); ++c) {
      auto dst = S.component(c);
      const auto src = geo.h[a].component(c);
      for (std::size_t n = 0; n < geo.nodes(); ++n) dst[n] += geo.H[a][n] * src[n];
    }
  return S;
}

/// Right-hand side of the Christoffel evolution:
/// -g^kl [nabla_i S_jl + nabla_j S_il - nabla_l S_ij].
inline TensorField christoffel_rate(const GeometryPack& geo) {
  const int m = geo.m();
  const TensorField dS = geo.nabla(mean_curvature_contraction(geo));  // (a, i, j) = nabla_a S_ij
  TensorField out(geo.grid, 3, 0b001u);
  for (int k = 0; k < m; ++k)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        for (std::size_t n = 0; n < geo.nodes(); ++n) {
          double s = 0.0;
          for (int l = 0; l < m; ++l) s += geo.ginv(n, k, l) * (dS(n, i, j, l) + dS(n, j, i, l) - dS(n, l, i, j));
          out(n, k, i, j) = -s;
        }
  return out;
}

inline ResidualReport check_dX(const TimeWindow& w) {
  const GeometryPack& c = w.center();
  const TensorFamily gradH = c.nabla(c.H_fields());
  TensorFamily res;
  for (int a = 0; a < c.ambient; ++a) {
    TensorField r = time_derivative(w, [a](const GeometryPack& g) -> const TensorField& { return g.dX[a]; });
    r -= gradH[a];
    res.push_back(std::move(r));
  }
  return make_report("dX", c, c.norm_squared(res), w.dt, w.t);
}

inline ResidualReport check_dg(const TimeWindow& w) {
  const GeometryPack& c = w.center();
  TensorField r = time_derivative(w, [](const GeometryPack& g) -> const TensorField& { return g.g; });
  r += 2.0 * mean_curvature_contraction(c);
  return make_report("dg", c, c.norm_squared(r), w.dt, w.t);
}

inline ResidualReport check_dGamma(const TimeWindow& w) {
  const GeometryPack& c = w.center();
  TensorField r = time_derivative(w, [](const GeometryPack& g) -> const TensorField& { return g.christoffel; });
  r -= christoffel_rate(c);
  return make_report("dGamma", c, c.norm_squared(r), w.dt, w.t);
}

/// Uses the analytic Christoffel rate, so only h is differenced in time.
inline ResidualReport check_dh(const TimeWindow& w) {
  const GeometryPack& c = w.center();
  const TensorField gamma_rate = christoffel_rate(c);
  const TensorFamily hessH = c.nabla(c.nabla(c.H_fields()));
  const int m = c.m();
  TensorFamily res;
  for (int a = 0; a < c.ambient; ++a) {
    TensorField r = time_derivative(w, [a](const GeometryPack& g) -> const TensorField& { return g.h[a]; });
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        for (std::size_t n = 0; n < c.nodes(); ++n) {
          double rhs = hessH[a](n, i, j);
          for (int k = 0; k < m; ++k) rhs -= gamma_rate(n, k, i, j) * c.dX[a](n, k);
          r(n, i, j) -= rhs;
        }
    res.push_back(std::move(r));
  }
  return make_report("dh", c, c.norm_squared(res), w.dt, w.t);
}

/// Cross-validation of the Christoffel rate: the time-differenced Gamma used in
/// place of the analytic rate inside the h evolution.
inline ResidualReport check_dh_differenced(const TimeWindow& w) {
  const GeometryPack& c = w.center();
  const TensorField gamma_rate =
      time_derivative(w, [](const GeometryPack& g) -> const TensorField& { return g.christoffel; });
  const TensorFamily hessH = c.nabla(c.nabla(c.H_fields()));
  const int m = c.m();
  TensorFamily res;
  for (int a = 0; a < c.ambient; ++a) {
    TensorField r = time_derivative(w, [a](const GeometryPack& g) -> const TensorField& { return g.h[a]; });
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        for (std::size_t n = 0; n < c.nodes(); ++n) {
          double rhs = hessH[a](n, i, j);
          for (int k = 0; k < m; ++k) rhs -= gamma_rate(n, k, i, j) * c.dX[a](n, k);
          r(n, i, j) -= rhs;
        }
    res.push_back(std::move(r));
  }
  return make_report("dh", c, c.norm_squared(res), w.dt, w.t);
}

/// Term signs of the Hessian/Laplacian commutation formula; the defaults are the
/// printed ones. Flipping a sign is how the convention audit shows each term matters.
struct SimonsSigns {
  double gradient_ricci = -1.0;  // coefficient of g^pq (nabla_i R_jp + nabla_j R_ip - nabla_p R_ij) X_q
  double riemann = 2.0;          // coefficient of g^kp g^lq R_ikjl h_pq
  double ricci = -1.0;           // coefficient of g^pq R_ip h_jq (and its (i,j) mirror)
};

/// Residual of nabla_i nabla_j H^a against the commuted form built from
/// Delta h^a and the curvature `curv` (Gauss route by default).
inline ResidualReport check_simons(const GeometryPack& geo, const CurvaturePack& curv, SimonsSigns signs = {}) {
  const int m = geo.m();
  const std::size_t nodes = geo.nodes();
  const TensorFamily hessH = geo.nabla(geo.nabla(geo.H_fields()));
  const TensorField dRic = geo.nabla(curv.ricci);  // (a, b, c) = nabla_a R_bc
  const TensorField& R = curv.riemann;
  const TensorField& Ric = curv.ricci;
  const TensorField& gi = geo.ginv;
  TensorFamily res;
  for (int a = 0; a < geo.ambient; ++a) {
    const TensorField lap_h = trace_first_pair(geo.nabla(geo.nabla(geo.h[a])), gi);
    const TensorField& h = geo.h[a];
    TensorField r(geo.grid, 2);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        for (std::size_t n = 0; n < nodes; ++n) {
          double first = 0.0, riem = 0.0, ric = 0.0;
          for (int p = 0; p < m; ++p)
            for (int q = 0; q < m; ++q) {
              first += gi(n, p, q) * (dRic(n, i, j, p) + dRic(n, j, i, p) - dRic(n, p, i, j)) * geo.dX[a](n, q);
              ric += gi(n, p, q) * (Ric(n, i, p) * h(n, j, q) + Ric(n, j, p) * h(n, i, q));
            }
          for (int k = 0; k < m; ++k)
            for (int l = 0; l < m; ++l)
              for (int p = 0; p < m; ++p)
                for (int q = 0; q < m; ++q) riem += gi(n, k, p) * gi(n, l, q) * R(n, i, k, j, l) * h(n, p, q);
          const double rhs = lap_h(n, i, j) + signs.gradient_ricci * first + signs.riemann * riem + signs.ricci * ric;
          r(n, i, j) = hessH[a](n, i, j) - rhs;
        }
    res.push_back(std::move(r));
  }
  return make_report("simons", geo, geo.norm_squared(res), 0.0, 0.0);
}

inline ResidualReport check_simons(const GeometryPack& geo, double t = 0.0) {
  ResidualReport r = check_simons(geo, curvature_gauss(geo));
  r.t = t;
  return r;
}

/// |R_gauss - R_intrinsic|_g per node.
inline ResidualReport check_gauss(const GeometryPack& geo, double t = 0.0) {
  const Field d = geo.norm_squared(curvature_gauss(geo).riemann - curvature_intrinsic(geo).riemann);
  return make_report("gauss", geo, d, 0.0, t);
}

/// |sum_a |nabla X^a|^2_g - m| per node.
inline ResidualReport check_trace(const GeometryPack& geo, double t = 0.0) {
  Field tr = gradient_trace(geo);
  for (double& v : tr) v = (v - geo.m()) * (v - geo.m());
  return make_report("trace", geo, tr, 0.0, t);
}

struct BernsteinRow {
  double t = 0.0;
  std::vector<double> sup_norms;  // sup_x |nabla^k h|_g, k = 0..k_max
};

/// Monitoring table of sup |nabla^k h|_g along a trajectory.
inline std::vector<BernsteinRow> measure_bernstein(const FlowTrajectory& traj, int k_max) {
  if (k_max < 0 || k_max > 3) throw DomainError("k_max must lie in [0, 3]");
  std::vector<BernsteinRow> rows;
  for (const auto& s : traj.states) {
    const GeometryPack geo = compute_geometry(s);
    BernsteinRow row{s.time, {}};
    TensorFamily d = geo.h;
    for (int k = 0; k <= k_max; ++k) {
      if (k > 0) d = geo.nabla(d);
      double worst = 0.0;
      for (double v : geo.norm_squared(d)) worst = std::max(worst, v);
      row.sup_norms.push_back(std::sqrt(worst));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Smallest gamma >= 1 with gamma^{-1} gA <= gB <= gamma gA at every node.
inline double measure_equivalence(const TensorField& gA, const TensorField& gB) {
  if (!(gA.grid() == gB.grid()) || gA.rank() != 2 || gB.rank() != 2) throw ShapeError("metrics live on different grids");
  const GridSpec& grid = gA.grid();
  double gamma = 1.0;
  for (std::size_t n = 0; n < grid.nodes(); ++n) {
    double lo, hi;
    if (grid.m == 1) {
      const double a = gA(n, 0, 0), b = gB(n, 0, 0);
      if (!(a > 0.0) || !(b > 0.0)) throw DegenerateImmersionError("degenerate metric at node " + describe_node(grid, n));
      lo = hi = b / a;
    } else {
      const double a00 = gA(n, 0, 0), a01 = gA(n, 0, 1), a11 = gA(n, 1, 1);
      const double b00 = gB(n, 0, 0), b01 = gB(n, 0, 1), b11 = gB(n, 1, 1);
      const double da = a00 * a11 - a01 * a01, db = b00 * b11 - b01 * b01;
      if (!(da > 0.0) || !(db > 0.0) || !(a00 > 0.0) || !(b00 > 0.0))
        throw DegenerateImmersionError("degenerate metric at node " + describe_node(grid, n));
      // det(gB - lambda gA) = da lambda^2 - tr lambda + db
      const double tr = a00 * b11 + a11 * b00 - 2.0 * a01 * b01;
      const double disc = std::sqrt(std::max(0.0, tr * tr - 4.0 * da * db));
      hi = (tr + disc) / (2.0 * da);
      lo = (2.0 * db) / (tr + disc);
    }
    gamma = std::max({gamma, hi, 1.0 / lo});
  }
  return gamma;
}

/// Trajectory with five states spaced dt apart centred on t_center (a multiple of dt).
inline FlowTrajectory identity_window(const Immersion& start, double t_center, double dt) {
  const long c = std::lround((t_center - start.time) / dt);
  if (c < 2) throw ProtocolError("window centre must lie at least two steps after the start");
  std::vector<double> times;
  for (long k = c - 2; k <= c + 2; ++k) times.push_back(start.time + static_cast<double>(k) * dt);
  return run_flow(start, times.back(), StepPolicy::fixed(dt), times);
}

/// log2 ratios of successive residuals (resolutions doubling).
inline std::vector<double> observed_orders(const std::vector<double>& residuals) {
  std::vector<double> orders;
  for (std::size_t k = 1; k < residuals.size(); ++k) orders.push_back(std::log2(residuals[k - 1] / residuals[k]));
  return orders;
}

inline bool is_exact(const std::vector<double>& residuals, double floor = kExactResidualFloor) {
  return std::all_of(residuals.begin(), residuals.end(), [floor](double r) { return r <= floor; });
}

/// Order study verdict for one identity over doubling resolutions.
struct ConvergenceVerdict {
  std::vector<double> sups;
  std::vector<double> orders;  // pairwise log2 ratios
  bool exact = false;
  double finest_order() const { return orders.empty() ? std::numeric_limits<double>::quiet_NaN() : orders.back(); }
  bool passes(double min_order) const { return exact || finest_order() >= min_order; }
};

inline ConvergenceVerdict classify(const std::vector<double>& sups, double floor = kExactResidualFloor) {
  ConvergenceVerdict v;
  v.sups = sups;
  v.exact = is_exact(sups, floor);
  if (!v.exact) v.orders = observed_orders(sups);
  return v;
}

/// Time step used for identity order studies at a given resolution.
inline double identity_dt(const GridSpec& grid) {
  const double h = grid.spacing();
  return h * h / 40.0;
}

/// dX, dg, dGamma, dh on a window centred near t_center, plus Simons, Gauss and
/// trace at the centre state.
inline std::vector<ResidualReport> identity_suite(const Immersion& start, double t_center,
                                                  std::optional<double> dt = {}) {
  const double step = dt.value_or(identity_dt(start.grid));
  const double tc = start.time + std::max(2.0, std::round((t_center - start.time) / step)) * step;
  const TimeWindow w = make_window(identity_window(start, tc, step));
  std::vector<ResidualReport> out{check_dX(w), check_dg(w), check_dGamma(w), check_dh(w), check_simons(w.center(), w.t),
                                  check_trace(w.center(), w.t)};
  if (start.grid.m == 2) out.push_back(check_gauss(w.center(), w.t));
  for (auto& r : out) r.dt = w.dt;
  return out;
}

/// Fills order_estimate from the previous resolution (same identity, same position).
inline void fill_orders(std::vector<std::vector<ResidualReport>>& by_resolution) {
  for (std::size_t k = 1; k < by_resolution.size(); ++k)
    for (std::size_t i = 0; i < by_resolution[k].size() && i < by_resolution[k - 1].size(); ++i) {
      auto& cur = by_resolution[k][i];
      const auto& prev = by_resolution[k - 1][i];
      if (cur.identity == prev.identity && cur.sup > 0.0 && prev.sup > 0.0 && prev.sup > kExactResidualFloor)
        cur.order_estimate = std::log2(prev.sup / cur.sup) / std::log2(static_cast<double>(cur.N) / prev.N);
    }
}

}  // namespace mcf
