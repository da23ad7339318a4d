#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "mcf/identities.hpp"

namespace mcf {

/// Squared-norm floor below which a node is not used to fit C.
inline constexpr double kCoreFloor = 1e-24;

/// Differences between two flows at one time. Norms, Laplacians and nabla use
/// the first flow's metric and connection.
struct DifferencePack {
  GeometryPack geo;  // first flow
  double time = 0.0;
  TensorField d;      // g - g~
  TensorField N;      // Gamma - Gamma~, slot 0 upper
  TensorField W;      // nabla N
  TensorFamily w;     // nabla X^a - nabla~ X~^a
  TensorFamily U;     // h^a - h~^a
  TensorFamily V;     // nabla h^a - nabla~ h~^a

  TensorFamily Y() const {
    TensorFamily y = U;
    y.insert(y.end(), V.begin(), V.end());
    return y;
  }
  TensorFamily Z() const {
    TensorFamily z = w;
    z.push_back(d);
    z.push_back(N);
    z.push_back(W);
    return z;
  }
  Field Y_norm_squared() const { return geo.norm_squared(Y()); }
  Field Z_norm_squared() const { return geo.norm_squared(Z()); }
};

inline void check_same_sample(const Immersion& a, const Immersion& b) {
  if (!(a.grid == b.grid)) throw ProtocolError("difference: the two states use different grids");
  if (a.time != b.time) throw ProtocolError("difference: the two states carry different time stamps");
  if (a.ambient() != b.ambient()) throw ProtocolError("difference: the two states live in different ambient spaces");
}

inline DifferencePack build_difference(const GeometryPack& A, const GeometryPack& B, double time) {
  if (!(A.grid == B.grid) || A.ambient != B.ambient) throw ProtocolError("difference: geometries do not match");
  DifferencePack p;
  p.geo = A;
  p.time = time;
  p.d = A.g - B.g;
  p.N = A.christoffel - B.christoffel;
  p.W = A.nabla(p.N);
  const TensorFamily dhA = A.nabla(A.h);
  const TensorFamily dhB = B.nabla(B.h);
  for (int a = 0; a < A.ambient; ++a) {
    p.w.push_back(A.dX[a] - B.dX[a]);
    p.U.push_back(A.h[a] - B.h[a]);
    p.V.push_back(dhA[a] - dhB[a]);
  }
  return p;
}

inline DifferencePack build_difference(const Immersion& a, const Immersion& b) {
  check_same_sample(a, b);
  return build_difference(compute_geometry(a), compute_geometry(b), a.time);
}

/// Two five-point windows sharing the same sample times.
struct PairWindow {
  TimeWindow a, b;
};

inline void check_same_sampling(const FlowTrajectory& A, const FlowTrajectory& B) {
  if (A.size() != B.size()) throw ProtocolError("paired trajectories have different sample counts");
  for (std::size_t k = 0; k < A.size(); ++k) check_same_sample(A.states[k], B.states[k]);
}

inline PairWindow make_pair_window(const FlowTrajectory& A, const FlowTrajectory& B,
                                   std::optional<std::size_t> center = {}) {
  check_same_sampling(A, B);
  return {make_window(A, center), make_window(B, center)};
}

/// d/dt d_ij against -2 sum_a (H^a h^a_ij - H~^a h~^a_ij).
inline ResidualReport check_dd(const PairWindow& w) {
  std::array<TensorField, 5> d;
  for (int k = 0; k < 5; ++k) d[k] = w.a.geo[k].g - w.b.geo[k].g;
  TensorField r = time_derivative({&d[0], &d[1], &d[2], &d[3], &d[4]}, w.a.dt);
  r += 2.0 * (mean_curvature_contraction(w.a.center()) - mean_curvature_contraction(w.b.center()));
  return make_report("dd", w.a.center(), w.a.center().norm_squared(r), w.a.dt, w.a.t);
}

/// d/dt w^a_i against nabla_i H^a - nabla~_i H~^a.
inline ResidualReport check_dw(const PairWindow& w) {
  const GeometryPack& A = w.a.center();
  const GeometryPack& B = w.b.center();
  const TensorFamily gA = A.nabla(A.H_fields());
  const TensorFamily gB = B.nabla(B.H_fields());
  TensorFamily res;
  for (int a = 0; a < A.ambient; ++a) {
    std::array<TensorField, 5> s;
    for (int k = 0; k < 5; ++k) s[k] = w.a.geo[k].dX[a] - w.b.geo[k].dX[a];
    TensorField r = time_derivative({&s[0], &s[1], &s[2], &s[3], &s[4]}, w.a.dt);
    r -= gA[a];
    r += gB[a];
    res.push_back(std::move(r));
  }
  return make_report("dw", A, A.norm_squared(res), w.a.dt, w.a.t);
}

inline ResidualReport check_dd(const FlowTrajectory& A, const FlowTrajectory& B, std::optional<std::size_t> c = {}) {
  return check_dd(make_pair_window(A, B, c));
}

inline ResidualReport check_dw(const FlowTrajectory& A, const FlowTrajectory& B, std::optional<std::size_t> c = {}) {
  return check_dw(make_pair_window(A, B, c));
}

namespace detail {

/// d/dt of uniformly sampled values at sample k: fourth-order, one-sided near the ends.
template <class T, class Combine>
T sample_derivative(const std::vector<T>& f, std::size_t k, double dt, Combine lin) {
  const std::size_t n = f.size();
  if (n < 5) throw ProtocolError("time derivatives need at least five samples");
  if (k >= 2 && k + 2 < n) return lin({&f[k - 2], &f[k - 1], &f[k + 1], &f[k + 2]}, {1.0, -8.0, 8.0, -1.0}, 12.0 * dt);
  if (k == 0) return lin({&f[0], &f[1], &f[2], &f[3], &f[4]}, {-25.0, 48.0, -36.0, 16.0, -3.0}, 12.0 * dt);
  if (k == 1) return lin({&f[0], &f[1], &f[2], &f[3], &f[4]}, {-3.0, -10.0, 18.0, -6.0, 1.0}, 12.0 * dt);
  if (k + 1 == n - 1)
    return lin({&f[n - 5], &f[n - 4], &f[n - 3], &f[n - 2], &f[n - 1]}, {-1.0, 6.0, -18.0, 10.0, 3.0}, 12.0 * dt);
  return lin({&f[n - 5], &f[n - 4], &f[n - 3], &f[n - 2], &f[n - 1]}, {3.0, -16.0, 36.0, -48.0, 25.0}, 12.0 * dt);
}

inline TensorField combine_fields(std::vector<const TensorField*> f, std::vector<double> c, double denom) {
  TensorField out(f[0]->grid(), f[0]->rank(), f[0]->upper_mask());
  auto& o = out.raw();
  for (std::size_t j = 0; j < f.size(); ++j) {
    const auto& src = f[j]->raw();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += c[j] * src[i];
  }
  for (double& v : o) v /= denom;
  return out;
}

inline double combine_scalars(std::vector<const double*> f, std::vector<double> c, double denom) {
  double s = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) s += c[j] * *f[j];
  return s / denom;
}

inline double integrate(const GeometryPack& geo, const Field& f) {
  double s = 0.0;
  for (std::size_t n = 0; n < f.size(); ++n) s += f[n] * std::sqrt(geo.det_g[n]);
  return s * geo.grid.cell_measure();
}

inline double sup(const Field& f) {
  double s = 0.0;
  for (double v : f) s = std::max(s, v);
  return s;
}

}  // namespace detail

struct NIntegralReport {
  std::vector<double> times;
  std::vector<double> lhs_sup;   // sup_x |N(t) - N(T)|_g(t)
  std::vector<double> rhs_sup;   // sup_x of the quadrature bound
  double min_slack = 0.0;        // min over nodes/times of rhs + quadrature estimate - lhs
  double quadrature_estimate = 0.0;
  bool holds = true;
};

/// |N(t) - N(T)|_g(t) <= int_t^T |d/ds N|_g(t) ds at every sample t, with the
/// metric frozen at t. The integral is the trapezoid rule on a fourth-order
/// sample derivative; its error bound dt^3/12 |f''| per interval (second
/// differences of the integrand) is added as slack, together with the
/// derivative-stencil error dt^4/5 |N^(5)| estimated from fifth differences.
/// Both are asymptotic estimates, so the slack is twice their sum.
inline NIntegralReport check_N_integral(const FlowTrajectory& A, const FlowTrajectory& B) {
  check_same_sampling(A, B);
  if (A.size() < 6) throw ProtocolError("N integral needs at least six samples");
  check_uniform(A.states);
  const double dt = A.states[1].time - A.states[0].time;
  std::vector<TensorField> N;
  std::vector<GeometryPack> geo;
  for (std::size_t k = 0; k < A.size(); ++k) {
    geo.push_back(compute_geometry(A.states[k]));
    N.push_back(geo.back().christoffel - compute_geometry(B.states[k]).christoffel);
  }
  std::vector<TensorField> dN;
  for (std::size_t k = 0; k < N.size(); ++k) dN.push_back(detail::sample_derivative(N, k, dt, detail::combine_fields));

  const std::size_t K = N.size() - 1;
  std::vector<Field> stencil_err;  // dt^4/5 |N^(5)|, per sample
  for (std::size_t j = 0; j <= K; ++j) {
    const std::size_t s0 = std::min(j >= 2 ? j - 2 : 0, K - 5);
    TensorField d5 = N[s0 + 5] - N[s0];
    d5 -= 5.0 * (N[s0 + 4] - N[s0 + 1]);
    d5 += 10.0 * (N[s0 + 3] - N[s0 + 2]);
    Field e = geo[j].norm_squared(d5);
    for (double& v : e) v = std::sqrt(v) / (5.0 * dt);
    stencil_err.push_back(std::move(e));
  }

  NIntegralReport rep;
  rep.min_slack = std::numeric_limits<double>::infinity();
  const double c3 = dt * dt * dt / 12.0;
  for (std::size_t k = 0; k < K; ++k) {
    const GeometryPack& g = geo[k];
    const std::size_t nodes = g.nodes();
    const Field lhs = g.norm_squared(N[k] - N[K]);
    const std::size_t j0 = k == 0 ? 0 : k - 1;
    std::vector<Field> f;  // |dN(s_j)|_g(t_k), j = j0..K
    for (std::size_t j = j0; j <= K; ++j) {
      f.push_back(g.norm_squared(dN[j]));
      for (double& v : f.back()) v = std::sqrt(v);
    }
    auto curv = [&](std::size_t j, std::size_t n) {  // |f''| at global sample j, clamped to interior
      const std::size_t c = std::clamp<std::size_t>(j, j0 + 1, K - 1) - j0;
      return std::abs(f[c - 1][n] - 2.0 * f[c][n] + f[c + 1][n]) / (dt * dt);
    };
    double lsup = 0.0, rsup = 0.0;
    for (std::size_t n = 0; n < nodes; ++n) {
      double integral = 0.0, est = 0.0;
      for (std::size_t j = k; j < K; ++j) {
        integral += 0.5 * dt * (f[j - j0][n] + f[j + 1 - j0][n]);
        est += c3 * std::max(curv(j, n), curv(j + 1, n)) + dt * std::max(stencil_err[j][n], stencil_err[j + 1][n]);
      }
      est *= 2.0;
      const double l = std::sqrt(lhs[n]);
      rep.quadrature_estimate = std::max(rep.quadrature_estimate, est);
      rep.min_slack = std::min(rep.min_slack, integral + est - l);
      lsup = std::max(lsup, l);
      rsup = std::max(rsup, integral);
    }
    rep.times.push_back(A.states[k].time);
    rep.lhs_sup.push_back(lsup);
    rep.rhs_sup.push_back(rsup);
  }
  rep.holds = rep.min_slack >= -1e-12;
  return rep;
}

/// Everything the heat-type inequalities need at one window centre.
struct InequalitySample {
  double t = 0.0;
  Field lhs1, lhs2, core;
  Field Y2, Z2, dY2;
};

inline InequalitySample evaluate_inequalities(const std::array<const DifferencePack*, 5>& p, double dt) {
  const DifferencePack& c = *p[2];
  const GeometryPack& geo = c.geo;
  std::array<TensorFamily, 5> Y, Z;
  for (int k = 0; k < 5; ++k) {
    Y[k] = p[k]->Y();
    Z[k] = p[k]->Z();
  }
  TensorFamily heat, dZ, gradY;
  for (std::size_t i = 0; i < Y[2].size(); ++i) {
    TensorField r = time_derivative({&Y[0][i], &Y[1][i], &Y[2][i], &Y[3][i], &Y[4][i]}, dt);
    r -= geo.laplacian(Y[2][i]);
    heat.push_back(std::move(r));
    gradY.push_back(geo.nabla(Y[2][i]));
  }
  for (std::size_t i = 0; i < Z[2].size(); ++i)
    dZ.push_back(time_derivative({&Z[0][i], &Z[1][i], &Z[2][i], &Z[3][i], &Z[4][i]}, dt));
  InequalitySample s;
  s.t = c.time;
  s.lhs1 = geo.norm_squared(heat);
  s.lhs2 = geo.norm_squared(dZ);
  s.Y2 = geo.norm_squared(Y[2]);
  s.Z2 = geo.norm_squared(Z[2]);
  s.dY2 = geo.norm_squared(gradY);
  s.core.resize(s.Y2.size());
  for (std::size_t n = 0; n < s.core.size(); ++n) s.core[n] = s.Y2[n] + s.dY2[n] + s.Z2[n];
  return s;
}

/// |(d/dt - Delta)Y|^2_g at the centre of a pair window.
inline Field heat_operator_Y(const PairWindow& w) {
  std::array<DifferencePack, 5> p;
  for (int k = 0; k < 5; ++k) p[k] = build_difference(w.a.geo[k], w.b.geo[k], w.a.t + (k - 2) * w.a.dt);
  return evaluate_inequalities({&p[0], &p[1], &p[2], &p[3], &p[4]}, w.a.dt).lhs1;
}

struct EnergyRow {
  double t = 0.0;
  double energy_Y = 0.0;  // int |Y|^2 dmu_g
  double energy_Z = 0.0;  // int |Z|^2 dmu_g
  double energy_core = 0.0;  // int (|Y|^2 + |nabla Y|^2 + |Z|^2) dmu_g
  double lhs1_sup = 0.0;
  double lhs2_sup = 0.0;
  double core_min = 0.0;
  double C1 = 0.0;  // sup over nodes at this time
  double C2 = 0.0;
};

struct InequalityReport {
  int m = 0;
  int N = 0;
  int order = 2;
  double step_dt = 0.0;    // integrator step
  double sample_dt = 0.0;  // spacing of evaluated samples
  double delta = 0.0;
  double T = 0.0;
  double K = 0.0;        // sup |h|_g over [delta, T]
  double K_tilde = 0.0;  // sup |h~|_g~ over [delta, T]
  double C1 = 0.0;
  double C2 = 0.0;
  std::size_t flagged = 0;  // nodes with core <= floor while an LHS exceeds it
  std::vector<EnergyRow> rows;

  /// Restricted to t >= delta2 (delta2 >= delta): sup over a smaller set.
  InequalityReport restricted(double delta2) const {
    InequalityReport r = *this;
    r.delta = delta2;
    r.rows.clear();
    r.C1 = r.C2 = 0.0;
    for (const auto& row : rows)
      if (row.t >= delta2) {
        r.rows.push_back(row);
        r.C1 = std::max(r.C1, row.C1);
        r.C2 = std::max(r.C2, row.C2);
      }
    return r;
  }
};

inline std::string limitation_statement() {
  return "Backward-in-time mean curvature flow is ill-posed and is not integrated here. Uniqueness is exercised only "
         "through the zero-difference test, the difference inequalities on forward flows, and the persistence of "
         "symmetry.";
}

inline void write_inequality_report(std::ostream& os, const InequalityReport& r) {
  const auto old = os.precision(12);
  os << "# difference inequalities\n";
  os << "limitation: " << limitation_statement() << "\n";
  os << "inequality_1: " << anchor_for("inequality_1") << "\n";
  os << "inequality_2: " << anchor_for("inequality_2") << "\n";
  os << "m: " << r.m << "\nN: " << r.N << "\norder: " << r.order << "\ndt: " << r.step_dt
     << "\nsample_dt: " << r.sample_dt << "\ndelta: " << r.delta << "\nT: " << r.T << "\nK: " << r.K
     << "\nK_tilde: " << r.K_tilde << "\nC1: " << r.C1 << "\nC2: " << r.C2 << "\ncore_floor: " << kCoreFloor
     << "\nflagged: " << r.flagged << "\n";
  os << "energies:\n";
  os << "t,energy_Y,energy_Z,energy_core,lhs1_sup,lhs2_sup,core_min,C1_t,C2_t\n";
  for (const auto& row : r.rows)
    os << row.t << ',' << row.energy_Y << ',' << row.energy_Z << ',' << row.energy_core << ',' << row.lhs1_sup << ','
       << row.lhs2_sup << ',' << row.core_min << ',' << row.C1 << ',' << row.C2 << '\n';
  os.precision(old);
}

/// Evaluates the inequalities at every sample with t in [delta, T] (T defaults to
/// the last sample that still has a centred stencil).
inline InequalityReport verify_inequalities(const FlowTrajectory& A, const FlowTrajectory& B, double delta,
                                            std::optional<double> T = {}) {
  check_same_sampling(A, B);
  if (A.size() < 5) throw ProtocolError("inequalities need at least five samples");
  check_uniform(A.states);
  const double sdt = A.states[1].time - A.states[0].time;
  const double t_end = T.value_or(A.states[A.size() - 3].time);
  if (!(delta > 0.0 && delta < t_end)) throw DomainError("delta must lie in (0, T)");
  const double tol = 1e-9 * sdt;
  if (A.states[2].time > delta + tol || A.states[A.size() - 3].time < t_end - tol)
    throw ProtocolError("samples do not cover [delta - 2 dt, T + 2 dt]");

  InequalityReport rep;
  const GridSpec& grid = A.front().grid;
  rep.m = grid.m;
  rep.N = grid.N;
  rep.order = grid.order;
  rep.step_dt = A.dt_history.empty() ? sdt : A.dt_history.front();
  rep.sample_dt = sdt;
  rep.delta = delta;
  rep.T = t_end;

  std::deque<DifferencePack> window;
  std::deque<double> Kwin, Ktwin;
  for (std::size_t k = 0; k < A.size(); ++k) {
    const double tk = A.states[k].time;
    // only samples within two steps of [delta, T] are needed
    if (tk < delta - 2.0 * sdt - tol || tk > t_end + 2.0 * sdt + tol) continue;
    const GeometryPack ga = compute_geometry(A.states[k]);
    const GeometryPack gb = compute_geometry(B.states[k]);
    if (tk >= delta - tol && tk <= t_end + tol) {
      rep.K = std::max(rep.K, std::sqrt(detail::sup(ga.norm_squared(ga.h))));
      rep.K_tilde = std::max(rep.K_tilde, std::sqrt(detail::sup(gb.norm_squared(gb.h))));
    }
    window.push_back(build_difference(ga, gb, tk));
    if (window.size() > 5) window.pop_front();
    if (window.size() < 5) continue;
    const double tc = window[2].time;
    if (tc < delta - tol || tc > t_end + tol) continue;
    const InequalitySample s =
        evaluate_inequalities({&window[0], &window[1], &window[2], &window[3], &window[4]}, sdt);
    EnergyRow row;
    row.t = tc;
    const GeometryPack& g = window[2].geo;
    row.energy_Y = detail::integrate(g, s.Y2);
    row.energy_Z = detail::integrate(g, s.Z2);
    row.energy_core = detail::integrate(g, s.core);
    row.lhs1_sup = detail::sup(s.lhs1);
    row.lhs2_sup = detail::sup(s.lhs2);
    row.core_min = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < s.core.size(); ++n) {
      row.core_min = std::min(row.core_min, s.core[n]);
      if (s.core[n] > kCoreFloor) {
        row.C1 = std::max(row.C1, s.lhs1[n] / s.core[n]);
        row.C2 = std::max(row.C2, s.lhs2[n] / s.core[n]);
      } else if (s.lhs1[n] > kCoreFloor || s.lhs2[n] > kCoreFloor) {
        ++rep.flagged;
      }
    }
    rep.C1 = std::max(rep.C1, row.C1);
    rep.C2 = std::max(rep.C2, row.C2);
    rep.rows.push_back(row);
  }
  return rep;
}

struct GronwallRow {
  double t = 0.0;
  double energy = 0.0;      // ||Y||^2 + ||Z||^2
  double core = 0.0;        // ||Y||^2 + ||nabla Y||^2 + ||Z||^2
  double rate = 0.0;        // d/dt energy
  double bound = 0.0;       // C* core
  double envelope = 0.0;    // energy(delta) + C* int_delta^t core
  bool ok = true;
};

struct GronwallReport {
  double C_star = 0.0;      // 1 + C1 + C2 + 8 sqrt(m) K^2
  double C_fitted = 0.0;    // max rate / core
  bool holds = true;
  std::vector<GronwallRow> rows;
};

/// Energy check built on a fitted inequality report. The metric and volume
/// derivatives contribute at most 2 sqrt(m) K^2 per tensor slot (rank <= 4).
inline GronwallReport forward_gronwall(const InequalityReport& rep) {
  GronwallReport g;
  g.C_star = 1.0 + rep.C1 + rep.C2 + 8.0 * std::sqrt(static_cast<double>(rep.m)) * rep.K * rep.K;
  const auto& rows = rep.rows;
  if (rows.size() < 5) throw ProtocolError("energy check needs at least five evaluated samples");
  std::vector<double> E;
  for (const auto& r : rows) E.push_back(r.energy_Y + r.energy_Z);
  double integral = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    GronwallRow row;
    row.t = rows[k].t;
    row.energy = E[k];
    row.core = rows[k].energy_core;
    row.rate = detail::sample_derivative(E, k, rep.sample_dt, detail::combine_scalars);
    row.bound = g.C_star * row.core;
    if (k > 0) integral += 0.5 * (rows[k].t - rows[k - 1].t) * (rows[k].energy_core + rows[k - 1].energy_core);
    row.envelope = E[0] + g.C_star * integral;
    const double slack = 1e-12 * std::max(1.0, row.bound);
    row.ok = row.rate <= row.bound + slack && row.energy <= row.envelope * (1.0 + 1e-9) + 1e-300;
    g.holds = g.holds && row.ok;
    if (row.core > kCoreFloor) g.C_fitted = std::max(g.C_fitted, row.rate / row.core);
    g.rows.push_back(row);
  }
  return g;
}

inline GronwallReport forward_gronwall(const FlowTrajectory& A, const FlowTrajectory& B, double delta) {
  return forward_gronwall(verify_inequalities(A, B, delta));
}

inline void write_gronwall_csv(std::ostream& os, const GronwallReport& g) {
  const auto old = os.precision(12);
  os << "# C_star=" << g.C_star << " C_fitted=" << g.C_fitted << " holds=" << (g.holds ? 1 : 0) << '\n';
  os << "t,energy,core,rate,bound,envelope,ok\n";
  for (const auto& r : g.rows)
    os << r.t << ',' << r.energy << ',' << r.core << ',' << r.rate << ',' << r.bound << ',' << r.envelope << ','
       << (r.ok ? 1 : 0) << '\n';
  os.precision(old);
}

/// Pair of flows sampled every `steps_per_sample` fixed steps up to T + 2 samples.
inline std::pair<FlowTrajectory, FlowTrajectory> run_pair(const Immersion& a, const Immersion& b, double T, double dt,
                                                         int steps_per_sample) {
  check_same_sample(a, b);
  const double sdt = dt * steps_per_sample;
  const long samples = std::lround((T - a.time) / sdt) + 3;
  return {run_uniform(a, dt, steps_per_sample, static_cast<int>(samples)),
          run_uniform(b, dt, steps_per_sample, static_cast<int>(samples))};
}

}  // namespace mcf
