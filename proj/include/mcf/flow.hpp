#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mcf/geometry.hpp"

namespace mcf {

/// Explicit step-size control. With `fixed_dt` set every step has exactly that
/// size and sample times must be integer multiples of it.
struct StepPolicy {
  double cfl_safety = 0.1;
  double dt_max = 1e-2;
  std::optional<double> fixed_dt;

  static StepPolicy fixed(double dt) {
    StepPolicy p;
    p.fixed_dt = dt;
    p.dt_max = dt;
    return p;
  }

  void validate() const {
    if (!(cfl_safety > 0.0 && cfl_safety <= 1.0)) throw PolicyError("cfl_safety must lie in (0, 1]");
    if (!(dt_max > 0.0)) throw PolicyError("dt_max must be positive");
    if (fixed_dt && !(*fixed_dt > 0.0)) throw PolicyError("fixed dt must be positive");
  }

  /// cfl_safety * l_min^2 capped by dt_max, l_min = min sqrt(g_ii) h over nodes and axes.
  double step_for(const GeometryPack& geo) const {
    if (fixed_dt) return *fixed_dt;
    const double h = geo.grid.spacing();
    double gmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < geo.m(); ++i)
      for (std::size_t n = 0; n < geo.nodes(); ++n) gmin = std::min(gmin, geo.g(n, i, i));
    return std::min(dt_max, cfl_safety * gmin * h * h);
  }
};

struct FlowTrajectory {
  std::vector<Immersion> states;
  std::vector<double> dt_history;

  std::size_t size() const { return states.size(); }
  const Immersion& front() const { return states.front(); }
  const Immersion& back() const { return states.back(); }
  std::vector<double> times() const {
    std::vector<double> t;
    for (const auto& s : states) t.push_back(s.time);
    return t;
  }
};

/// Mean curvature vector H^alpha at every node.
inline std::vector<Field> mcf_velocity(const Immersion& imm, double eps = kDefaultImmersionEps) {
  return compute_geometry(imm, eps).H;
}

namespace detail {

inline Immersion axpy(const Immersion& x, double a, const std::vector<Field>& v) {
  Immersion out = x;
  for (int c = 0; c < x.ambient(); ++c)
    for (std::size_t n = 0; n < x.nodes(); ++n) out.coords[c][n] += a * v[c][n];
  return out;
}

inline std::vector<Field> stage_velocity(const Immersion& x, double t, double eps) {
  try {
    auto v = mcf_velocity(x, eps);
    for (const auto& f : v)
      for (std::size_t n = 0; n < f.size(); ++n)
        if (!std::isfinite(f[n])) {
          std::ostringstream os;
          os << "non-finite velocity at node " << describe_node(x.grid, n) << " near t=" << t;
          throw BlowUpError(os.str());
        }
    return v;
  } catch (const DegenerateImmersionError& e) {
    std::ostringstream os;
    os << e.what() << " near t=" << t;
    throw BlowUpError(os.str());
  }
}

}  // namespace detail

/// One classical RK4 step of dX/dt = H.
inline Immersion step_rk4(const Immersion& x, double dt, double eps = kDefaultImmersionEps) {
  if (!(dt >= 0.0)) throw PolicyError("step size must be nonnegative");
  const double t = x.time;
  const auto k1 = detail::stage_velocity(x, t, eps);
  const auto k2 = detail::stage_velocity(detail::axpy(x, 0.5 * dt, k1), t + 0.5 * dt, eps);
  const auto k3 = detail::stage_velocity(detail::axpy(x, 0.5 * dt, k2), t + 0.5 * dt, eps);
  const auto k4 = detail::stage_velocity(detail::axpy(x, dt, k3), t + dt, eps);
  Immersion out = x;
  const double w = dt / 6.0;
  for (int c = 0; c < x.ambient(); ++c)
    for (std::size_t n = 0; n < x.nodes(); ++n)
      out.coords[c][n] += w * ((k1[c][n] + k4[c][n]) + 2.0 * (k2[c][n] + k3[c][n]));
  out.time = t + dt;
  if (!out.all_finite()) {
    std::ostringstream os;
    os << "non-finite position after step to t=" << out.time;
    throw BlowUpError(os.str());
  }
  return out;
}

/// Integrates from `initial` to `T`, recording states at exactly `sample_times`
/// (defaults to {t0, T}).
inline FlowTrajectory run_flow(const Immersion& initial, double T, const StepPolicy& policy,
                               std::vector<double> sample_times = {}, double eps = kDefaultImmersionEps) {
  policy.validate();
  check_nondegenerate(initial, eps);
  const double t0 = initial.time;
  if (!(T >= t0)) throw PolicyError("final time precedes the initial time");
  if (sample_times.empty()) sample_times = {t0, T};
  std::sort(sample_times.begin(), sample_times.end());
  sample_times.erase(std::unique(sample_times.begin(), sample_times.end()), sample_times.end());
  const double tol = 1e-12 * std::max(1.0, std::abs(T));
  for (double s : sample_times)
    if (s < t0 - tol || s > T + tol) throw PolicyError("sample time outside [t0, T]");

  FlowTrajectory traj;
  Immersion x = initial;

  if (policy.fixed_dt) {
    const double dt = *policy.fixed_dt;
    std::vector<long> targets;
    for (double s : sample_times) {
      const double k = (s - t0) / dt;
      const double kr = std::round(k);
      if (std::abs(k - kr) > 1e-7) {
        std::ostringstream os;
        os << "sample time " << s << " is not reachable with fixed dt " << dt;
        throw PolicyError(os.str());
      }
      targets.push_back(static_cast<long>(kr));
    }
    long step = 0;
    for (long target : targets) {
      while (step < target) {
        x = step_rk4(x, dt, eps);
        ++step;
        x.time = t0 + static_cast<double>(step) * dt;
        traj.dt_history.push_back(dt);
      }
      traj.states.push_back(x);
    }
    return traj;
  }

  for (double target : sample_times) {
    while (x.time < target - tol) {
      const GeometryPack geo = compute_geometry(x, eps);
      double dt = policy.step_for(geo);
      const double remaining = target - x.time;
      // Avoid a sliver step at the end of an interval.
      if (dt >= remaining || remaining - dt < 1e-3 * dt) dt = remaining;
      x = step_rk4(x, dt, eps);
      if (std::abs(x.time - target) <= tol) x.time = target;
      traj.dt_history.push_back(dt);
    }
    traj.states.push_back(x);
  }
  return traj;
}

/// Uniformly sampled trajectory: fixed step dt, a sample every `steps_per_sample` steps.
inline FlowTrajectory run_uniform(const Immersion& initial, double dt, int steps_per_sample, int samples,
                                  double eps = kDefaultImmersionEps) {
  if (steps_per_sample < 1 || samples < 1) throw PolicyError("uniform sampling needs positive counts");
  std::vector<double> times;
  for (int k = 0; k < samples; ++k) times.push_back(initial.time + k * steps_per_sample * dt);
  return run_flow(initial, times.back(), StepPolicy::fixed(dt), times, eps);
}

enum class OracleKind { shrinking_circle, product_torus };

/// Closed-form self-similar solutions: every circle factor follows r(t) = sqrt(r0^2 - 2t).
inline Immersion exact_oracle(OracleKind kind, const GridSpec& grid, const std::vector<double>& radii, double t) {
  auto radius_at = [t](double r0) {
    const double r2 = r0 * r0 - 2.0 * t;
    if (!(r2 > 0.0)) throw DomainError("requested time is at or past extinction");
    return std::sqrt(r2);
  };
  switch (kind) {
    case OracleKind::shrinking_circle:
      if (radii.size() != 1) throw DomainError("shrinking circle takes one radius");
      return shapes::circle(grid, t == 0.0 ? radii[0] : radius_at(radii[0]), t);
    case OracleKind::product_torus:
      if (radii.size() != 2) throw DomainError("product torus takes two radii");
      return shapes::product_torus(grid, t == 0.0 ? radii[0] : radius_at(radii[0]),
                                   t == 0.0 ? radii[1] : radius_at(radii[1]), 0.0, t);
  }
  throw DomainError("unknown oracle kind");
}

/// Mean distance from the origin of the ambient coordinates [first, first+2): the
/// radius of a circle factor.
inline double factor_radius(const Immersion& imm, int first) {
  double s = 0.0;
  for (std::size_t n = 0; n < imm.nodes(); ++n)
    s += std::hypot(imm.coords[first][n], imm.coords[first + 1][n]);
  return s / static_cast<double>(imm.nodes());
}

/// Writes one checkpoint per state plus `manifest.txt` listing `time file` lines.
inline void write_trajectory(const std::filesystem::path& dir, const FlowTrajectory& traj,
                             const std::string& prefix = "state") {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / (prefix + "_manifest.txt"));
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    std::ostringstream name;
    name << prefix << '_' << std::setw(5) << std::setfill('0') << k << ".txt";
    save_immersion((dir / name.str()).string(), traj.states[k]);
    manifest << std::setprecision(17) << traj.states[k].time << ' ' << name.str() << '\n';
  }
}

}  // namespace mcf
