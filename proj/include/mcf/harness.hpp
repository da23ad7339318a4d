#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcf/difference.hpp"

namespace mcf {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum class ExperimentKind { simulate, identities, diff_system, symmetry, convergence };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::simulate: return "simulate";
    case ExperimentKind::identities: return "identities";
    case ExperimentKind::diff_system: return "diff-system";
    case ExperimentKind::symmetry: return "symmetry";
    case ExperimentKind::convergence: return "convergence";
  }
  return "?";
}

inline ExperimentKind parse_kind(const std::string& s) {
  for (auto k : {ExperimentKind::simulate, ExperimentKind::identities, ExperimentKind::diff_system,
                 ExperimentKind::symmetry, ExperimentKind::convergence})
    if (to_string(k) == s) return k;
  throw ConfigError("experiment: unknown kind '" + s + "'");
}

struct GeometrySpec {
  std::string kind = "circle";  // circle, ellipse, product_torus, revolution_torus, checkpoint
  double radius = 1.0;
  double a = 1.5, b = 1.0;
  double r1 = 1.0, r2 = 1.0, wave = 0.0;
  double R = 2.0, r = 0.7;
  std::string path;
  double perturb_amplitude = 0.0;
  int perturb_modes = 3;
  std::uint64_t perturb_seed = 0;

  int dimension() const {
    if (kind == "circle" || kind == "ellipse") return 1;
    if (kind == "product_torus" || kind == "revolution_torus") return 2;
    return 0;  // from the checkpoint
  }
};

struct ToleranceSpec {
  double symmetry = 1e-10;
  double precondition = 1e-13;
  double order = 1.9;
  double trace = 1e-12;
  std::optional<double> oracle;  // radius error for circle/product torus simulations
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::simulate;
  int m = 1;
  int N = 64;
  int order = 2;
  std::optional<int> ambient;
  GeometrySpec geometry;
  std::optional<GeometrySpec> second_geometry;
  double T = 0.1;
  double delta = 0.0;
  StepPolicy policy;
  std::optional<double> sample_interval;
  double t_center = 0.02;
  std::vector<int> resolutions;
  int bernstein_k = 2;
  json symmetry;  // validated lazily against the grid
  ToleranceSpec tol;
  std::uint64_t seed = 0;
  fs::path base_dir;  // relative checkpoint paths resolve against this
};

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError((where.empty() ? "" : where + ".") + it.key() + ": unknown key");
  }
}

inline std::string field(const std::string& where, const char* key) { return where.empty() ? key : where + "." + key; }

inline double get_number(const json& j, const char* key, const std::string& where, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw ConfigError(field(where, key) + ": expected a number");
  const double v = j[key].get<double>();
  if (!std::isfinite(v)) throw ConfigError(field(where, key) + ": must be finite");
  return v;
}

inline int get_int(const json& j, const char* key, const std::string& where, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer()) throw ConfigError(field(where, key) + ": expected an integer");
  return j[key].get<int>();
}

inline std::uint64_t get_seed(const json& j, const char* key, const std::string& where, std::uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer() || j[key].get<std::int64_t>() < 0)
    throw ConfigError(field(where, key) + ": expected a nonnegative integer");
  return j[key].get<std::uint64_t>();
}

inline GeometrySpec parse_geometry(const json& j, const std::string& where, std::uint64_t seed) {
  check_keys(j, {"kind", "radius", "a", "b", "r1", "r2", "wave", "R", "r", "path", "perturbation"}, where);
  GeometrySpec g;
  if (!j.contains("kind") || !j["kind"].is_string()) throw ConfigError(field(where, "kind") + ": required string");
  g.kind = j["kind"].get<std::string>();
  if (g.kind != "circle" && g.kind != "ellipse" && g.kind != "product_torus" && g.kind != "revolution_torus" &&
      g.kind != "checkpoint")
    throw ConfigError(field(where, "kind") + ": unknown geometry '" + g.kind + "'");
  g.radius = get_number(j, "radius", where, g.radius);
  g.a = get_number(j, "a", where, g.a);
  g.b = get_number(j, "b", where, g.b);
  g.r1 = get_number(j, "r1", where, g.r1);
  g.r2 = get_number(j, "r2", where, g.r2);
  g.wave = get_number(j, "wave", where, g.wave);
  g.R = get_number(j, "R", where, g.R);
  g.r = get_number(j, "r", where, g.r);
  for (const auto& [key, v] : std::initializer_list<std::pair<const char*, double>>{
           {"radius", g.radius}, {"a", g.a}, {"b", g.b}, {"r1", g.r1}, {"r2", g.r2}, {"R", g.R}, {"r", g.r}})
    if (!(v > 0.0)) throw ConfigError(field(where, key) + ": must be positive");
  if (g.kind == "revolution_torus" && !(g.R > g.r)) throw ConfigError(field(where, "r") + ": must be smaller than R");
  if (g.kind == "checkpoint") {
    if (!j.contains("path") || !j["path"].is_string()) throw ConfigError(field(where, "path") + ": required string");
    g.path = j["path"].get<std::string>();
  }
  g.perturb_seed = seed;
  if (j.contains("perturbation")) {
    const std::string pw = field(where, "perturbation");
    const json& p = j["perturbation"];
    check_keys(p, {"amplitude", "modes", "seed"}, pw);
    g.perturb_amplitude = get_number(p, "amplitude", pw, 0.0);
    g.perturb_modes = get_int(p, "modes", pw, 3);
    g.perturb_seed = get_seed(p, "seed", pw, seed);
    if (g.perturb_amplitude < 0.0) throw ConfigError(field(pw, "amplitude") + ": must be nonnegative");
    if (g.perturb_modes < 1) throw ConfigError(field(pw, "modes") + ": must be >= 1");
  }
  return g;
}

}  // namespace detail

/// Parses and validates a JSON experiment description. Every failure is a
/// ConfigError whose message starts with the offending field.
inline ExperimentConfig parse_config(const json& j, const fs::path& base_dir = {}) {
  using namespace detail;
  check_keys(j, {"experiment", "grid", "ambient", "geometry", "second_geometry", "T", "delta", "dt",
                 "sample_interval", "t_center", "resolutions", "bernstein_k", "symmetry", "tolerances", "seed"},
             "");
  ExperimentConfig c;
  c.base_dir = base_dir;
  if (!j.contains("experiment") || !j["experiment"].is_string()) throw ConfigError("experiment: required string");
  c.kind = parse_kind(j["experiment"].get<std::string>());
  c.seed = get_seed(j, "seed", "", 0);

  if (!j.contains("geometry")) throw ConfigError("geometry: required");
  c.geometry = parse_geometry(j["geometry"], "geometry", c.seed);
  if (j.contains("second_geometry")) c.second_geometry = parse_geometry(j["second_geometry"], "second_geometry", c.seed + 1);

  if (j.contains("grid")) {
    const json& g = j["grid"];
    check_keys(g, {"m", "N", "order"}, "grid");
    c.m = get_int(g, "m", "grid", c.geometry.dimension() ? c.geometry.dimension() : 1);
    c.N = get_int(g, "N", "grid", c.N);
    c.order = get_int(g, "order", "grid", c.order);
  } else if (c.geometry.dimension()) {
    c.m = c.geometry.dimension();
  }
  if (c.N < 8) throw ConfigError("grid.N: must be >= 8");
  if (c.m != 1 && c.m != 2) throw ConfigError("grid.m: must be 1 or 2");
  if (c.order != 2 && c.order != 4) throw ConfigError("grid.order: must be 2 or 4");
  for (const GeometrySpec* g : {&c.geometry, c.second_geometry ? &*c.second_geometry : nullptr}) {
    if (!g) continue;
    if (g->dimension() && g->dimension() != c.m)
      throw ConfigError("grid.m: does not match geometry '" + g->kind + "'");
    if (g->kind == "checkpoint") {
      fs::path p = g->path;
      if (p.is_relative()) p = base_dir / p;
      if (!fs::exists(p)) throw ConfigError("geometry.path: file not found: " + p.string());
    }
  }
  if (j.contains("ambient")) {
    c.ambient = get_int(j, "ambient", "", 0);
    if (*c.ambient <= c.m) throw ConfigError("ambient: must exceed the grid dimension");
  }

  c.T = get_number(j, "T", "", c.T);
  if (!(c.T > 0.0)) throw ConfigError("T: must be positive");
  c.delta = get_number(j, "delta", "", c.kind == ExperimentKind::diff_system ? c.T / 10.0 : 0.0);
  if (c.kind == ExperimentKind::diff_system && !(c.delta > 0.0 && c.delta < c.T))
    throw ConfigError("delta: must satisfy 0 < delta < T");
  if (j.contains("dt")) {
    const json& d = j["dt"];
    check_keys(d, {"fixed", "cfl_safety", "dt_max"}, "dt");
    if (d.contains("fixed")) c.policy = StepPolicy::fixed(get_number(d, "fixed", "dt", 0.0));
    c.policy.cfl_safety = get_number(d, "cfl_safety", "dt", c.policy.cfl_safety);
    if (!d.contains("fixed")) c.policy.dt_max = get_number(d, "dt_max", "dt", c.policy.dt_max);
    try {
      c.policy.validate();
    } catch (const PolicyError& e) {
      throw ConfigError(std::string("dt: ") + e.what());
    }
  }
  if (j.contains("sample_interval")) {
    c.sample_interval = get_number(j, "sample_interval", "", 0.0);
    if (!(*c.sample_interval > 0.0)) throw ConfigError("sample_interval: must be positive");
  }
  c.t_center = get_number(j, "t_center", "", c.t_center);
  if (!(c.t_center > 0.0)) throw ConfigError("t_center: must be positive");
  c.bernstein_k = get_int(j, "bernstein_k", "", c.bernstein_k);
  if (c.bernstein_k < 0 || c.bernstein_k > 3) throw ConfigError("bernstein_k: must lie in [0, 3]");

  if (j.contains("resolutions")) {
    if (!j["resolutions"].is_array()) throw ConfigError("resolutions: expected an array");
    for (const auto& v : j["resolutions"]) {
      if (!v.is_number_integer() || v.get<int>() < 8) throw ConfigError("resolutions: entries must be integers >= 8");
      c.resolutions.push_back(v.get<int>());
    }
  }
  if (c.kind == ExperimentKind::convergence) {
    if (c.resolutions.size() < 3) throw ConfigError("resolutions: convergence needs at least three resolutions");
    for (std::size_t k = 1; k < c.resolutions.size(); ++k)
      if (c.resolutions[k] != 2 * c.resolutions[k - 1])
        throw ConfigError("resolutions: each resolution must double the previous one");
  }

  if (j.contains("symmetry")) c.symmetry = j["symmetry"];
  if (c.kind == ExperimentKind::symmetry && c.symmetry.is_null()) throw ConfigError("symmetry: required for symmetry runs");
  if (!c.symmetry.is_null()) check_keys(c.symmetry, {"Q", "b", "permutation"}, "symmetry");

  if (c.kind == ExperimentKind::diff_system) {
    if (!c.policy.fixed_dt) throw ConfigError("dt.fixed: paired runs need a fixed step");
    if (!c.sample_interval) c.sample_interval = *c.policy.fixed_dt;
    const double ratio = *c.sample_interval / *c.policy.fixed_dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio || std::round(ratio) < 1.0)
      throw ConfigError("sample_interval: must be a positive multiple of dt.fixed");
  }

  if (j.contains("tolerances")) {
    const json& t = j["tolerances"];
    check_keys(t, {"symmetry", "precondition", "order", "trace", "oracle"}, "tolerances");
    c.tol.symmetry = get_number(t, "symmetry", "tolerances", c.tol.symmetry);
    c.tol.precondition = get_number(t, "precondition", "tolerances", c.tol.precondition);
    c.tol.order = get_number(t, "order", "tolerances", c.tol.order);
    c.tol.trace = get_number(t, "trace", "tolerances", c.tol.trace);
    if (t.contains("oracle")) c.tol.oracle = get_number(t, "oracle", "tolerances", 0.0);
  }
  return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  return parse_config(j, path.parent_path());
}

/// Initial immersion described by `g` on an m-dimensional grid of resolution N.
inline Immersion build_geometry(const GeometrySpec& g, const ExperimentConfig& c, int N) {
  const GridSpec grid(c.m, N, c.order);
  Immersion x = [&] {
    if (g.kind == "circle") return shapes::circle(grid, g.radius);
    if (g.kind == "ellipse") return shapes::ellipse(grid, g.a, g.b);
    if (g.kind == "product_torus") return shapes::product_torus(grid, g.r1, g.r2, g.wave);
    if (g.kind == "revolution_torus") return shapes::revolution_torus(grid, g.R, g.r);
    fs::path p = g.path;
    if (p.is_relative()) p = c.base_dir / p;
    Immersion loaded = load_immersion(p.string(), c.order);
    if (loaded.grid.m != c.m || loaded.grid.N != N)
      throw ConfigError("geometry.path: checkpoint grid does not match grid.m / grid.N");
    return loaded;
  }();
  if (c.ambient && x.ambient() != *c.ambient)
    throw ConfigError("ambient: geometry '" + g.kind + "' lives in R^" + std::to_string(x.ambient()));
  if (g.perturb_amplitude > 0.0) x = shapes::perturb(x, g.perturb_amplitude, g.perturb_modes, g.perturb_seed);
  return x;
}

/// Node permutation from a descriptor: identity, shift, reflect, swap, compose, explicit.
inline std::vector<std::size_t> parse_permutation(const json& p, const GridSpec& grid, const std::string& where) {
  if (!p.is_object() || !p.contains("kind") || !p["kind"].is_string())
    throw ConfigError(where + ".kind: required string");
  const std::string kind = p["kind"].get<std::string>();
  try {
    if (kind == "identity") {
      detail::check_keys(p, {"kind"}, where);
      return node_maps::shift(grid, 0, 0);
    }
    if (kind == "shift") {
      detail::check_keys(p, {"kind", "axis", "by"}, where);
      return node_maps::shift(grid, detail::get_int(p, "axis", where, 0), detail::get_int(p, "by", where, 1));
    }
    if (kind == "reflect") {
      detail::check_keys(p, {"kind", "axis"}, where);
      return node_maps::reflect(grid, detail::get_int(p, "axis", where, 0));
    }
    if (kind == "swap") {
      detail::check_keys(p, {"kind"}, where);
      return node_maps::swap_axes(grid);
    }
    if (kind == "compose") {
      detail::check_keys(p, {"kind", "first", "second"}, where);
      if (!p.contains("first") || !p.contains("second")) throw ConfigError(where + ": compose needs first and second");
      return node_maps::compose(parse_permutation(p["first"], grid, where + ".first"),
                                parse_permutation(p["second"], grid, where + ".second"));
    }
    if (kind == "explicit") {
      detail::check_keys(p, {"kind", "map"}, where);
      if (!p.contains("map") || !p["map"].is_array()) throw ConfigError(where + ".map: required array");
      std::vector<std::size_t> out;
      for (const auto& v : p["map"]) {
        if (!v.is_number_unsigned()) throw ConfigError(where + ".map: entries must be node indices");
        out.push_back(v.get<std::size_t>());
      }
      return out;
    }
  } catch (const InvalidAxisError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  throw ConfigError(where + ".kind: unknown permutation '" + kind + "'");
}

inline SymmetryAction parse_symmetry(const json& s, const GridSpec& grid, int ambient) {
  SymmetryAction a = SymmetryAction::identity(grid, ambient);
  if (s.contains("Q")) {
    try {
      a.Q = s["Q"].get<std::vector<std::vector<double>>>();
    } catch (const json::exception&) {
      throw ConfigError("symmetry.Q: expected a matrix of numbers");
    }
  }
  if (s.contains("b")) {
    try {
      a.b = s["b"].get<std::vector<double>>();
    } catch (const json::exception&) {
      throw ConfigError("symmetry.b: expected a vector of numbers");
    }
  }
  if (s.contains("permutation")) a.perm = parse_permutation(s["permutation"], grid, "symmetry.permutation");
  try {
    a.validate(grid, ambient);
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("symmetry: ") + e.what());
  } catch (const DomainError& e) {
    throw ConfigError(std::string("symmetry: ") + e.what());
  }
  return a;
}

// ---------------------------------------------------------------------------

struct RunResult {
  int exit_code = 0;
  std::vector<std::string> failures;  // failing assertion, named by identity
  std::vector<std::string> files;     // relative to the output directory
  std::vector<std::string> summary;   // human-readable lines
};

namespace detail {

class Outputs {
 public:
  Outputs(const fs::path& dir, RunResult& r) : dir_(dir), r_(r) { fs::create_directories(dir); }

  std::ofstream open(const std::string& name) {
    r_.files.push_back(name);
    std::ofstream os(dir_ / name);
    if (!os) throw ProtocolError("cannot write " + (dir_ / name).string());
    os << std::setprecision(12);
    return os;
  }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  RunResult& r_;
};

inline void assert_that(RunResult& r, bool ok, const std::string& identity, const std::string& message) {
  if (ok) return;
  r.failures.push_back(identity + ": " + message);
}

inline std::vector<double> sample_times(double t0, double T, std::optional<double> interval) {
  std::vector<double> times{t0};
  if (interval) {
    const long n = std::lround(std::floor((T - t0) / *interval + 1e-9));
    for (long k = 1; k <= n; ++k) times.push_back(t0 + k * *interval);
  }
  if (T - times.back() > 1e-12 * std::max(1.0, T)) times.push_back(T);
  return times;
}

inline void write_residuals(Outputs& out, const std::string& name, const std::vector<ResidualReport>& rows) {
  auto os = out.open(name);
  write_residual_csv_header(os);
  for (const auto& r : rows) write_residual_csv_row(os, r);
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

}  // namespace detail

inline void run_simulate(const ExperimentConfig& c, detail::Outputs& out, RunResult& r) {
  const Immersion x0 = build_geometry(c.geometry, c, c.N);
  const auto times = detail::sample_times(x0.time, c.T, c.sample_interval);
  const FlowTrajectory traj = run_flow(x0, c.T, c.policy, times);
  write_trajectory(out.dir() / "checkpoints", traj);
  r.files.push_back("checkpoints/state_manifest.txt");

  const bool circle = c.geometry.kind == "circle" && c.geometry.perturb_amplitude == 0.0;
  const bool torus = c.geometry.kind == "product_torus" && c.geometry.wave == 0.0 && c.geometry.perturb_amplitude == 0.0;
  auto os = out.open("trajectory.csv");
  os << "t,volume,max_H";
  if (circle || torus) os << ",radius_1,oracle_1" << (torus ? ",radius_2,oracle_2" : "") << ",max_radius_error";
  os << '\n';
  double worst = 0.0;
  for (const auto& s : traj.states) {
    const GeometryPack geo = compute_geometry(s);
    double maxH = 0.0;
    for (double v : geo.mean_curvature_norm()) maxH = std::max(maxH, v);
    os << s.time << ',' << induced_volume(geo) << ',' << maxH;
    if (circle || torus) {
      const std::vector<double> r0 = circle ? std::vector<double>{c.geometry.radius}
                                            : std::vector<double>{c.geometry.r1, c.geometry.r2};
      double err = 0.0;
      for (std::size_t f = 0; f < r0.size(); ++f) {
        const double measured = factor_radius(s, static_cast<int>(2 * f));
        const double exact = std::sqrt(r0[f] * r0[f] - 2.0 * s.time);
        err = std::max(err, std::abs(measured - exact));
        os << ',' << measured << ',' << exact;
      }
      os << ',' << err;
      worst = std::max(worst, err);
    }
    os << '\n';
  }
  r.summary.push_back("states: " + std::to_string(traj.size()) + ", steps: " + std::to_string(traj.dt_history.size()));
  if ((circle || torus)) {
    r.summary.push_back("max radius error against the exact solution: " + detail::fmt(worst));
    if (c.tol.oracle) detail::assert_that(r, worst <= *c.tol.oracle, "oracle", "radius error " + detail::fmt(worst));
  } else if (c.tol.oracle) {
    throw ConfigError("tolerances.oracle: only round circles and flat product tori have an exact solution");
  }
}

inline void run_identities(const ExperimentConfig& c, detail::Outputs& out, RunResult& r, bool convergence) {
  const std::vector<int> Ns = c.resolutions.empty() ? std::vector<int>{c.N} : c.resolutions;
  std::vector<std::vector<ResidualReport>> rows;
  for (int N : Ns) {
    const Immersion x0 = build_geometry(c.geometry, c, N);
    rows.push_back(identity_suite(x0, c.t_center, c.policy.fixed_dt));
  }
  fill_orders(rows);

  std::vector<std::string> names;
  for (const auto& rep : rows.front()) names.push_back(rep.identity);
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::vector<ResidualReport> per;
    std::vector<double> sups;
    for (const auto& row : rows) {
      per.push_back(row[i]);
      sups.push_back(row[i].sup);
    }
    if (!convergence) detail::write_residuals(out, names[i] + ".csv", per);
    if (names[i] == "trace") {
      double worst = 0.0;
      for (double s : sups) worst = std::max(worst, s);
      detail::assert_that(r, worst <= c.tol.trace, "trace", "residual " + detail::fmt(worst));
      r.summary.push_back("trace: max residual " + detail::fmt(worst));
      continue;
    }
    if (Ns.size() >= 2) {
      const ConvergenceVerdict v = classify(sups);
      detail::assert_that(r, v.passes(c.tol.order), names[i], "observed order " + detail::fmt(v.finest_order()));
      r.summary.push_back(names[i] + ": " + (v.exact ? std::string("exact") : "order " + detail::fmt(v.finest_order())));
    } else {
      r.summary.push_back(names[i] + ": sup residual " + detail::fmt(sups.front()));
    }
  }

  if (convergence) {
    auto os = out.open("convergence.csv");
    os << "identity,anchor,N,dt,sup_residual,l2_residual,order_estimate,status\n";
    for (std::size_t i = 0; i < names.size(); ++i) {
      std::vector<double> sups;
      for (const auto& row : rows) sups.push_back(row[i].sup);
      const ConvergenceVerdict v = classify(sups);
      const bool is_trace = names[i] == "trace";
      const std::string status = v.exact ? "exact" : is_trace ? "failed" : v.passes(c.tol.order) ? "converged" : "failed";
      for (const auto& row : rows) {
        const auto& rep = row[i];
        os << rep.identity << ',' << detail::csv_quote(rep.anchor) << ',' << rep.N << ',' << rep.dt << ',' << rep.sup
           << ',' << rep.l2 << ',';
        if (!std::isnan(rep.order_estimate)) os << rep.order_estimate;
        os << ',' << status << '\n';
      }
    }
    return;
  }

  // Derivative monitor along the flow at the base resolution.
  const Immersion x0 = build_geometry(c.geometry, c, c.N);
  const FlowTrajectory traj = run_flow(x0, c.T, c.policy, detail::sample_times(x0.time, c.T, c.sample_interval));
  const auto table = measure_bernstein(traj, c.bernstein_k);
  auto os = out.open("bernstein.csv");
  os << "t";
  for (int k = 0; k <= c.bernstein_k; ++k) os << ",sup_nabla" << k << "_h";
  os << '\n';
  for (const auto& row : table) {
    os << row.t;
    for (double v : row.sup_norms) os << ',' << v;
    os << '\n';
  }
}

inline void run_diff_system(const ExperimentConfig& c, detail::Outputs& out, RunResult& r) {
  const Immersion a = build_geometry(c.geometry, c, c.N);
  const Immersion b = build_geometry(c.second_geometry.value_or(c.geometry), c, c.N);
  const double dt = *c.policy.fixed_dt;
  const int sps = static_cast<int>(std::lround(*c.sample_interval / dt));
  const auto [A, B] = run_pair(a, b, c.T, dt, sps);

  const InequalityReport rep = verify_inequalities(A, B, c.delta, c.T);
  {
    auto os = out.open("inequality_report.txt");
    write_inequality_report(os, rep);
  }
  const GronwallReport gr = forward_gronwall(rep);
  {
    auto os = out.open("gronwall.csv");
    write_gronwall_csv(os, gr);
  }

  // Exact displays and metric equivalence at a few evaluation times.
  std::vector<ResidualReport> dd, dw;
  auto eq = out.open("equivalence.csv");
  eq << "t,gamma\n";
  const std::size_t first = static_cast<std::size_t>(std::lround(c.delta / *c.sample_interval));
  const std::size_t last = A.size() - 3;
  for (int q = 0; q < 5; ++q) {
    const std::size_t k = first + (last - first) * q / 4;
    const PairWindow w = make_pair_window(A, B, k);
    dd.push_back(check_dd(w));
    dw.push_back(check_dw(w));
    eq << w.a.t << ',' << measure_equivalence(w.a.center().g, w.b.center().g) << '\n';
  }
  detail::write_residuals(out, "dd.csv", dd);
  detail::write_residuals(out, "dw.csv", dw);

  const NIntegralReport ni = check_N_integral(A, B);
  {
    auto os = out.open("n_integral.csv");
    os << "# " << anchor_for("N_integral") << "\n# min_slack=" << ni.min_slack
       << " quadrature_estimate=" << ni.quadrature_estimate << '\n';
    os << "t,lhs_sup,rhs_sup\n";
    for (std::size_t k = 0; k < ni.times.size(); ++k)
      os << ni.times[k] << ',' << ni.lhs_sup[k] << ',' << ni.rhs_sup[k] << '\n';
  }

  r.summary.push_back("C1 = " + detail::fmt(rep.C1) + ", C2 = " + detail::fmt(rep.C2) + ", K = " + detail::fmt(rep.K) +
                      ", K~ = " + detail::fmt(rep.K_tilde));
  r.summary.push_back("C* = " + detail::fmt(gr.C_star) + ", fitted energy constant = " + detail::fmt(gr.C_fitted));
  detail::assert_that(r, rep.flagged == 0, "inequality_1",
                      std::to_string(rep.flagged) + " nodes with vanishing core and nonzero left side");
  detail::assert_that(r, gr.holds, "gronwall", "energy rate exceeds C* times the core energy");
  detail::assert_that(r, ni.holds, "N_integral", "bound violated, min slack " + detail::fmt(ni.min_slack));
  bool identical = !c.second_geometry;
  if (identical) {
    for (const auto& row : rep.rows)
      identical = identical && row.energy_Y == 0.0 && row.energy_Z == 0.0 && row.lhs1_sup == 0.0 && row.lhs2_sup == 0.0;
    detail::assert_that(r, identical, "inequality_1", "identical flows produced a nonzero difference");
  }
}

inline void run_symmetry(const ExperimentConfig& c, detail::Outputs& out, RunResult& r) {
  Immersion x = build_geometry(c.geometry, c, c.N);
  const SymmetryAction s = parse_symmetry(c.symmetry, x.grid, x.ambient());
  const double d0 = symmetry_defect(x, s);
  if (d0 > c.tol.precondition)
    throw PreconditionError("symmetry: initial defect " + detail::fmt(d0) + " exceeds " + detail::fmt(c.tol.precondition) +
                            "; the action is not a symmetry of the initial immersion");
  auto os = out.open("defect.csv");
  os << "step,t,defect\n" << 0 << ',' << x.time << ',' << d0 << '\n';
  double worst = d0;
  long step = 0;
  const double t0 = x.time;
  while (x.time < c.T - 1e-12 * std::max(1.0, c.T)) {
    double dt = c.policy.step_for(compute_geometry(x));
    if (!c.policy.fixed_dt && x.time + dt > c.T) dt = c.T - x.time;
    x = step_rk4(x, dt);
    ++step;
    if (c.policy.fixed_dt) x.time = t0 + step * dt;
    const double d = symmetry_defect(x, s);
    worst = std::max(worst, d);
    os << step << ',' << x.time << ',' << d << '\n';
  }
  r.summary.push_back("steps: " + std::to_string(step) + ", max defect " + detail::fmt(worst));
  detail::assert_that(r, worst <= c.tol.symmetry, "symmetry", "defect " + detail::fmt(worst));
}

inline std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

/// Runs one experiment into `out_dir`. Exit codes: 0 ok, 1 assertion failure,
/// 2 invalid configuration or precondition, 3 numerical blow-up.
inline RunResult run_experiment(const ExperimentConfig& c, const fs::path& out_dir) {
  RunResult r;
  try {
    detail::Outputs out(out_dir, r);
    switch (c.kind) {
      case ExperimentKind::simulate: run_simulate(c, out, r); break;
      case ExperimentKind::identities: run_identities(c, out, r, false); break;
      case ExperimentKind::convergence: run_identities(c, out, r, true); break;
      case ExperimentKind::diff_system: run_diff_system(c, out, r); break;
      case ExperimentKind::symmetry: run_symmetry(c, out, r); break;
    }
    r.exit_code = r.failures.empty() ? 0 : 1;
  } catch (const BlowUpError& e) {
    r.exit_code = 3;
    r.failures.push_back(std::string("blow-up: ") + e.what());
  } catch (const ConfigError& e) {
    r.exit_code = 2;
    r.failures.push_back(e.what());
  } catch (const PreconditionError& e) {
    r.exit_code = 2;
    r.failures.push_back(e.what());
  } catch (const DegenerateImmersionError& e) {
    r.exit_code = 3;
    r.failures.push_back(std::string("blow-up: ") + e.what());
  } catch (const Error& e) {
    r.exit_code = 2;
    r.failures.push_back(e.what());
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  {
    std::ofstream s(out_dir / "summary.txt");
    s << to_string(c.kind) << ": " << (r.exit_code == 0 ? "ok" : "FAILED") << '\n';
    for (const auto& line : r.summary) s << line << '\n';
    for (const auto& f : r.failures) s << "failure: " << f << '\n';
    s << limitation_statement() << '\n';
  }
  std::ofstream m(out_dir / "manifest.txt");
  m << "experiment: " << to_string(c.kind) << '\n';
  m << "created: " << timestamp() << '\n';
  m << "grid: m=" << c.m << " N=" << c.N << " order=" << c.order << '\n';
  m << "seed: " << c.seed << '\n';
  m << "exit_code: " << r.exit_code << '\n';
  m << "limitation: " << limitation_statement() << '\n';
  m << "files:\n";
  for (const auto& f : r.files) m << "  - " << f << '\n';
  m << "  - summary.txt\n";
  return r;
}

}  // namespace mcf
