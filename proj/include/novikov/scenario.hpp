#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "novikov/config.hpp"
#include "novikov/evolution.hpp"
#include "novikov/initial_data.hpp"
#include "novikov/metric.hpp"
#include "novikov/reconstruction.hpp"
#include "novikov/singular.hpp"

namespace novikov {

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_numerical = 3, exit_analysis = 4 };

struct RunOptions {
  std::optional<std::string> out_dir;  // overrides output.dir
  std::optional<unsigned long long> seed;
  bool quick = false;
  std::string inject_fault;  // test hook, "broken_scan" or empty
  std::ostream* log = &std::cerr;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : f_(std::fopen(path.c_str(), "w")) {
    if (!f_) throw ConfigError("cannot write " + path.string());
    for (std::size_t i = 0; i < header.size(); ++i) std::fprintf(f_, "%s%s", i ? "," : "", header[i].c_str());
    std::fputc('\n', f_);
  }
  ~CsvWriter() {
    if (f_) std::fclose(f_);
  }
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  void row(std::initializer_list<double> values) {
    bool first = true;
    for (double v : values) {
      std::fprintf(f_, "%s%s", first ? "" : ",", fmt(v).c_str());
      first = false;
    }
    std::fputc('\n', f_);
  }
  void raw(const std::string& line) { std::fprintf(f_, "%s\n", line.c_str()); }

 private:
  std::FILE* f_;
};

inline std::filesystem::path prepare_out(const ScenarioConfig& c, const RunOptions& ro) {
  std::filesystem::path dir = ro.out_dir ? *ro.out_dir : c.out_dir;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

inline ScenarioConfig effective(ScenarioConfig c, const RunOptions& ro) {
  if (ro.quick) c.n = std::min<long long>(c.n, 256);
  if (ro.seed) c.seed = *ro.seed;
  return c;
}

inline std::string index_name(const char* stem, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu.csv", stem, i);
  return buf;
}

inline void write_state(const std::filesystem::path& path, const TransformedState& s, const Samples& y) {
  CsvWriter w(path, {"xi", "U", "V", "W", "Z", "q", "y"});
  for (std::size_t k = 0; k < s.grid.n; ++k) w.row({s.grid.node(k), s.U[k], s.V[k], s.W[k], s.Z[k], s.q[k], y[k]});
}

inline void write_euler(const std::filesystem::path& path, const EulerField& f) {
  CsvWriter w(path, {"x", "u", "v", "ux", "ux_valid", "vx", "vx_valid"});
  for (std::size_t k = 0; k < f.x.size(); ++k)
    w.row({f.x[k], f.u[k], f.v[k], f.ux[k], f.ux_valid(k) ? 1.0 : 0.0, f.vx[k], f.vx_valid(k) ? 1.0 : 0.0});
}

inline void write_trajectory(const std::filesystem::path& dir, const Trajectory& tr) {
  {
    CsvWriter w(dir / "conserved.csv", {"t", "E_u", "E_v", "G", "H", "y_consistency"});
    for (const auto& e : tr.conserved_log) w.row({e.t, e.c.E_u, e.c.E_v, e.c.G, e.c.H, e.y_consistency});
  }
  CsvWriter idx(dir / "times.csv", {"index", "t"});
  for (std::size_t i = 0; i < tr.states.size(); ++i) {
    idx.row({static_cast<double>(i), tr.times[i]});
    write_state(dir / index_name("state", i), tr.states[i], tr.ys[i]);
    write_euler(dir / index_name("euler", i), euler_fields(tr.states[i], tr.ys[i]));
  }
}

// Forward evolution of the configured datum; on a guard abort the partial
// trajectory is returned with `aborted` set.
struct EvolveOutcome {
  Trajectory traj;
  bool aborted = false;
  std::string message;
};

inline EvolveOutcome evolve_config(const ScenarioConfig& c) {
  const InitialState init = direct_transform(build_datum(c.datum), c.grid(), c.bounds);
  EvolveOutcome out;
  try {
    out.traj = evolve(init.state, init.y0, c.T, c.dt, c.record_every, c.evolve_options());
  } catch (const EvolutionAborted& e) {
    out.traj = e.partial;
    out.aborted = true;
    out.message = e.what();
  }
  return out;
}

// Maps library exceptions onto the exit-code contract.
inline int guarded(std::ostream& log, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const StateError& e) {
    log << "config error: initial datum is not admissible: " << e.what() << "\n";
    return exit_config;
  } catch (const NumericalError& e) {
    log << "numerical abort: " << e.what() << "\n";
    return exit_numerical;
  }
}

}  // namespace detail

/**
 * Evolve the configured datum and export every recorded time: state_NNNN.csv,
 * euler_NNNN.csv, times.csv and conserved.csv.
 */
inline int run_evolve(const ScenarioConfig& config, const RunOptions& ro = {}) {
  return detail::guarded(*ro.log, [&] {
    const ScenarioConfig c = detail::effective(config, ro);
    const auto dir = detail::prepare_out(c, ro);
    const detail::EvolveOutcome r = detail::evolve_config(c);
    detail::write_trajectory(dir, r.traj);
    if (r.aborted) {
      *ro.log << "numerical abort: " << r.message << " (partial artifacts up to t=" << r.traj.times.back()
              << ")\n";
      return static_cast<int>(exit_numerical);
    }
    return static_cast<int>(exit_ok);
  });
}

namespace detail {

inline nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json point_json(const SingularPoint& p) {
  nlohmann::ordered_json j;
  j["t"] = p.t;
  j["xi_star"] = p.xi_star;
  j["x_star"] = p.x_star;
  j["curve"] = curve_name(p.curve);
  j["tangential"] = p.tangential;
  j["case_label"] = p.case_label;
  j["degenerate"] = p.degenerate;
  j["W_xi"] = p.w_xi;
  j["Z_xi"] = p.z_xi;
  j["W_xixi"] = p.w_xixi;
  j["Z_xixi"] = p.z_xixi;
  j["W"] = p.w_value;
  j["Z"] = p.z_value;
  const PredicateMargins& m = p.margins;
  j["margins"] = {{"w_angle", m.w_angle},         {"z_angle", m.z_angle},         {"tol_pi", m.tol_pi},
                  {"w_slope", m.w_slope},         {"w_slope_tol", m.w_slope_tol}, {"z_slope", m.z_slope},
                  {"z_slope_tol", m.z_slope_tol}, {"w_curv", m.w_curv},           {"w_curv_tol", m.w_curv_tol},
                  {"z_curv", m.z_curv},           {"z_curv_tol", m.z_curv_tol}};
  j["fitted_exponent_u"] = optional_json(p.fitted_exponent_u);
  j["fit_r2_u"] = optional_json(p.fit_r2_u);
  j["fitted_exponent_v"] = optional_json(p.fitted_exponent_v);
  j["fit_r2_v"] = optional_json(p.fit_r2_v);
  return j;
}

inline nlohmann::ordered_json report_json(const CancellationReport& r) {
  nlohmann::ordered_json j;
  j["case_label"] = r.case_label;
  j["complete"] = r.complete;
  j["passed"] = r.passed;
  j["note"] = r.note;
  j["some_y_derivative_nonzero"] = r.some_y_derivative_nonzero;
  j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : r.entries)
    j["entries"].push_back({{"quantity", e.quantity},
                            {"order", e.order},
                            {"vanishing", e.vanishing},
                            {"method", e.method},
                            {"claimed", e.claimed},
                            {"measured", e.measured},
                            {"error", e.error},
                            {"tolerance", e.tolerance},
                            {"passed", e.passed}});
  return j;
}

// Non-finite doubles have no JSON form; they are written as null.
inline std::string dump_line(const nlohmann::ordered_json& j) {
  return j.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

}  // namespace detail

struct SingularRecord {
  SingularPoint point;
  std::optional<CancellationReport> report;
};

/**
 * Detection, classification, exponent fits and cancellation checks at every
 * recorded time of the configured run.
 */
inline std::vector<SingularRecord> analyse_trajectory(const Trajectory& tr, const ScenarioConfig& c) {
  std::vector<SingularRecord> out;
  for (std::size_t i = 0; i < tr.states.size(); ++i) {
    const TransformedState& s = tr.states[i];
    const Samples& y = tr.ys[i];
    const std::vector<SingularPoint> pts = find_crossings(s, y, c.singular_opt);
    if (pts.empty()) continue;
    const EulerField f = euler_fields(s, y);
    for (SingularPoint p : pts) {
      p = classify(p, s, c.singular_opt);
      if (c.fit_exponents) {
        for (Component comp : {Component::u, Component::v}) {
          try {
            const ExponentFit fit = fit_exponent(f, p.x_star, c.fit_side_window, c.fit_min_gap, comp);
            (comp == Component::u ? p.fitted_exponent_u : p.fitted_exponent_v) = fit.alpha;
            (comp == Component::u ? p.fit_r2_u : p.fit_r2_v) = fit.r2;
          } catch (const FitError&) {
            // Too few samples; left empty.
          }
        }
      }
      SingularRecord rec{p, std::nullopt};
      if (c.cancellations && p.case_label != 0) rec.report = verify_cancellations(p, s, c.cancel_opt, c.singular_opt);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

/**
 * Writes singular_points.jsonl (one object per detected point, cancellation
 * report nested under "cancellations") plus the conserved log of the run.
 */
inline int run_singular(const ScenarioConfig& config, const RunOptions& ro = {}) {
  return detail::guarded(*ro.log, [&] {
    const ScenarioConfig c = detail::effective(config, ro);
    const auto dir = detail::prepare_out(c, ro);
    const detail::EvolveOutcome r = detail::evolve_config(c);
    {
      detail::CsvWriter w(dir / "conserved.csv", {"t", "E_u", "E_v", "G", "H", "y_consistency"});
      for (const auto& e : r.traj.conserved_log) w.row({e.t, e.c.E_u, e.c.E_v, e.c.G, e.c.H, e.y_consistency});
    }
    std::vector<SingularRecord> recs;
    if (c.singular) recs = analyse_trajectory(r.traj, c);
    std::FILE* f = std::fopen((dir / "singular_points.jsonl").c_str(), "w");
    if (!f) throw ConfigError("cannot write singular_points.jsonl");
    for (const auto& rec : recs) {
      nlohmann::ordered_json j = detail::point_json(rec.point);
      j["cancellations"] = rec.report ? detail::report_json(*rec.report) : nlohmann::ordered_json(nullptr);
      std::fprintf(f, "%s\n", detail::dump_line(j).c_str());
    }
    std::fclose(f);
    *ro.log << recs.size() << " singular point(s) written\n";
    if (r.aborted) {
      *ro.log << "numerical abort: " << r.message << " (analysed up to t=" << r.traj.times.back() << ")\n";
      return static_cast<int>(exit_numerical);
    }
    return static_cast<int>(exit_ok);
  });
}

/**
 * Lipschitz experiment between datum and datum1 (or datum plus epsilon times
 * the perturbation) over [-T, T]; writes lipschitz.csv.
 */
inline int run_metric(const ScenarioConfig& config, const RunOptions& ro = {}) {
  return detail::guarded(*ro.log, [&] {
    const ScenarioConfig c = detail::effective(config, ro);
    const EulerDatum d0 = build_datum(c.datum);
    EulerDatum d1;
    if (c.datum1) {
      d1 = build_datum(*c.datum1);
    } else if (c.perturbation) {
      const Profile p = builtin_profile(c.perturbation->family, c.perturbation->params);
      d1 = perturbed(d0, c.epsilon, p, p);
    } else {
      throw ConfigError("metric needs datum1.* or metric.perturbation.* to define the second datum");
    }
    const auto dir = detail::prepare_out(c, ro);
    LipschitzOptions lo;
    lo.alpha = c.alpha;
    lo.m_theta = c.m_theta;
    lo.search = c.search;
    lo.record_every = c.record_every;
    lo.norm = c.norm;
    lo.evolve = c.evolve_options();
    const LipschitzTable table = lipschitz_experiment(d0, d1, c.grid(), c.T, c.dt, lo);
    {
      detail::CsvWriter w(dir / "lipschitz.csv", {"t", "d_t_upper", "ratio", "search_mode", "eta_iterations"});
      for (const auto& row : table.rows)
        w.raw(detail::fmt(row.t) + "," + detail::fmt(row.d_upper) + "," + detail::fmt(row.ratio) + "," +
              search_name(row.search) + "," + std::to_string(row.eta_iterations));
    }
    if (table.zero_initial_distance) *ro.log << "note: initial distance is zero, ratios reported as 0\n";
    if (!table.complete) {
      *ro.log << "numerical abort: " << table.note << "\n";
      return static_cast<int>(exit_numerical);
    }
    return static_cast<int>(exit_ok);
  });
}

// ---------------------------------------------------------------------------
// Validation suite

/**
 * Random admissible state: sums of three Gaussians for U and V, angles
 * 2 atan of such sums, q the exponential of one. All fields decay toward the
 * window ends.
 */
inline TransformedState random_state(const Grid& grid, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> amp(-1.0, 1.0);
  const double half = 0.5 * (grid.xi_max - grid.xi_min), mid = 0.5 * (grid.xi_max + grid.xi_min);
  std::uniform_real_distribution<double> centre(mid - 0.3 * half, mid + 0.3 * half);
  std::uniform_real_distribution<double> width(0.07 * half, 0.2 * half);
  auto bumps = [&](double scale) {
    double a[3], c[3], w[3];
    for (int i = 0; i < 3; ++i) {
      a[i] = scale * amp(rng);
      c[i] = centre(rng);
      w[i] = width(rng);
    }
    Samples f(grid.n);
    for (std::size_t k = 0; k < grid.n; ++k) {
      double v = 0.0;
      for (int i = 0; i < 3; ++i) {
        const double r = (grid.node(k) - c[i]) / w[i];
        v += a[i] * std::exp(-r * r);
      }
      f[k] = v;
    }
    return f;
  };
  TransformedState s = zero_state(grid, 0.0);
  s.U = bumps(1.0);
  s.V = bumps(1.0);
  const Samples a = bumps(1.5), b = bumps(1.5), l = bumps(0.7);
  for (std::size_t k = 0; k < grid.n; ++k) {
    s.W[k] = 2.0 * std::atan(a[k]);
    s.Z[k] = 2.0 * std::atan(b[k]);
    s.q[k] = std::exp(l[k]);
  }
  return s;
}

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

// Scan without the end corrections: the fault used to exercise the harness.
inline ConvolvePair broken_scan(std::span<const double> p, const KernelAccumulator& acc, const Grid& grid) {
  ConvolvePair out = exp_convolve(p, acc, grid);
  const EndCorrections c = end_corrections(p, acc, grid);
  for (std::size_t k = 0; k < grid.n; ++k) {
    out.even[k] -= c.left[k] + c.right[k];
    out.odd[k] -= c.right[k] - c.left[k];
  }
  return out;
}

inline std::string sci(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

}  // namespace detail

/**
 * Named property checks. Random states come from mt19937_64 seeded with
 * config.seed; quick mode uses n = 64 for the random-state checks.
 */
inline std::vector<CheckResult> validation_checks(const ScenarioConfig& c, bool quick,
                                                  const std::string& inject_fault = "") {
  std::vector<CheckResult> out;
  std::mt19937_64 rng(c.seed);
  const Grid rgrid = make_grid(-10.0, 10.0, quick ? 64 : 512);
  const int trials = quick ? 5 : 20;
  auto scan = [&](std::span<const double> p, const KernelAccumulator& acc, const Grid& g) {
    return inject_fault == "broken_scan" ? detail::broken_scan(p, acc, g) : exp_convolve(p, acc, g);
  };

  {
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
      const TransformedState s = random_state(rgrid, rng);
      const KernelAccumulator acc = kernel_accumulator(s, c.quadrature);
      const Integrands in = source_integrands(s);
      for (const Samples* p : {&in.p1, &in.p2, &in.s1, &in.s2}) {
        const ConvolvePair a = scan(*p, acc, rgrid), b = exp_convolve_bruteforce(*p, acc, rgrid);
        for (std::size_t k = 0; k < rgrid.n; ++k)
          worst = std::max({worst, std::abs(a.even[k] - b.even[k]), std::abs(a.odd[k] - b.odd[k])});
      }
    }
    out.push_back({"scan_vs_bruteforce", worst < 1e-12, "max abs diff " + detail::sci(worst)});
  }
  {
    bool ok = true;
    for (int t = 0; t < trials && ok; ++t) {
      const TransformedState s = random_state(rgrid, rng);
      const StateRate a = rhs(s, c.quadrature), b = rhs(swapped(s), c.quadrature);
      ok = a.U == b.V && a.V == b.U && a.W == b.Z && a.Z == b.W && a.q == b.q;
    }
    out.push_back({"swap_symmetry_bitwise", ok, ok ? "rhs commutes with the component swap" : "mismatch"});
  }
  {
    bool ok = true;
    double ratio = 0.0;
    for (int t = 0; t < trials; ++t) {
      const TransformedState s = random_state(rgrid, rng);
      const SourceFields f = assemble_sources(s, c.quadrature);
      const SourceBoundReport r = check_source_bounds(f, conserved(s));
      ok = ok && r.ok;
      ratio = std::max({ratio, r.max_P1 / r.bound_P1, r.max_P2 / r.bound_P2, r.max_S1 / r.bound_S1,
                        r.max_S2 / r.bound_S2});
    }
    out.push_back({"source_sup_bounds", ok, "largest sup/bound " + detail::sci(ratio)});
  }
  {
    // Fourth-order differences are exact on cubics up to rounding.
    Samples f(rgrid.n), df(rgrid.n);
    for (std::size_t k = 0; k < rgrid.n; ++k) {
      const double x = rgrid.node(k);
      f[k] = x * x * x - 2.0 * x;
      df[k] = 3.0 * x * x - 2.0;
    }
    const Samples d = fd_derivative(f, rgrid, 1);
    double worst = 0.0;
    for (std::size_t k = 0; k < rgrid.n; ++k) worst = std::max(worst, std::abs(d[k] - df[k]));
    out.push_back({"fd_exact_on_cubic", worst < 1e-9, "max abs error " + detail::sci(worst)});
  }

  // Checks on the configured datum.
  const Grid grid = quick ? make_grid(c.xi_min, c.xi_max, 64) : c.grid();
  const InitialState init = direct_transform(build_datum(c.datum), grid, c.bounds);
  {
    // y0 from the inversion against the static formula built from q, W, Z.
    const double err = y_consistency(init.state, init.y0);
    const Samples g2 = fd_derivative(y_formula(init.state, 0.0), grid, 3);
    double m = 0.0;
    for (double v : g2) m = std::max(m, std::abs(v));
    // Twice the trapezoid error bound of the formula side.
    const double tol = 2.0 * grid.dx * grid.dx * (grid.xi_max - grid.xi_min) / 12.0 * m + 1e-12;
    out.push_back({"initial_characteristic_roundtrip", err < tol,
                   "max |y0 - y_formula| " + detail::sci(err) + " (tol " + detail::sci(tol) + ")"});
  }
  {
    const EulerDatum d = build_datum(c.datum);
    const EulerField f = euler_fields(init.state, init.y0);
    double worst = 0.0;
    for (std::size_t k = 0; k < grid.n; ++k) {
      const double x = init.y0[k];
      worst = std::max({worst, std::abs(f.u[k] - d.u0(x)), std::abs(f.v[k] - d.v0(x)),
                        std::abs(f.ux[k] - d.du0(x)), std::abs(f.vx[k] - d.dv0(x))});
    }
    out.push_back({"transform_euler_roundtrip", worst < 1e-10, "max abs error " + detail::sci(worst)});
  }
  {
    // Fixed moderate resolution: at n = 64 the spatial error alone exceeds
    // the threshold.
    const Grid cg = make_grid(c.xi_min, c.xi_max, 256);
    const InitialState ci = direct_transform(build_datum(c.datum), cg, c.bounds);
    const ConservedSet c0 = conserved(ci.state);
    const double dt = c.dt;
    const Trajectory tr = evolve(ci.state, ci.y0, 10.0 * dt, dt, 10, c.evolve_options());
    const ConservedSet c1 = conserved(tr.states.back());
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1e-300, std::max(std::abs(a), 1e-12)); };
    const double drift = std::max({rel(c0.E_u, c1.E_u), rel(c0.E_v, c1.E_v), rel(c0.G, c1.G), rel(c0.H, c1.H)});
    out.push_back({"short_run_conservation", drift < 1e-8, "max relative drift " + detail::sci(drift)});
  }
  {
    const double a = init.y0.front(), b = init.y0.back(), m = 0.5 * (a + b);
    const double whole = measure_interval(init.state, init.y0, {a, b});
    const double parts = measure_interval(init.state, init.y0, {a, m}) + measure_interval(init.state, init.y0, {m, b});
    const double err = std::abs(whole - parts);
    out.push_back({"measure_additivity", err <= 1e-12 * std::max(1.0, whole), "|mu(I) - mu(I1) - mu(I2)| " + detail::sci(err)});
  }
  {
    const Grid mg = make_grid(-10.0, 10.0, quick ? 64 : 256);
    const TransformedState s0 = random_state(mg, rng);
    TransformedState s1 = s0;
    for (std::size_t k = 0; k < mg.n; ++k) s1.U[k] += 0.05 * std::exp(-mg.node(k) * mg.node(k));
    NormOptions no = c.norm;
    const double self = distance_upper(s0, s0, c.alpha, c.m_theta, EtaSearch::eta_zero, no);
    const double ab = distance_upper(s0, s1, c.alpha, c.m_theta, EtaSearch::eta_zero, no);
    const double ba = distance_upper(s1, s0, c.alpha, c.m_theta, EtaSearch::eta_zero, no);
    const bool ok = self == 0.0 && std::abs(ab - ba) <= 1e-12 * std::max(1.0, ab) && ab > 0.0;
    out.push_back({"metric_zero_and_symmetry", ok,
                   "d(s,s)=" + detail::sci(self) + ", |d(a,b)-d(b,a)|=" + detail::sci(std::abs(ab - ba))});
  }
  return out;
}

inline int run_validate(const ScenarioConfig& config, const RunOptions& ro = {}) {
  return detail::guarded(*ro.log, [&] {
    ScenarioConfig c = config;
    if (ro.seed) c.seed = *ro.seed;
    if (!ro.inject_fault.empty() && ro.inject_fault != "broken_scan")
      throw ConfigError("unknown fault '" + ro.inject_fault + "'");
    const std::vector<CheckResult> checks = validation_checks(c, ro.quick, ro.inject_fault);
    int failed = 0;
    for (const auto& r : checks) {
      std::printf("%s %s: %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
      if (!r.passed) {
        ++failed;
        *ro.log << "check failed: " << r.name << "\n";
      }
    }
    std::fflush(stdout);
    return static_cast<int>(failed ? exit_analysis : exit_ok);
  });
}

}  // namespace novikov
