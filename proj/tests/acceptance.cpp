// Acceptance runs: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 100).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <random>
#include <string>

#include "novikov/scenario.hpp"

using namespace novikov;

namespace {

int failures = 0;

void report(const char* id, const char* title, bool ok, const std::string& detail, double seconds) {
  std::printf("[%s] %-4s %-34s %s (%.1fs)\n", ok ? "PASS" : "FAIL", id, title, detail.c_str(), seconds);
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string sci(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3e", v);
  return b;
}

// Runs body, catching exceptions as failures.
void criterion(const char* id, const char* title, const std::function<bool(std::string&)>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool ok = false;
  try {
    ok = body(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  report(id, title, ok, detail, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

EulerDatum gaussian(double a, double c, double w) {
  const Profile p = builtin_profile(DatumFamily::gaussian_bump, {{"a", a}, {"c", c}, {"w", w}});
  return make_datum(p, p);
}

EulerDatum two_bumps() {
  return make_datum(builtin_profile(DatumFamily::gaussian_bump, {{"a", 0.5}, {"c", 1.0}, {"w", 1.0}}),
                    builtin_profile(DatumFamily::gaussian_bump, {{"a", 0.4}, {"c", -1.0}, {"w", 1.0}}));
}

double max_rel_drift(const Trajectory& tr) {
  const ConservedSet c0 = tr.conserved_log.front().c;
  double m = 0.0;
  for (const auto& e : tr.conserved_log) {
    m = std::max({m, std::abs(e.c.E_u - c0.E_u) / std::abs(c0.E_u), std::abs(e.c.E_v - c0.E_v) / std::abs(c0.E_v),
                  std::abs(e.c.G - c0.G) / std::abs(c0.G), std::abs(e.c.H - c0.H) / std::abs(c0.H)});
  }
  return m;
}

Trajectory run(const EulerDatum& d, const Grid& g, double T, double dt, int every, EvolveOptions opt = {}) {
  const InitialState init = direct_transform(d, g, opt.bounds);
  return evolve(init.state, init.y0, T, dt, every, opt);
}

ScenarioConfig steep_config(bool scalar) {
  ScenarioConfig c;
  c.n = 4096;
  c.dt = 1e-3;
  c.fit_side_window = 1e-3;
  c.fit_min_gap = 1e-6;
  c.datum.u.family = DatumFamily::steep_front;
  c.datum.u.params = {{"a", 1.0}, {"w", 2.0}};
  if (scalar) {
    c.xi_min = -25.0;
    c.xi_max = 25.0;
    c.T = 2.0;
    c.datum.mode = DatumMode::symmetric;
    c.datum.u.params["s"] = 0.3;
    c.bounds.q_minus = 0.01;
  } else {
    c.xi_min = -20.0;
    c.xi_max = 20.0;
    c.T = 1.3;
    c.datum.mode = DatumMode::pair;
    c.datum.u.params["s"] = 0.1;
    c.datum.v.family = DatumFamily::gaussian_bump;
    c.datum.v.params = {{"a", 0.6}, {"w", 2.0}};
  }
  c.record_every = static_cast<int>(std::lround(c.T / c.dt));
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

int main() {
  const Grid g2048 = make_grid(-20.0, 20.0, 2048);
  Trajectory bumps;  // shared by criteria 1, 3, 8

  criterion("1a", "conservation drift", [&](std::string& d) {
    bumps = run(two_bumps(), g2048, 2.0, 1e-3, 100);
    const double drift = max_rel_drift(bumps);
    d = "max relative drift " + sci(drift) + " (tol 1e-6)";
    return drift < 1e-6;
  });

  criterion("1b", "conservation dt-halving ratio", [&](std::string& d) {
    const double d1 = max_rel_drift(bumps);
    const double d2 = max_rel_drift(run(two_bumps(), g2048, 2.0, 5e-4, 200));
    const double ratio = d1 / d2;
    d = "drift(dt)=" + sci(d1) + " drift(dt/2)=" + sci(d2) + " ratio " + sci(ratio) + " (need >= 8)";
    return ratio >= 8.0;
  });

  criterion("2", "scan vs brute-force oracle", [&](std::string& d) {
    std::mt19937_64 rng(20240501);
    const Grid g = make_grid(-10.0, 10.0, 512);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const TransformedState s = random_state(g, rng);
      if (omega_violation(s, OmegaBounds{})) throw std::runtime_error("random state not admissible");
      const KernelAccumulator acc = kernel_accumulator(s);
      const Integrands in = source_integrands(s);
      for (const Samples* p : {&in.p1, &in.p2, &in.s1, &in.s2}) {
        const ConvolvePair a = exp_convolve(*p, acc, g), b = exp_convolve_bruteforce(*p, acc, g);
        for (std::size_t k = 0; k < g.n; ++k)
          worst = std::max({worst, std::abs(a.even[k] - b.even[k]), std::abs(a.odd[k] - b.odd[k])});
      }
    }
    d = "max abs diff " + sci(worst) + " over 20 states (tol 1e-12)";
    return worst < 1e-12;
  });

  criterion("3", "xi-identities along trajectory", [&](std::string& d) {
    const double tol = 5.0 * g2048.dx * g2048.dx;
    double worst = 0.0;
    for (std::size_t i = 0; i < bumps.states.size(); ++i) {
      const TransformedState& s = bumps.states[i];
      const Samples dy = fd_derivative(bumps.ys[i], s.grid, 1);
      const Samples dU = fd_derivative(s.U, s.grid, 1);
      for (std::size_t k = 0; k < s.grid.n; ++k) {
        const HalfAngles w = half_angles(s.W[k]), z = half_angles(s.Z[k]);
        worst = std::max({worst, std::abs(dy[k] - s.q[k] * w.cw * z.cw),
                          std::abs(dU[k] - 0.5 * s.q[k] * w.sinw * z.cw)});
      }
    }
    d = "max error " + sci(worst) + " over " + std::to_string(bumps.states.size()) + " times (tol " + sci(tol) + ")";
    return worst < tol;
  });

  criterion("4", "scalar peakon", [&](std::string& d) {
    const Profile p = builtin_profile(DatumFamily::peakon, {{"c", 1.0}});
    const Grid g = make_grid(-20.0, 20.0, 4096);
    const Trajectory tr = run(make_datum(p, p), g, 1.0, 1e-3, 1000);
    const double Eu0 = tr.conserved_log.front().c.E_u;
    // Crest: intersect straight-line fits of log u on each side of the peak.
    const TransformedState& s = tr.states.back();
    const Samples& x = tr.ys.back();
    const std::size_t top = static_cast<std::size_t>(std::max_element(s.U.begin(), s.U.end()) - s.U.begin());
    auto fit = [&](int side) {
      double sx = 0, sy = 0, sxx = 0, sxy = 0, m = 0;
      for (std::size_t k = 0; k < g.n; ++k) {
        const double off = (x[k] - x[top]) * side;
        if (off < 5.0 * g.dx || off > 0.5) continue;
        const double ly = std::log(s.U[k]);
        sx += x[k];
        sy += ly;
        sxx += x[k] * x[k];
        sxy += x[k] * ly;
        m += 1;
      }
      const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
      return std::pair{slope, (sy - slope * sx) / m};
    };
    const auto [sl, il] = fit(-1);
    const auto [sr, ir] = fit(+1);
    const double crest = (ir - il) / (sl - sr);
    const bool ok = std::abs(crest - 1.0) < 0.01 && std::abs(Eu0 - 2.0) < 1e-3;
    d = "crest " + sci(crest) + " (1 +- 1%), E_u(0) " + sci(Eu0) + " (2 +- 1e-3)";
    return ok;
  });

  criterion("5", "symmetry reductions", [&](std::string& d) {
    const Grid g = make_grid(-15.0, 15.0, 1024);
    const Trajectory sym = run(gaussian(0.7, 0.5, 1.0), g, 1.0, 1e-3, 50);
    bool bitwise = true;
    for (const auto& s : sym.states) bitwise = bitwise && s.U == s.V && s.W == s.Z;

    const Profile base = builtin_profile(DatumFamily::steep_front, {{"a", 0.6}, {"c", 0.8}, {"s", 0.5}});
    const EulerDatum mir = make_datum(base, mirror(base));
    const InitialState init = direct_transform(mir, g);
    const Trajectory fwd = evolve(init.state, init.y0, 1.0, 1e-3, 50);
    const Trajectory bwd = evolve(init.state, init.y0, -1.0, 1e-3, 50);
    double worst = 0.0;
    for (std::size_t i = 0; i < fwd.states.size(); ++i) {
      const EulerField ef = euler_fields(fwd.states[i], fwd.ys[i]);
      const EulerField eb = euler_fields(bwd.states[i], bwd.ys[i]);
      for (std::size_t k = 0; k < g.n; ++k) {
        const double xq = -ef.x[k];
        if (xq < eb.x.front() || xq > eb.x.back()) continue;
        worst = std::max(worst, std::abs(ef.v[k] - sample_at(eb, xq).u));
      }
    }
    d = std::string("u=v bitwise ") + (bitwise ? "yes" : "no") + ", mirrored max|v(t,x)-u(-t,-x)| " + sci(worst) +
        " (tol 1e-8)";
    return bitwise && worst < 1e-8;
  });

  criterion("6", "cancellation identities", [&](std::string& d) {
    const Grid g = make_grid(-2.0, 2.0, 801);
    auto make = [&](auto W, auto Z) {
      TransformedState s = zero_state(g);
      for (std::size_t k = 0; k < g.n; ++k) {
        const double x = g.node(k);
        s.U[k] = 0.3 + 0.1 * x;
        s.V[k] = -0.2 + 0.05 * x * x;
        s.W[k] = W(x);
        s.Z[k] = Z(x);
        s.q[k] = 1.2 + 0.1 * x - 0.05 * x * x;
      }
      return s;
    };
    const double pi = std::numbers::pi;
    struct Case {
      int label, order;
      TransformedState s;
    };
    std::vector<Case> cases = {
        {1, 3, make([&](double x) { return pi + 1.3 * x + 0.4 * x * x; }, [](double x) { return 0.5 + 0.2 * x; })},
        {3, 5, make([&](double x) { return pi + 1.1 * x + 0.3 * x * x; }, [&](double x) { return pi - 0.8 * x + 0.2 * x * x; })},
        {8, 9, make([&](double x) { return pi - 0.9 * x * x + 0.1 * x * x * x; },
                    [&](double x) { return pi - 1.2 * x * x - 0.15 * x * x * x; })}};
    bool ok = true;
    std::string out;
    for (const Case& c : cases) {
      const Samples y = y_formula(c.s, 0.0);
      const auto pts = find_crossings(c.s, y);
      const SingularPoint* hit = nullptr;
      SingularPoint p;
      for (const auto& raw : pts) {
        p = classify(raw, c.s);
        if (std::abs(p.xi_star) < g.dx) {
          hit = &p;
          break;
        }
      }
      if (!hit || p.case_label != c.label) {
        out += " case" + std::to_string(c.label) + ": not detected;";
        ok = false;
        continue;
      }
      const CancellationReport r = verify_cancellations(p, c.s);
      double lead_err = -1.0, vanish = 0.0;
      bool case_ok = r.complete;
      for (const auto& e : r.entries) {
        if (e.quantity != "y") continue;
        if (e.vanishing) {
          vanish = std::max(vanish, e.error / e.tolerance * 1e-8);
          case_ok = case_ok && e.passed;
        } else if (e.order == c.order) {
          lead_err = e.error;
          case_ok = case_ok && e.error < 1e-2;
        }
      }
      case_ok = case_ok && lead_err >= 0.0;
      ok = ok && case_ok;
      out += " case" + std::to_string(c.label) + ": y^(" + std::to_string(c.order) + ") rel err " + sci(lead_err);
      if (c.label == 1) out += ", y',y'' <= " + sci(vanish) + "*scale";
      out += ";";
    }
    d = out.substr(1);
    return ok;
  });

  criterion("7", "Hoelder exponent fits", [&](std::string& d) {
    bool ok = true;
    std::string out;
    {
      const ScenarioConfig c = steep_config(false);
      const InitialState init = direct_transform(build_datum(c.datum), c.grid(), c.bounds);
      const Trajectory tr = evolve(init.state, init.y0, c.T, c.dt, c.record_every, c.evolve_options());
      std::optional<double> alpha;
      for (const auto& rec : analyse_trajectory(tr, c))
        if (rec.point.case_label == 1 && rec.point.fitted_exponent_u) {
          alpha = rec.point.fitted_exponent_u;
          break;
        }
      const bool pass = alpha && std::abs(*alpha - 2.0 / 3.0) <= 0.1;
      ok = ok && pass;
      out += "case1 alpha_u " + (alpha ? sci(*alpha) : std::string("none")) + " (2/3 +- 0.1)";
    }
    {
      const ScenarioConfig c = steep_config(true);
      const InitialState init = direct_transform(build_datum(c.datum), c.grid(), c.bounds);
      const Trajectory tr = evolve(init.state, init.y0, c.T, c.dt, c.record_every, c.evolve_options());
      int seen = 0;
      for (const auto& rec : analyse_trajectory(tr, c)) {
        const int L = rec.point.case_label;
        if ((L != 3 && L != 8) || !rec.point.fitted_exponent_u) continue;
        const double target = L == 3 ? 0.8 : 7.0 / 9.0;
        const double a = *rec.point.fitted_exponent_u;
        const bool pass = std::abs(a - target) <= 0.1;
        ok = ok && pass;
        ++seen;
        out += "; case" + std::to_string(L) + " alpha " + sci(a) + (L == 3 ? " (4/5" : " (7/9") + " +- 0.1)";
      }
      if (seen == 0) {
        ok = false;
        out += "; no case 3/8 point in the scalar run";
      }
    }
    d = out;
    return ok;
  });

  criterion("8", "measure vs Eulerian gradient mass", [&](std::string& d) {
    double worst = 0.0;
    for (std::size_t i = 0; i < bumps.states.size(); ++i) {
      const TransformedState& s = bumps.states[i];
      const Samples& y = bumps.ys[i];
      const double mu = measure_interval(s, y, {y.front(), y.back()});
      const double eul = euler_gradient_mass(euler_fields(s, y));
      worst = std::max(worst, std::abs(mu - eul) / std::abs(eul));
    }
    d = "max relative difference " + sci(worst) + " (tol 1e-6)";
    return worst < 1e-6;
  });

  criterion("9", "metric properties", [&](std::string& d) {
    std::mt19937_64 rng(7);
    const Grid g = make_grid(-10.0, 10.0, 256);
    const TransformedState a = random_state(g, rng), b = random_state(g, rng);
    const double self = distance_upper(a, a, 0.5, 9, EtaSearch::eta_zero);
    const double ab = distance_upper(a, b, 0.5, 9, EtaSearch::eta_zero);
    const double ba = distance_upper(b, a, 0.5, 9, EtaSearch::eta_zero);
    const double sym = std::abs(ab - ba) / ab;

    const Samples y = characteristic_from_state(a);
    const TransformedState t = random_state(g, rng);
    const TangentVector r{t.U, t.V, t.W, t.Z, t.q};
    const double n1 = tangent_norm(a, y, r, 0.5, EtaSearch::eta_zero);
    double hom = 0.0;
    for (double lam : {-3.0, 0.25, 2.0}) {
      const double nl = tangent_norm(a, y, combine(lam, r, 0.0, r), 0.5, EtaSearch::eta_zero);
      hom = std::max(hom, std::abs(nl - std::abs(lam) * n1) / (std::abs(lam) * n1));
    }
    bool descent_ok = true;
    for (int i = 0; i < 5; ++i) {
      const TransformedState s = random_state(g, rng), u = random_state(g, rng);
      const TangentVector ri{u.U, u.V, u.W, u.Z, u.q};
      const NormResult nr = tangent_norm_detailed(s, characteristic_from_state(s), ri, 0.5, EtaSearch::coarse_descent);
      descent_ok = descent_ok && nr.value <= nr.eta_zero_value;
    }

    const Grid lg = make_grid(-15.0, 15.0, 384);
    const EulerDatum base = gaussian(0.5, 0.0, 1.0);
    const Profile pert = builtin_profile(DatumFamily::sech_bump, {{"a", 1.0}, {"c", 0.5}, {"w", 1.0}});
    LipschitzOptions lo;
    lo.record_every = 50;
    const LipschitzTable t1 = lipschitz_experiment(base, perturbed(base, 0.02, pert, pert), lg, 1.0, 4e-3, lo);
    const LipschitzTable t2 = lipschitz_experiment(base, perturbed(base, 0.01, pert, pert), lg, 1.0, 4e-3, lo);
    bool finite = t1.complete && t2.complete && t1.rows.size() == t2.rows.size();
    double var = 0.0;
    for (std::size_t i = 0; finite && i < t1.rows.size(); ++i) {
      finite = std::isfinite(t1.rows[i].ratio) && std::isfinite(t2.rows[i].ratio) && t2.rows[i].ratio > 0.0;
      if (finite) var = std::max(var, std::abs(t1.rows[i].ratio - t2.rows[i].ratio) / t2.rows[i].ratio);
    }
    const bool ok = self == 0.0 && sym <= 1e-12 && hom <= 1e-13 && descent_ok && finite && var < 0.1;
    d = "d(U,U)=" + sci(self) + ", asym " + sci(sym) + ", homog " + sci(hom) + ", descent<=eta0 " +
        (descent_ok ? "yes" : "no") + ", ratio variation " + sci(var) + " (tol 0.1)";
    return ok;
  });

  criterion("10", "determinism and round trip", [&](std::string& d) {
    ScenarioConfig c;
    c.datum = {DatumMode::pair, {DatumFamily::gaussian_bump, {{"a", 0.5}, {"c", 1.0}}},
               {DatumFamily::sech_bump, {{"a", 0.4}, {"c", -1.0}}}};
    c.n = 256;
    c.T = 0.2;
    c.dt = 1e-2;
    c.record_every = 5;
    const auto tmp = std::filesystem::temp_directory_path() / "novikov_acceptance";
    std::filesystem::remove_all(tmp);
    std::ostringstream log;
    RunOptions ra{(tmp / "a").string(), {}, false, "", &log};
    RunOptions rb{(tmp / "b").string(), {}, false, "", &log};
    const int ea = run_evolve(c, ra), eb = run_evolve(c, rb);
    bool same = ea == 0 && eb == 0;
    int files = 0;
    for (const auto& entry : std::filesystem::directory_iterator(tmp / "a")) {
      ++files;
      same = same && slurp(entry.path()) == slurp(tmp / "b" / entry.path().filename());
    }
    std::filesystem::remove_all(tmp);

    // Round trip: graph interpolation of the t = 0 fields against the datum,
    // bounded by the linear-interpolation estimate gap^2/8 max|u''|.
    double ratio = 0.0;
    const EulerDatum dat = build_datum(c.datum);
    for (long long n : {256LL, 512LL}) {
      const Grid g = make_grid(-20.0, 20.0, n);
      const InitialState init = direct_transform(dat, g);
      const EulerField f = euler_fields(init.state, init.y0);
      double err = 0.0, bound = 0.0;
      for (std::size_t k = 0; k + 1 < g.n; ++k) {
        const double xm = 0.5 * (f.x[k] + f.x[k + 1]), gap = f.x[k + 1] - f.x[k];
        const UV uv = sample_at(f, xm);
        err = std::max({err, std::abs(uv.u - dat.u0(xm)), std::abs(uv.v - dat.v0(xm))});
        // second derivative by central differences of the exact first derivative
        const double hh = 1e-5;
        const double upp = std::max(std::abs(dat.du0(xm + hh) - dat.du0(xm - hh)),
                                    std::abs(dat.dv0(xm + hh) - dat.dv0(xm - hh))) / (2 * hh);
        bound = std::max(bound, gap * gap / 8.0 * upp);
      }
      ratio = std::max(ratio, err / (bound + 1e-15));
    }
    const bool ok = same && files > 0 && ratio <= 1.05;
    d = std::string("byte-identical reruns ") + (same ? "yes" : "no") + " (" + std::to_string(files) +
        " files), round-trip error / interpolation bound " + sci(ratio);
    return ok;
  });

  std::printf("%d criterion(s) failed\n", failures);
  return std::min(failures, 100);
}
