#pragma once

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "novikov/errors.hpp"
#include "novikov/grid.hpp"
#include "novikov/nonlocal.hpp"
#include "novikov/state.hpp"

namespace novikov {

struct EvolveOptions {
  OmegaBounds bounds;
  KernelQuadrature rule = KernelQuadrature::corrected;
};

struct StateRate {
  Samples U, V, W, Z, q;
};

namespace detail {

inline double angle_rate(double U, double V, const HalfAngles& w, double P1, double dxP2) {
  return 2.0 * U * U * V * w.cw - V * w.sw - 2.0 * (P1 + dxP2) * w.cw;
}

inline double q_rate_part(double q, double U, double V, const HalfAngles& w, double P1, double dxP2) {
  return q * (U * U * V + 0.5 * V - P1 - dxP2) * w.sinw;
}

}  // namespace detail

inline StateRate rhs(const TransformedState& s, const SourceFields& f) {
  const std::size_t n = s.grid.n;
  StateRate r{Samples(n), Samples(n), Samples(n), Samples(n), Samples(n)};
  for (std::size_t k = 0; k < n; ++k) {
    const HalfAngles w = half_angles(s.W[k]), z = half_angles(s.Z[k]);
    r.U[k] = -f.dxP1[k] - f.P2[k];
    r.V[k] = -f.dxS1[k] - f.S2[k];
    r.W[k] = detail::angle_rate(s.U[k], s.V[k], w, f.P1[k], f.dxP2[k]);
    r.Z[k] = detail::angle_rate(s.V[k], s.U[k], z, f.S1[k], f.dxS2[k]);
    r.q[k] = detail::q_rate_part(s.q[k], s.U[k], s.V[k], w, f.P1[k], f.dxP2[k]) +
             detail::q_rate_part(s.q[k], s.V[k], s.U[k], z, f.S1[k], f.dxS2[k]);
  }
  return r;
}

inline StateRate rhs(const TransformedState& s, KernelQuadrature rule = KernelQuadrature::corrected) {
  return rhs(s, assemble_sources(s, rule));
}

struct StepResult {
  TransformedState state;
  Samples y;
};

namespace detail {

inline TransformedState advance(const TransformedState& s, const StateRate& r, double h) {
  TransformedState out = s;
  out.t = s.t + h;
  for (std::size_t k = 0; k < s.grid.n; ++k) {
    out.U[k] += h * r.U[k];
    out.V[k] += h * r.V[k];
    out.W[k] += h * r.W[k];
    out.Z[k] += h * r.Z[k];
    out.q[k] += h * r.q[k];
  }
  return out;
}

inline Samples char_rate(const TransformedState& s) {
  Samples r(s.grid.n);
  for (std::size_t k = 0; k < s.grid.n; ++k) r[k] = s.U[k] * s.V[k];
  return r;
}

}  // namespace detail

/**
 * Classical RK4 on (U, V, W, Z, q) with y_t = U V carried along. W and Z are
 * not wrapped. dt may be negative. Throws NumericalError if the new state
 * leaves the slack-enlarged admissible set.
 */
inline StepResult rk4_step(const TransformedState& s, std::span<const double> y, double dt,
                           const EvolveOptions& opt = {}) {
  if (dt == 0.0) throw ContractError("rk4_step: dt must be nonzero");
  detail::check_length(y, s.grid, "rk4_step");
  const std::size_t n = s.grid.n;
  const StateRate k1 = rhs(s, opt.rule);
  const Samples c1 = detail::char_rate(s);
  const TransformedState s2 = detail::advance(s, k1, 0.5 * dt);
  const StateRate k2 = rhs(s2, opt.rule);
  const Samples c2 = detail::char_rate(s2);
  const TransformedState s3 = detail::advance(s, k2, 0.5 * dt);
  const StateRate k3 = rhs(s3, opt.rule);
  const Samples c3 = detail::char_rate(s3);
  const TransformedState s4 = detail::advance(s, k3, dt);
  const StateRate k4 = rhs(s4, opt.rule);
  const Samples c4 = detail::char_rate(s4);

  StepResult out{s, Samples(y.begin(), y.end())};
  out.state.t = s.t + dt;
  const double w = dt / 6.0;
  auto combine = [&](Samples& dst, const Samples& a, const Samples& b, const Samples& c, const Samples& d) {
    for (std::size_t k = 0; k < n; ++k) dst[k] += w * (a[k] + 2.0 * b[k] + 2.0 * c[k] + d[k]);
  };
  combine(out.state.U, k1.U, k2.U, k3.U, k4.U);
  combine(out.state.V, k1.V, k2.V, k3.V, k4.V);
  combine(out.state.W, k1.W, k2.W, k3.W, k4.W);
  combine(out.state.Z, k1.Z, k2.Z, k3.Z, k4.Z);
  combine(out.state.q, k1.q, k2.q, k3.q, k4.q);
  combine(out.y, c1, c2, c3, c4);

  if (auto bad = omega_violation(out.state, opt.bounds, opt.bounds.slack)) {
    std::ostringstream msg;
    msg << "discretization blow-up after step to t=" << out.state.t << ": " << *bad;
    throw NumericalError(msg.str());
  }
  return out;
}

struct ConservedSet {
  double E_u = 0.0, E_v = 0.0, G = 0.0, H = 0.0;
};

namespace detail {

inline double energy_density(double q, double U, const HalfAngles& w, const HalfAngles& z) {
  return (U * U * w.cw + w.sw) * q * z.cw;
}

}  // namespace detail

inline ConservedSet conserved(const TransformedState& s) {
  const std::size_t n = s.grid.n;
  Samples eu(n), ev(n), g(n), h(n);
  for (std::size_t k = 0; k < n; ++k) {
    const HalfAngles w = half_angles(s.W[k]), z = half_angles(s.Z[k]);
    const double q = s.q[k], U = s.U[k], V = s.V[k];
    eu[k] = detail::energy_density(q, U, w, z);
    ev[k] = detail::energy_density(q, V, z, w);
    const double uv = U * V, ss = w.sinw * z.sinw, cc = w.cw * z.cw;
    g[k] = q * uv * cc + 0.25 * q * ss;
    h[k] = q * (3.0 * uv * uv * cc + (U * U) * (w.cw * z.sw) + (V * V) * (w.sw * z.cw) + uv * ss -
                w.sw * z.sw);
  }
  return {integrate(eu, s.grid), integrate(ev, s.grid), integrate(g, s.grid), integrate(h, s.grid)};
}

/**
 * Sup-norm check of the nonlocal terms against the energy bounds
 *   |P1| <= (1/2)||p1||_1 <= C1 E_u E_v^{1/2},  C1 = 5 / (4 sqrt 2),
 *   |P2| <= C2 E_u^{1/2} (7 E_u E_v - H)^{1/2}, C2 = 1/4,
 * and the mirrored bounds for S1, S2, each with a safety factor.
 */
struct SourceBoundReport {
  double max_P1 = 0.0, bound_P1 = 0.0;
  double max_P2 = 0.0, bound_P2 = 0.0;
  double max_S1 = 0.0, bound_S1 = 0.0;
  double max_S2 = 0.0, bound_S2 = 0.0;
  bool ok = true;
};

inline SourceBoundReport check_source_bounds(const SourceFields& f, const ConservedSet& c,
                                             double safety = 2.0) {
  auto sup = [](const Samples& a, const Samples& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max({m, std::abs(a[k]), std::abs(b[k])});
    return m;
  };
  const double c1 = 5.0 / (4.0 * std::numbers::sqrt2);
  const double gap = std::max(0.0, 7.0 * c.E_u * c.E_v - c.H);
  SourceBoundReport r;
  r.max_P1 = sup(f.P1, f.dxP1);
  r.max_S1 = sup(f.S1, f.dxS1);
  r.max_P2 = sup(f.P2, f.dxP2);
  r.max_S2 = sup(f.S2, f.dxS2);
  r.bound_P1 = safety * c1 * c.E_u * std::sqrt(c.E_v);
  r.bound_S1 = safety * c1 * c.E_v * std::sqrt(c.E_u);
  r.bound_P2 = safety * 0.25 * std::sqrt(c.E_u * gap);
  r.bound_S2 = safety * 0.25 * std::sqrt(c.E_v * gap);
  // Rounding slack so that the zero state passes.
  const double eps = 1e-12;
  r.ok = r.max_P1 <= r.bound_P1 + eps && r.max_S1 <= r.bound_S1 + eps &&
         r.max_P2 <= r.bound_P2 + eps && r.max_S2 <= r.bound_S2 + eps;
  return r;
}

// Static characteristic formula: y[0] plus the prefix integral of y_xi.
inline Samples y_formula(const TransformedState& s, double y_left) {
  Samples g(s.grid.n);
  for (std::size_t k = 0; k < s.grid.n; ++k)
    g[k] = kernel_density(s.q[k], half_angles(s.W[k]), half_angles(s.Z[k]));
  Samples c = prefix_integral(g, s.grid);
  for (double& v : c) v += y_left;
  return c;
}

inline double y_consistency(const TransformedState& s, std::span<const double> y) {
  const Samples yf = y_formula(s, y[0]);
  double m = 0.0;
  for (std::size_t k = 0; k < yf.size(); ++k) m = std::max(m, std::abs(yf[k] - y[k]));
  return m;
}

struct ConservedLogEntry {
  double t = 0.0;
  ConservedSet c;
  double y_consistency = 0.0;
};

/**
 * Recorded trajectory. Times are ordered along the direction of integration
 * (decreasing for backward runs).
 */
struct Trajectory {
  std::vector<double> times;
  std::vector<TransformedState> states;
  std::vector<Samples> ys;
  std::vector<ConservedLogEntry> conserved_log;

  void record(const TransformedState& s, const Samples& y) {
    times.push_back(s.t);
    states.push_back(s);
    ys.push_back(y);
    conserved_log.push_back({s.t, conserved(s), y_consistency(s, y)});
  }
};

struct EvolutionAborted : NumericalError {
  Trajectory partial;
  EvolutionAborted(const std::string& what, Trajectory p) : NumericalError(what), partial(std::move(p)) {}
};

/**
 * Integrate from state0.t to t_final with |dt| steps, recording the initial
 * state, every record_every-th step and the final state.
 */
inline Trajectory evolve(const TransformedState& state0, std::span<const double> y0, double t_final,
                         double dt, int record_every, const EvolveOptions& opt = {}) {
  if (record_every < 1) throw ContractError("evolve: record_every must be >= 1");
  if (!(dt != 0.0) || !std::isfinite(dt)) throw ContractError("evolve: dt must be finite and nonzero");
  const double span = t_final - state0.t;
  const double h = std::copysign(std::abs(dt), span);
  const double steps_real = std::abs(span) / std::abs(dt);
  const long steps = std::lround(steps_real);
  if (std::abs(steps_real - static_cast<double>(steps)) > 1e-9 * std::max(1.0, steps_real))
    throw ConfigError("evolve: |t_final - t0| / dt is not an integer");

  Trajectory traj;
  TransformedState s = state0;
  Samples y(y0.begin(), y0.end());
  traj.record(s, y);
  for (long i = 1; i <= steps; ++i) {
    try {
      StepResult r = rk4_step(s, y, h, opt);
      s = std::move(r.state);
      y = std::move(r.y);
    } catch (const NumericalError& e) {
      throw EvolutionAborted(e.what(), std::move(traj));
    }
    // Pin the clock to the step count so recorded times do not drift.
    s.t = state0.t + static_cast<double>(i) * h;
    if (i % record_every == 0 || i == steps) traj.record(s, y);
  }
  return traj;
}

}  // namespace novikov
