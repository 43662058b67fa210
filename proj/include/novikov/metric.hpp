#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "novikov/errors.hpp"
#include "novikov/evolution.hpp"
#include "novikov/grid.hpp"
#include "novikov/initial_data.hpp"
#include "novikov/nonlocal.hpp"
#include "novikov/singular.hpp"
#include "novikov/state.hpp"

namespace novikov {

struct TangentVector {
  Samples R, S, A, B, Q;
};

inline TangentVector zero_tangent(const Grid& grid) {
  const Samples z(grid.n, 0.0);
  return {z, z, z, z, z};
}

// a * t1 + b * t2
inline TangentVector combine(double a, const TangentVector& t1, double b, const TangentVector& t2) {
  TangentVector out = t1;
  auto mix = [&](Samples& d, const Samples& x, const Samples& y) {
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = a * x[k] + b * y[k];
  };
  mix(out.R, t1.R, t2.R);
  mix(out.S, t1.S, t2.S);
  mix(out.A, t1.A, t2.A);
  mix(out.B, t1.B, t2.B);
  mix(out.Q, t1.Q, t2.Q);
  return out;
}

enum class EtaSearch { eta_zero, coarse_descent };

inline EtaSearch parse_search(std::string_view s) {
  if (s == "eta_zero") return EtaSearch::eta_zero;
  if (s == "coarse_descent") return EtaSearch::coarse_descent;
  throw ConfigError("unknown eta search mode '" + std::string(s) + "'");
}

inline const char* search_name(EtaSearch s) {
  return s == EtaSearch::eta_zero ? "eta_zero" : "coarse_descent";
}

/**
 * Piecewise-linear shift eta on m equally spaced coarse nodes spanning the
 * grid. eta' is the slope of the coarse cell containing the fine node.
 */
struct ShiftField {
  Samples coefficients;

  static ShiftField zero(std::size_t m = 17) { return {Samples(m, 0.0)}; }

  struct Basis {
    std::vector<std::size_t> cell;
    Samples t;
    double H = 1.0;
  };

  static Basis basis(const Grid& grid, std::size_t m) {
    if (m < 2) throw ContractError("ShiftField: needs at least 2 coarse nodes");
    Basis b;
    b.H = (grid.xi_max - grid.xi_min) / static_cast<double>(m - 1);
    b.cell.resize(grid.n);
    b.t.resize(grid.n);
    for (std::size_t k = 0; k < grid.n; ++k) {
      const double s = static_cast<double>(k) * grid.dx / b.H;
      std::size_t j = static_cast<std::size_t>(std::floor(s));
      j = std::min(j, m - 2);
      b.cell[k] = j;
      b.t[k] = s - static_cast<double>(j);
    }
    return b;
  }

  void evaluate(const Basis& b, Samples& eta, Samples& deta) const {
    const std::size_t n = b.cell.size();
    eta.resize(n);
    deta.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t j = b.cell[k];
      const double c0 = coefficients[j], c1 = coefficients[j + 1];
      eta[k] = (1.0 - b.t[k]) * c0 + b.t[k] * c1;
      deta[k] = (c1 - c0) / b.H;
    }
  }
};

// y recomputed from the state alone: xi + int_{xi_min}^{xi} (y_xi - 1).
inline Samples characteristic_from_state(const TransformedState& s) {
  Samples d(s.grid.n);
  for (std::size_t k = 0; k < s.grid.n; ++k)
    d[k] = kernel_density(s.q[k], half_angles(s.W[k]), half_angles(s.Z[k])) - 1.0;
  Samples y = prefix_integral(d, s.grid);
  for (std::size_t k = 0; k < s.grid.n; ++k) y[k] += s.grid.node(k);
  return y;
}

inline Samples z_shift(const TransformedState& s, const TangentVector& r) {
  Samples f(s.grid.n);
  for (std::size_t k = 0; k < s.grid.n; ++k) {
    const HalfAngles w = half_angles(s.W[k]), z = half_angles(s.Z[k]);
    f[k] = r.Q[k] * (w.cw * z.cw) - 0.5 * s.q[k] * r.A[k] * w.sinw * z.cw -
           0.5 * s.q[k] * r.B[k] * w.cw * z.sinw;
  }
  return prefix_integral(f, s.grid);
}

namespace detail {

// Per-state quantities the phi functions need, independent of the tangent.
struct StateJets {
  Samples y_xi, U_xi, V_xi, W_xi, Z_xi, q_xi;
};

inline StateJets state_jets(const TransformedState& s) {
  const std::size_t n = s.grid.n;
  StateJets j{Samples(n), Samples(n), Samples(n), Samples{}, Samples{}, Samples{}};
  for (std::size_t k = 0; k < n; ++k) {
    const HalfAngles w = half_angles(s.W[k]), z = half_angles(s.Z[k]);
    j.y_xi[k] = kernel_density(s.q[k], w, z);
    j.U_xi[k] = 0.5 * s.q[k] * w.sinw * z.cw;
    j.V_xi[k] = 0.5 * s.q[k] * w.cw * z.sinw;
  }
  j.W_xi = fd_derivative(s.W, s.grid, 1);
  j.Z_xi = fd_derivative(s.Z, s.grid, 1);
  j.q_xi = fd_derivative(s.q, s.grid, 1);
  return j;
}

// phi_i = base_i + eta * slope_i (+ eta' * q for phi_6).
struct PhiParts {
  std::array<Samples, 6> base;
  std::array<Samples, 6> slope;
};

inline PhiParts phi_parts(const TransformedState& s, const StateJets& j, const TangentVector& r) {
  const std::size_t n = s.grid.n;
  const Samples z = z_shift(s, r);
  PhiParts p;
  for (auto& v : p.base) v.resize(n);
  for (auto& v : p.slope) v.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double q = s.q[k];
    p.base[0][k] = z[k] * q;
    p.base[1][k] = r.R[k] * q;
    p.base[2][k] = r.S[k] * q;
    p.base[3][k] = 0.5 * r.A[k] * q;
    p.base[4][k] = 0.5 * r.B[k] * q;
    p.base[5][k] = r.Q[k];
    p.slope[0][k] = j.y_xi[k] * q;
    p.slope[1][k] = j.U_xi[k] * q;
    p.slope[2][k] = j.V_xi[k] * q;
    p.slope[3][k] = 0.5 * j.W_xi[k] * q;
    p.slope[4][k] = 0.5 * j.Z_xi[k] * q;
    p.slope[5][k] = j.q_xi[k];
  }
  return p;
}

}  // namespace detail

inline std::array<Samples, 6> phi_values(const TransformedState& s, const TangentVector& r,
                                         const ShiftField& eta) {
  const detail::StateJets j = detail::state_jets(s);
  const detail::PhiParts p = detail::phi_parts(s, j, r);
  Samples e, de;
  eta.evaluate(ShiftField::basis(s.grid, eta.coefficients.size()), e, de);
  std::array<Samples, 6> out;
  for (int i = 0; i < 6; ++i) {
    out[i].resize(s.grid.n);
    for (std::size_t k = 0; k < s.grid.n; ++k) out[i][k] = p.base[i][k] + e[k] * p.slope[i][k];
  }
  for (std::size_t k = 0; k < s.grid.n; ++k) out[5][k] += de[k] * s.q[k];
  return out;
}

struct NormOptions {
  std::size_t eta_nodes = 17;
  int iterations = 200;
  double step = 0.5;      // a in the a/k step rule
  double eta_bound = 5.0; // box for the shift coefficients
};

struct NormResult {
  double value = 0.0;           // best upper bound found
  double eta_zero_value = 0.0;  // value at eta = 0
  int iterations = 0;
  std::vector<double> best_log;  // best-so-far after each iteration
};

/**
 * Weighted L1 norm of the six phi functions, minimized over the shift field.
 * The objective is convex and piecewise linear in the coefficients; descent
 * is projected subgradient with normalized steps a/k inside a box.
 */
inline NormResult tangent_norm_detailed(const TransformedState& s, std::span<const double> y,
                                        const TangentVector& r, double alpha, EtaSearch search,
                                        const NormOptions& opt = {}) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ContractError("tangent_norm: alpha must lie in (0,1)");
  detail::check_length(y, s.grid, "tangent_norm");
  const std::size_t n = s.grid.n;
  const detail::StateJets j = detail::state_jets(s);
  const detail::PhiParts p = detail::phi_parts(s, j, r);
  Samples wq(n);  // quadrature weight times e^{-alpha |y|}
  for (std::size_t k = 0; k < n; ++k) {
    const double tw = (k == 0 || k == n - 1) ? 0.5 * s.grid.dx : s.grid.dx;
    wq[k] = tw * std::exp(-alpha * std::abs(y[k]));
  }

  const ShiftField::Basis basis = ShiftField::basis(s.grid, opt.eta_nodes);
  ShiftField eta = ShiftField::zero(opt.eta_nodes);
  Samples e(n, 0.0), de(n, 0.0);

  auto objective = [&](const Samples& ev, const Samples& dev) {
    double total = 0.0;
    for (int i = 0; i < 6; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        double phi = p.base[i][k] + ev[k] * p.slope[i][k];
        if (i == 5) phi += dev[k] * s.q[k];
        acc += std::abs(phi) * wq[k];
      }
      total += acc;
    }
    return total;
  };

  NormResult res;
  res.eta_zero_value = objective(e, de);
  res.value = res.eta_zero_value;
  if (search == EtaSearch::eta_zero || res.value == 0.0) return res;

  const std::size_t m = opt.eta_nodes;
  Samples grad(m);
  for (int it = 1; it <= opt.iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      double ce = 0.0;
      for (int i = 0; i < 6; ++i) {
        double phi = p.base[i][k] + e[k] * p.slope[i][k];
        if (i == 5) phi += de[k] * s.q[k];
        const double sg = (phi > 0.0) - (phi < 0.0);
        ce += sg * p.slope[i][k];
        if (i == 5) {
          const double cd = sg * s.q[k] * wq[k] / basis.H;
          grad[basis.cell[k]] -= cd;
          grad[basis.cell[k] + 1] += cd;
        }
      }
      ce *= wq[k];
      grad[basis.cell[k]] += (1.0 - basis.t[k]) * ce;
      grad[basis.cell[k] + 1] += basis.t[k] * ce;
    }
    double gn = 0.0;
    for (double g : grad) gn += g * g;
    gn = std::sqrt(gn);
    res.iterations = it;
    if (gn == 0.0) {
      res.best_log.push_back(res.value);
      break;
    }
    const double step = opt.step / static_cast<double>(it);
    for (std::size_t c = 0; c < m; ++c)
      eta.coefficients[c] = std::clamp(eta.coefficients[c] - step * grad[c] / gn, -opt.eta_bound, opt.eta_bound);
    eta.evaluate(basis, e, de);
    res.value = std::min(res.value, objective(e, de));
    res.best_log.push_back(res.value);
  }
  return res;
}

inline double tangent_norm(const TransformedState& s, std::span<const double> y, const TangentVector& r,
                           double alpha, EtaSearch search, const NormOptions& opt = {}) {
  return tangent_norm_detailed(s, y, r, alpha, search, opt).value;
}

struct PathOfStates {
  std::vector<double> theta;
  std::vector<TransformedState> states;
};

/**
 * States U0 + theta (U1 - U0) at m_theta uniform nodes, so that equal
 * endpoints give a constant path. Every node is checked against the
 * admissible set.
 */
inline PathOfStates straight_line_path(const TransformedState& end0, const TransformedState& end1, int m_theta,
                                       const OmegaBounds& bounds = {}) {
  if (m_theta < 2) throw ContractError("straight_line_path: m_theta must be >= 2");
  if (!(end0.grid == end1.grid)) throw ContractError("straight_line_path: endpoints on different grids");
  PathOfStates path;
  const std::size_t n = end0.grid.n;
  for (int i = 0; i < m_theta; ++i) {
    const double th = static_cast<double>(i) / static_cast<double>(m_theta - 1);
    TransformedState s = end0;
    s.t = end0.t;
    auto mix = [&](Samples& d, const Samples& a, const Samples& b) {
      for (std::size_t k = 0; k < n; ++k) d[k] = a[k] + th * (b[k] - a[k]);
    };
    mix(s.U, end0.U, end1.U);
    mix(s.V, end0.V, end1.V);
    mix(s.W, end0.W, end1.W);
    mix(s.Z, end0.Z, end1.Z);
    mix(s.q, end0.q, end1.q);
    if (auto bad = omega_violation(s, bounds))
      throw PathError("straight_line_path: state at theta=" + std::to_string(th) + " leaves the admissible set: " + *bad);
    path.theta.push_back(th);
    path.states.push_back(std::move(s));
  }
  return path;
}

struct PathLengthResult {
  double length = 0.0;
  std::vector<double> norms;
  std::vector<bool> excluded;  // theta nodes touching +-pi
  int eta_iterations = 0;
};

namespace detail {

inline TangentVector theta_difference(const TransformedState& a, const TransformedState& b,
                                      const TransformedState* c, double h, int kind) {
  // kind 0: central (c - a)/(2h) with b unused; kind 1: forward, kind 2: backward
  // second-order one-sided from (a, b, c).
  const std::size_t n = a.grid.n;
  TangentVector t;
  auto fill = [&](Samples& d, const Samples& x, const Samples& y, const Samples* z) {
    d.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      if (kind == 0) d[k] = ((*z)[k] - x[k]) / (2.0 * h);
      // Written in differences so that a constant path gives exact zeros.
      else if (kind == 1) d[k] = (4.0 * (y[k] - x[k]) - ((*z)[k] - x[k])) / (2.0 * h);
      else d[k] = -(4.0 * (y[k] - x[k]) - ((*z)[k] - x[k])) / (2.0 * h);
    }
  };
  fill(t.R, a.U, b.U, &c->U);
  fill(t.S, a.V, b.V, &c->V);
  fill(t.A, a.W, b.W, &c->W);
  fill(t.B, a.Z, b.Z, &c->Z);
  fill(t.Q, a.q, b.q, &c->q);
  return t;
}

inline bool touches_pi(const TransformedState& s, double tol_pi) {
  for (std::size_t k = 0; k < s.grid.n; ++k)
    if (angle_to_pi(s.W[k]) <= tol_pi || angle_to_pi(s.Z[k]) <= tol_pi) return true;
  return false;
}

}  // namespace detail

/**
 * Length of a path: tangent norms at the theta nodes (central differences in
 * theta, second-order one-sided at the ends), integrated by the trapezoid
 * rule. Nodes touching +-pi are dropped and the remaining nodes' piecewise
 * linear interpolant, held constant out to 0 and 1, is integrated instead.
 */
inline PathLengthResult path_length_detailed(const PathOfStates& path, double alpha, EtaSearch search,
                                             const NormOptions& opt = {}, double tol_pi = 1e-3) {
  const std::size_t m = path.states.size();
  if (m < 3) throw ContractError("path_length: needs at least 3 theta nodes");
  PathLengthResult res;
  res.norms.resize(m);
  res.excluded.assign(m, false);
  const double h = path.theta[1] - path.theta[0];
  for (std::size_t i = 0; i < m; ++i) {
    TangentVector t;
    if (i == 0) t = detail::theta_difference(path.states[0], path.states[1], &path.states[2], h, 1);
    else if (i == m - 1)
      t = detail::theta_difference(path.states[m - 1], path.states[m - 2], &path.states[m - 3], h, 2);
    else t = detail::theta_difference(path.states[i - 1], path.states[i], &path.states[i + 1], h, 0);
    res.excluded[i] = detail::touches_pi(path.states[i], tol_pi);
    if (res.excluded[i]) {
      res.norms[i] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const Samples y = characteristic_from_state(path.states[i]);
    const NormResult nr = tangent_norm_detailed(path.states[i], y, t, alpha, search, opt);
    res.norms[i] = nr.value;
    res.eta_iterations += nr.iterations;
  }
  std::vector<double> th, v;
  for (std::size_t i = 0; i < m; ++i)
    if (!res.excluded[i]) {
      th.push_back(path.theta[i]);
      v.push_back(res.norms[i]);
    }
  if (th.empty()) throw PathError("path_length: every theta node touches pi");
  double L = v.front() * (th.front() - path.theta.front()) + v.back() * (path.theta.back() - th.back());
  for (std::size_t i = 1; i < th.size(); ++i) L += 0.5 * (th[i] - th[i - 1]) * (v[i] + v[i - 1]);
  res.length = L;
  return res;
}

inline double path_length(const PathOfStates& path, double alpha, EtaSearch search, const NormOptions& opt = {}) {
  return path_length_detailed(path, alpha, search, opt).length;
}

inline PathLengthResult distance_upper_detailed(const TransformedState& u0, const TransformedState& u1, double alpha,
                                                int m_theta, EtaSearch search, const NormOptions& opt = {},
                                                const OmegaBounds& bounds = {}) {
  return path_length_detailed(straight_line_path(u0, u1, m_theta, bounds), alpha, search, opt);
}

inline double distance_upper(const TransformedState& u0, const TransformedState& u1, double alpha, int m_theta,
                             EtaSearch search, const NormOptions& opt = {}) {
  return distance_upper_detailed(u0, u1, alpha, m_theta, search, opt).length;
}

struct LipschitzRow {
  double t = 0.0;
  double d_upper = 0.0;
  double ratio = 0.0;
  EtaSearch search = EtaSearch::eta_zero;
  int eta_iterations = 0;
};

struct LipschitzTable {
  std::vector<LipschitzRow> rows;  // ascending in t
  bool complete = true;
  bool zero_initial_distance = false;
  std::string note;
};

struct LipschitzOptions {
  double alpha = 0.5;
  int m_theta = 9;
  EtaSearch search = EtaSearch::eta_zero;
  int record_every = 100;
  NormOptions norm;
  EvolveOptions evolve;
};

/**
 * d_upper between the two evolutions at recorded times in [-T, T], divided
 * by the distance at t = 0. When the initial distance is exactly zero the
 * ratios are reported as 0 and the table is flagged.
 */
inline LipschitzTable lipschitz_experiment(const EulerDatum& datum0, const EulerDatum& datum1, const Grid& grid,
                                           double T, double dt, const LipschitzOptions& opt = {}) {
  LipschitzTable table;
  const InitialState a = direct_transform(datum0, grid, opt.evolve.bounds);
  const InitialState b = direct_transform(datum1, grid, opt.evolve.bounds);
  std::vector<TransformedState> sa, sb;  // paired states in ascending time

  auto run = [&](double t_end, std::vector<TransformedState>& fa, std::vector<TransformedState>& fb) {
    Trajectory ta, tb;
    try {
      ta = evolve(a.state, a.y0, t_end, dt, opt.record_every, opt.evolve);
    } catch (const EvolutionAborted& e) {
      ta = e.partial;
      table.complete = false;
      table.note += std::string(e.what()) + "; ";
    }
    try {
      tb = evolve(b.state, b.y0, t_end, dt, opt.record_every, opt.evolve);
    } catch (const EvolutionAborted& e) {
      tb = e.partial;
      table.complete = false;
      table.note += std::string(e.what()) + "; ";
    }
    const std::size_t cnt = std::min(ta.states.size(), tb.states.size());
    for (std::size_t i = 0; i < cnt; ++i) {
      fa.push_back(ta.states[i]);
      fb.push_back(tb.states[i]);
    }
  };
  std::vector<TransformedState> ba, bb, fa, fb;
  if (T > 0.0) run(-T, ba, bb);
  run(T, fa, fb);
  for (std::size_t i = ba.size(); i-- > 1;) {  // skip t = 0, it comes from the forward run
    sa.push_back(ba[i]);
    sb.push_back(bb[i]);
  }
  for (std::size_t i = 0; i < fa.size(); ++i) {
    sa.push_back(fa[i]);
    sb.push_back(fb[i]);
  }

  double d0 = 0.0;
  std::vector<LipschitzRow> rows;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    LipschitzRow row;
    row.t = sa[i].t;
    row.search = opt.search;
    try {
      const PathLengthResult r =
          distance_upper_detailed(sa[i], sb[i], opt.alpha, opt.m_theta, opt.search, opt.norm, opt.evolve.bounds);
      row.d_upper = r.length;
      row.eta_iterations = r.eta_iterations;
    } catch (const PathError& e) {
      table.complete = false;
      table.note += std::string(e.what()) + "; ";
      row.d_upper = std::numeric_limits<double>::quiet_NaN();
    }
    if (sa[i].t == 0.0) d0 = row.d_upper;
    rows.push_back(row);
  }
  table.zero_initial_distance = (d0 == 0.0);
  for (auto& row : rows) {
    if (table.zero_initial_distance) row.ratio = row.d_upper == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    else row.ratio = row.d_upper / d0;
  }
  table.rows = std::move(rows);
  return table;
}

}  // namespace novikov
