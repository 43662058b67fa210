#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "novikov/errors.hpp"
#include "novikov/evolution.hpp"
#include "novikov/grid.hpp"
#include "novikov/state.hpp"

namespace novikov {

enum class MaskReason : unsigned char { none = 0, near_pi = 1 };

/**
 * Graph representation of (u, v) at one time: node k sits at x = y[k].
 * Masked derivatives are NaN with reason near_pi.
 */
struct EulerField {
  Grid grid;  // parameter grid of the graph
  Samples x, u, v, ux, vx, Ddensity;
  std::vector<MaskReason> ux_mask, vx_mask;

  bool ux_valid(std::size_t k) const { return ux_mask[k] == MaskReason::none; }
  bool vx_valid(std::size_t k) const { return vx_mask[k] == MaskReason::none; }
};

inline constexpr double kMaskTol = 1e-6;

inline EulerField euler_fields(const TransformedState& s, std::span<const double> y,
                               double mask_tol = kMaskTol) {
  detail::check_length(y, s.grid, "euler_fields");
  const std::size_t n = s.grid.n;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EulerField f;
  f.grid = s.grid;
  f.x.assign(y.begin(), y.end());
  f.u = s.U;
  f.v = s.V;
  f.ux.resize(n);
  f.vx.resize(n);
  f.Ddensity.resize(n);
  f.ux_mask.assign(n, MaskReason::none);
  f.vx_mask.assign(n, MaskReason::none);
  for (std::size_t k = 0; k < n; ++k) {
    const double cw = std::cos(0.5 * s.W[k]), cz = std::cos(0.5 * s.Z[k]);
    if (std::abs(cw) < mask_tol) {
      f.ux[k] = nan;
      f.ux_mask[k] = MaskReason::near_pi;
    } else {
      f.ux[k] = std::sin(0.5 * s.W[k]) / cw;
    }
    if (std::abs(cz) < mask_tol) {
      f.vx[k] = nan;
      f.vx_mask[k] = MaskReason::near_pi;
    } else {
      f.vx[k] = std::sin(0.5 * s.Z[k]) / cz;
    }
    f.Ddensity[k] = (f.ux_valid(k) && f.vx_valid(k))
                        ? (1.0 + f.ux[k] * f.ux[k]) * (1.0 + f.vx[k] * f.vx[k])
                        : nan;
  }
  return f;
}

struct UV {
  double u, v;
};

/**
 * Piecewise-linear interpolation on the graph. On an exact plateau (several
 * nodes at the same x) the leftmost node wins.
 */
inline UV sample_at(const EulerField& f, double xq) {
  if (!(xq >= f.x.front() && xq <= f.x.back()))
    throw QueryError("sample_at: x=" + std::to_string(xq) + " outside [" + std::to_string(f.x.front()) +
                     ", " + std::to_string(f.x.back()) + "]");
  const auto it = std::lower_bound(f.x.begin(), f.x.end(), xq);
  const std::size_t j = static_cast<std::size_t>(it - f.x.begin());
  if (f.x[j] == xq) return {f.u[j], f.v[j]};
  // f.x[j-1] < xq < f.x[j]
  const std::size_t i = j - 1;
  const double t = (xq - f.x[i]) / (f.x[j] - f.x[i]);
  return {f.u[i] + t * (f.u[j] - f.u[i]), f.v[i] + t * (f.v[j] - f.v[i])};
}

namespace detail {

inline double measure_density(double q, const HalfAngles& w, const HalfAngles& z) {
  return q * (w.cw * z.sw + w.sw * z.cw + w.sw * z.sw);
}

// Cumulative measure as a function of x on the graph; `inclusive` picks the
// right limit at atoms (flat y segments).
inline double cumulative_measure(const Samples& x, const Samples& C, double xq, bool inclusive) {
  if (xq < x.front()) return 0.0;
  if (xq > x.back()) return C.back();
  auto it = inclusive ? std::upper_bound(x.begin(), x.end(), xq) : std::lower_bound(x.begin(), x.end(), xq);
  const std::size_t j = static_cast<std::size_t>(it - x.begin());
  if (j == 0) return 0.0;
  if (j == x.size()) return C.back();
  const std::size_t i = j - 1;
  if (x[i] == xq) return C[i];
  const double t = (xq - x[i]) / (x[j] - x[i]);
  return C[i] + t * (C[j] - C[i]);
}

}  // namespace detail

struct MeasureQuery {
  double a, b;
};

/**
 * mu([a,b]) from the transformed density on {xi : y(xi) in [a,b]}. The
 * cumulative trapezoid measure is interpolated linearly in x, so adjacent
 * intervals add up to rounding.
 */
inline double measure_interval(const TransformedState& s, std::span<const double> y, MeasureQuery query) {
  if (!(query.a <= query.b)) throw ContractError("measure_interval: requires a <= b");
  detail::check_length(y, s.grid, "measure_interval");
  Samples m(s.grid.n);
  for (std::size_t k = 0; k < s.grid.n; ++k)
    m[k] = detail::measure_density(s.q[k], half_angles(s.W[k]), half_angles(s.Z[k]));
  const Samples C = prefix_integral(m, s.grid);
  const Samples x(y.begin(), y.end());
  const double hi = detail::cumulative_measure(x, C, query.b, true);
  const double lo = detail::cumulative_measure(x, C, query.a, false);
  return std::max(0.0, hi - lo);
}

namespace detail {

// x-ranges covered by masked nodes, merged.
inline std::string masked_ranges(const EulerField& f) {
  std::ostringstream out;
  out.precision(8);
  bool open = false;
  double start = 0.0;
  int count = 0;
  for (std::size_t k = 0; k <= f.x.size(); ++k) {
    const bool masked = k < f.x.size() && !(f.ux_valid(k) && f.vx_valid(k));
    if (masked && !open) {
      open = true;
      start = f.x[k];
    } else if (!masked && open) {
      open = false;
      out << (count++ ? ", " : "") << "[" << start << ", " << f.x[k - 1] << "]";
    }
  }
  return out.str();
}

/**
 * Quadrature over the graph x(s), s the node index: trapezoid in s with the
 * Jacobian dx/ds taken from 4th-order differences of the x samples. Uses
 * only the graph (x, u, v, ux, vx), not q.
 */
inline double graph_integral(const EulerField& f, std::span<const double> values) {
  const Samples jac = fd_derivative(f.x, f.grid, 1);
  Samples w(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) w[k] = values[k] * jac[k];
  return integrate(w, f.grid);
}

inline void require_unmasked(const EulerField& f, const char* who) {
  for (std::size_t k = 0; k < f.x.size(); ++k)
    if (!(f.ux_valid(k) && f.vx_valid(k)))
      throw PartialResultError(std::string(who) + ": masked nodes at x in " + masked_ranges(f));
}

}  // namespace detail

inline ConservedSet conserved_euler(const EulerField& f) {
  detail::require_unmasked(f, "conserved_euler");
  const std::size_t n = f.x.size();
  Samples eu(n), ev(n), g(n), h(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = f.u[k], v = f.v[k], a = f.ux[k], b = f.vx[k];
    eu[k] = u * u + a * a;
    ev[k] = v * v + b * b;
    g[k] = u * v + a * b;
    h[k] = 3.0 * u * u * v * v + u * u * b * b + a * a * v * v + 4.0 * u * a * v * b - a * a * b * b;
  }
  return {detail::graph_integral(f, eu), detail::graph_integral(f, ev), detail::graph_integral(f, g),
          detail::graph_integral(f, h)};
}

// Eulerian integral of ux^2 + vx^2 + ux^2 vx^2 over the window.
inline double euler_gradient_mass(const EulerField& f) {
  detail::require_unmasked(f, "euler_gradient_mass");
  Samples m(f.x.size());
  for (std::size_t k = 0; k < m.size(); ++k) {
    const double a2 = f.ux[k] * f.ux[k], b2 = f.vx[k] * f.vx[k];
    m[k] = a2 + b2 + a2 * b2;
  }
  return detail::graph_integral(f, m);
}

}  // namespace novikov
