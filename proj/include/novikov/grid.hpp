#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "novikov/errors.hpp"

namespace novikov {

using Samples = std::vector<double>;

struct Grid {
  double xi_min = 0.0;
  double xi_max = 1.0;
  std::size_t n = 3;
  double dx = 0.5;

  double node(std::size_t k) const { return xi_min + static_cast<double>(k) * dx; }

  Samples nodes() const {
    Samples out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = node(k);
    return out;
  }

  friend bool operator==(const Grid&, const Grid&) = default;
};

inline Grid make_grid(double xi_min, double xi_max, long long n) {
  if (!std::isfinite(xi_min) || !std::isfinite(xi_max))
    throw ConfigError("grid bounds must be finite");
  if (!(xi_min < xi_max)) throw ConfigError("grid requires xi_min < xi_max");
  if (n < 3) throw ConfigError("grid requires n >= 3, got " + std::to_string(n));
  Grid g;
  g.xi_min = xi_min;
  g.xi_max = xi_max;
  g.n = static_cast<std::size_t>(n);
  g.dx = (xi_max - xi_min) / static_cast<double>(n - 1);
  return g;
}

namespace detail {
inline void check_length(std::span<const double> f, const Grid& grid, const char* who) {
  if (f.size() != grid.n)
    throw ContractError(std::string(who) + ": sample length " + std::to_string(f.size()) +
                        " does not match grid size " + std::to_string(grid.n));
}
}  // namespace detail

// Cumulative trapezoid from xi_min. integrate() returns the last entry, so the
// two agree bit for bit.
inline Samples prefix_integral(std::span<const double> f, const Grid& grid) {
  detail::check_length(f, grid, "prefix_integral");
  Samples c(grid.n, 0.0);
  const double h = 0.5 * grid.dx;
  for (std::size_t k = 1; k < grid.n; ++k) c[k] = c[k - 1] + h * (f[k - 1] + f[k]);
  return c;
}

inline double integrate(std::span<const double> f, const Grid& grid) {
  return prefix_integral(f, grid).back();
}

/**
 * Finite-difference weights for the m-th derivative at x0 from arbitrary nodes
 * (Fornberg's recursion). Returns one weight per node.
 */
inline Samples fornberg_weights(double x0, std::span<const double> nodes, int m) {
  const std::size_t np = nodes.size();
  std::vector<Samples> c(np, Samples(static_cast<std::size_t>(m) + 1, 0.0));
  double c1 = 1.0;
  double c4 = nodes[0] - x0;
  c[0][0] = 1.0;
  for (std::size_t i = 1; i < np; ++i) {
    const int mn = std::min<int>(static_cast<int>(i), m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = nodes[i] - x0;
    for (std::size_t j = 0; j < i; ++j) {
      const double c3 = nodes[i] - nodes[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k)
          c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  Samples w(np);
  for (std::size_t i = 0; i < np; ++i) w[i] = c[i][static_cast<std::size_t>(m)];
  return w;
}

struct FdResult {
  Samples values;
  // Truncation order of each entry: 4 in the interior, lower on the
  // one-sided boundary stencils.
  std::vector<int> accuracy;
};

namespace detail {

// Stencil half-width for a centred accuracy-4 stencil of derivative m.
inline int fd_half_width(int m) { return (m + 1) / 2 + 1; }

struct StencilTable {
  int half = 0;
  // weights[s] is the stencil whose first node sits at offset s - half
  // relative to the target; s = half is the centred one.
  std::vector<Samples> weights;
};

inline StencilTable stencil_table(int m, double dx) {
  StencilTable t;
  t.half = fd_half_width(m);
  const int width = 2 * t.half + 1;
  for (int shift = 0; shift <= 2 * t.half; ++shift) {
    Samples rel(static_cast<std::size_t>(width));
    for (int i = 0; i < width; ++i) rel[static_cast<std::size_t>(i)] = static_cast<double>(i - shift);
    Samples w = fornberg_weights(0.0, rel, m);
    const double scale = std::pow(dx, -m);
    for (double& v : w) v *= scale;
    t.weights.push_back(std::move(w));
  }
  return t;
}

}  // namespace detail

inline FdResult fd_derivative_detailed(std::span<const double> f, const Grid& grid, int order) {
  if (order < 1 || order > 4) throw ContractError("fd_derivative: order must be in 1..4");
  detail::check_length(f, grid, "fd_derivative");
  if (grid.n < static_cast<std::size_t>(2 * order + 5))
    throw ContractError("fd_derivative: grid too small for requested order");
  const detail::StencilTable table = detail::stencil_table(order, grid.dx);
  const int half = table.half;
  const int width = 2 * half + 1;
  const long n = static_cast<long>(grid.n);
  FdResult out{Samples(grid.n), std::vector<int>(grid.n)};
  for (long k = 0; k < n; ++k) {
    long start = k - half;
    start = std::clamp(start, 0L, n - width);
    const int shift = static_cast<int>(k - start);
    const Samples& w = table.weights[static_cast<std::size_t>(shift)];
    double acc = 0.0;
    for (int i = 0; i < width; ++i) acc += w[static_cast<std::size_t>(i)] * f[static_cast<std::size_t>(start + i)];
    out.values[static_cast<std::size_t>(k)] = acc;
    out.accuracy[static_cast<std::size_t>(k)] = (shift == half) ? 4 : width - order;
  }
  return out;
}

inline Samples fd_derivative(std::span<const double> f, const Grid& grid, int order) {
  return fd_derivative_detailed(f, grid, order).values;
}

/**
 * Derivative of order m at an arbitrary point x0 inside the grid, from the
 * npts nodes nearest to x0. Used for point evaluations off the node set.
 */
inline double fd_at(std::span<const double> f, const Grid& grid, double x0, int m, int npts) {
  detail::check_length(f, grid, "fd_at");
  const long n = static_cast<long>(grid.n);
  if (npts > n || npts <= m) throw ContractError("fd_at: stencil does not fit the grid");
  const double s = (x0 - grid.xi_min) / grid.dx;
  long start = static_cast<long>(std::lround(s - 0.5 * (npts - 1)));
  start = std::clamp(start, 0L, n - npts);
  Samples rel(static_cast<std::size_t>(npts));
  for (int i = 0; i < npts; ++i) rel[static_cast<std::size_t>(i)] = static_cast<double>(start + i) - s;
  Samples w = fornberg_weights(0.0, rel, m);
  double acc = 0.0;
  for (int i = 0; i < npts; ++i) acc += w[static_cast<std::size_t>(i)] * f[static_cast<std::size_t>(start + i)];
  return acc * std::pow(grid.dx, -m);
}

// Lagrange interpolation of samples at x0 with the npts nearest nodes.
inline double interp_at(std::span<const double> f, const Grid& grid, double x0, int npts = 6) {
  return fd_at(f, grid, x0, 0, npts);
}

}  // namespace novikov
