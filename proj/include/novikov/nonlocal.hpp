#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "novikov/errors.hpp"
#include "novikov/grid.hpp"
#include "novikov/state.hpp"

namespace novikov {

/**
 * Quadrature used inside the kernel scans.
 *   trapezoid: plain trapezoid weights per cell.
 *   corrected: trapezoid plus Euler-Maclaurin end corrections (h^2 and h^4
 *              terms) at the kernel kink and at the window ends. Sixth order
 *              for smooth integrands; this is what keeps the conserved
 *              quantities flat to ~1e-12 at n = 2048.
 */
enum class KernelQuadrature { trapezoid, corrected };

inline KernelQuadrature parse_quadrature(std::string_view s) {
  if (s == "trapezoid") return KernelQuadrature::trapezoid;
  if (s == "corrected") return KernelQuadrature::corrected;
  throw ConfigError("unknown kernel quadrature '" + std::string(s) + "'");
}

struct KernelAccumulator {
  KernelQuadrature rule = KernelQuadrature::corrected;
  Samples g;           // y_xi = q cos^2(W/2) cos^2(Z/2)
  Samples G;           // cumulative integral of g, G[0] = 0, nondecreasing
  Samples g1, g2, g3;  // FD derivatives of g (corrected rule only)

  double kernel(std::size_t i, std::size_t j) const { return std::exp(-std::abs(G[i] - G[j])); }
};

inline double kernel_density(double q, const HalfAngles& w, const HalfAngles& z) {
  return q * (w.cw * z.cw);
}

inline KernelAccumulator kernel_accumulator(const TransformedState& s,
                                            KernelQuadrature rule = KernelQuadrature::corrected) {
  const Grid& grid = s.grid;
  KernelAccumulator acc;
  acc.rule = rule;
  acc.g.resize(grid.n);
  for (std::size_t k = 0; k < grid.n; ++k) {
    if (!(s.q[k] >= 0.0))
      throw StateError("kernel_accumulator: negative integrand (q=" + std::to_string(s.q[k]) +
                       ") at node " + std::to_string(k));
    acc.g[k] = kernel_density(s.q[k], half_angles(s.W[k]), half_angles(s.Z[k]));
  }
  acc.G.assign(grid.n, 0.0);
  const double h = grid.dx;
  if (rule == KernelQuadrature::corrected) {
    acc.g1 = fd_derivative(acc.g, grid, 1);
    acc.g2 = fd_derivative(acc.g, grid, 2);
    acc.g3 = fd_derivative(acc.g, grid, 3);
  }
  for (std::size_t k = 1; k < grid.n; ++k) {
    double inc = 0.5 * h * (acc.g[k - 1] + acc.g[k]);
    if (rule == KernelQuadrature::corrected) {
      inc -= h * h / 12.0 * (acc.g1[k] - acc.g1[k - 1]);
      inc += h * h * h * h / 720.0 * (acc.g3[k] - acc.g3[k - 1]);
      inc = std::max(inc, 0.0);  // keeps G monotone where g is flat but FD noise is not
    }
    acc.G[k] = acc.G[k - 1] + inc;
  }
  return acc;
}

struct ConvolvePair {
  Samples even;  // int E p
  Samples odd;   // (int_xi^inf - int_-inf^xi) E p
};

namespace detail {

// Euler-Maclaurin end corrections for the left partial integral L (near end
// at the target node) and right partial integral R. Each is the near-end term
// minus the far-end term carried by the kernel factor. Zero under the
// trapezoid rule.
struct EndCorrections {
  Samples left, right;
};

inline EndCorrections end_corrections(std::span<const double> p, const KernelAccumulator& acc,
                                      const Grid& grid) {
  const std::size_t n = grid.n;
  EndCorrections c{Samples(n, 0.0), Samples(n, 0.0)};
  if (acc.rule != KernelQuadrature::corrected) return c;
  const Samples p1 = fd_derivative(p, grid, 1);
  const Samples p2 = fd_derivative(p, grid, 2);
  const Samples p3 = fd_derivative(p, grid, 3);
  const double h2 = grid.dx * grid.dx / 12.0;
  const double h4 = grid.dx * grid.dx * grid.dx * grid.dx / 720.0;
  Samples cl(n), cr(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double g = acc.g[k], g1 = acc.g1[k], g2 = acc.g2[k];
    // (D +- g) p and (D +- g)^3 p
    const double a_plus = p1[k] + g * p[k];
    const double a_minus = p1[k] - g * p[k];
    // Split into the parts even and odd under g -> -g.
    const double even3 = p3[k] + 3.0 * g * g * p1[k] + 3.0 * g * g1 * p[k];
    const double odd3 = 3.0 * g * p2[k] + 3.0 * g1 * p1[k] + g2 * p[k] + g * g * g * p[k];
    cl[k] = -h2 * a_plus + h4 * (even3 + odd3);
    cr[k] = h2 * a_minus - h4 * (even3 - odd3);
  }
  const double G0 = acc.G.front(), Gn = acc.G.back();
  for (std::size_t k = 0; k < n; ++k) {
    c.left[k] = cl[k] - std::exp(-(acc.G[k] - G0)) * cl[0];
    c.right[k] = cr[k] - std::exp(-(Gn - acc.G[k])) * cr[n - 1];
  }
  return c;
}

inline void check_finite(std::span<const double> v, const char* who) {
  for (std::size_t k = 0; k < v.size(); ++k)
    if (!std::isfinite(v[k]))
      throw NumericalError(std::string(who) + ": non-finite value at node " + std::to_string(k));
}

}  // namespace detail

/**
 * Linear-time evaluation of the exponential-kernel integrals. The left and
 * right partial integrals are accumulated by recursions whose only
 * exponentials are the per-cell factors exp(-(G[k+1]-G[k])) <= 1.
 */
inline ConvolvePair exp_convolve(std::span<const double> p, const KernelAccumulator& acc,
                                 const Grid& grid) {
  detail::check_length(p, grid, "exp_convolve");
  const std::size_t n = grid.n;
  const double h = 0.5 * grid.dx;
  Samples L(n, 0.0), R(n, 0.0);
  for (std::size_t k = 1; k < n; ++k) {
    const double f = std::exp(-(acc.G[k] - acc.G[k - 1]));
    L[k] = f * L[k - 1] + h * (f * p[k - 1] + p[k]);
  }
  for (std::size_t k = n - 1; k-- > 0;) {
    const double f = std::exp(-(acc.G[k + 1] - acc.G[k]));
    R[k] = f * R[k + 1] + h * (f * p[k + 1] + p[k]);
  }
  const detail::EndCorrections c = detail::end_corrections(p, acc, grid);
  ConvolvePair out{Samples(n), Samples(n)};
  for (std::size_t k = 0; k < n; ++k) {
    const double l = L[k] + c.left[k];
    const double r = R[k] + c.right[k];
    out.even[k] = l + r;
    out.odd[k] = r - l;
  }
  detail::check_finite(out.even, "exp_convolve");
  detail::check_finite(out.odd, "exp_convolve");
  return out;
}

// Quadratic-time oracle: same quadrature weights, kernel evaluated directly.
inline ConvolvePair exp_convolve_bruteforce(std::span<const double> p, const KernelAccumulator& acc,
                                            const Grid& grid) {
  detail::check_length(p, grid, "exp_convolve_bruteforce");
  const std::size_t n = grid.n;
  const double h = grid.dx;
  const detail::EndCorrections c = detail::end_corrections(p, acc, grid);
  ConvolvePair out{Samples(n), Samples(n)};
  for (std::size_t k = 0; k < n; ++k) {
    double left = 0.0, right = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == k) continue;
      const double e = std::exp(-std::abs(acc.G[k] - acc.G[j]));
      // Trapezoid weights of [xi_0, xi_k] and [xi_k, xi_{n-1}].
      const bool end = (j == 0 || j == n - 1);
      const double w = end ? 0.5 * h : h;
      if (j < k) left += w * e * p[j];
      else right += w * e * p[j];
    }
    const double self = 0.5 * h * p[k];
    const double l = (k == 0 ? 0.0 : left + self) + c.left[k];
    const double r = (k == n - 1 ? 0.0 : right + self) + c.right[k];
    out.even[k] = l + r;
    out.odd[k] = r - l;
  }
  detail::check_finite(out.even, "exp_convolve_bruteforce");
  detail::check_finite(out.odd, "exp_convolve_bruteforce");
  return out;
}

struct SourceFields {
  Samples P1, dxP1, P2, dxP2, S1, dxS1, S2, dxS2;
  // Heuristic size of the neglected outside-window contribution: prefactor
  // times the integrand magnitude at the window edges.
  double tail_bound = 0.0;
};

// p1 integrand; s1 is the same function with (U, W) and (V, Z) exchanged.
inline double p1_integrand(double q, double U, double V, const HalfAngles& w, const HalfAngles& z) {
  return q * (U * U * V * (w.cw * z.cw) + 0.25 * U * (w.sinw * z.sinw) + 0.5 * V * w.sw * z.cw);
}

// p2 integrand; s2 likewise by exchange.
inline double p2_integrand(double q, const HalfAngles& w, const HalfAngles& z) {
  return q * w.sw * z.sinw;
}

struct Integrands {
  Samples p1, p2, s1, s2;
};

inline Integrands source_integrands(const TransformedState& s) {
  const std::size_t n = s.grid.n;
  Integrands in{Samples(n), Samples(n), Samples(n), Samples(n)};
  for (std::size_t k = 0; k < n; ++k) {
    const HalfAngles w = half_angles(s.W[k]), z = half_angles(s.Z[k]);
    in.p1[k] = p1_integrand(s.q[k], s.U[k], s.V[k], w, z);
    in.s1[k] = p1_integrand(s.q[k], s.V[k], s.U[k], z, w);
    in.p2[k] = p2_integrand(s.q[k], w, z);
    in.s2[k] = p2_integrand(s.q[k], z, w);
  }
  return in;
}

inline SourceFields assemble_sources(const TransformedState& s, const KernelAccumulator& acc) {
  const Integrands in = source_integrands(s);
  SourceFields f;
  auto fill = [&](const Samples& p, double c, Samples& even, Samples& odd) {
    ConvolvePair r = exp_convolve(p, acc, s.grid);
    even.resize(r.even.size());
    odd.resize(r.odd.size());
    for (std::size_t k = 0; k < r.even.size(); ++k) {
      even[k] = c * r.even[k];
      odd[k] = c * r.odd[k];
    }
    const double edge = std::max(std::abs(p.front()), std::abs(p.back()));
    f.tail_bound = std::max(f.tail_bound, c * edge);
  };
  fill(in.p1, 0.5, f.P1, f.dxP1);
  fill(in.p2, 0.125, f.P2, f.dxP2);
  fill(in.s1, 0.5, f.S1, f.dxS1);
  fill(in.s2, 0.125, f.S2, f.dxS2);
  return f;
}

inline SourceFields assemble_sources(const TransformedState& s,
                                     KernelQuadrature rule = KernelQuadrature::corrected) {
  return assemble_sources(s, kernel_accumulator(s, rule));
}

}  // namespace novikov
