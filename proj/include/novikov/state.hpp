#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>

#include "novikov/grid.hpp"

namespace novikov {

// Sampled (U, V, W, Z, q) at time t. W and Z are kept unwrapped.
struct TransformedState {
  double t = 0.0;
  Grid grid;
  Samples U, V, W, Z, q;
};

inline TransformedState zero_state(const Grid& grid, double t = 0.0) {
  TransformedState s;
  s.t = t;
  s.grid = grid;
  s.U.assign(grid.n, 0.0);
  s.V.assign(grid.n, 0.0);
  s.W.assign(grid.n, 0.0);
  s.Z.assign(grid.n, 0.0);
  s.q.assign(grid.n, 1.0);
  return s;
}

// Exchange (U, W) with (V, Z).
inline TransformedState swapped(const TransformedState& s) {
  TransformedState out = s;
  std::swap(out.U, out.V);
  std::swap(out.W, out.Z);
  return out;
}

/**
 * Admissible-set bounds. No sharp values are known for these constants; the
 * defaults are diagnostic and exposed in the config.
 */
struct OmegaBounds {
  double q_minus = 0.1;
  double q_plus = 10.0;
  double angle_max = 1.5 * std::numbers::pi;
  double slack = 1.5;         // applied to [q_minus, q_plus] before a guard fires
  double decay_tol = 1e-6;    // |U|, |V| at both grid ends
};

// Half-angle trig shared by every module so that formulas are evaluated the
// same way everywhere (swap symmetry depends on it).
struct HalfAngles {
  double cw, sw, sinw;  // cos^2(W/2), sin^2(W/2), sin W
};

inline HalfAngles half_angles(double w) {
  const double c = std::cos(0.5 * w);
  const double s = std::sin(0.5 * w);
  return {c * c, s * s, 2.0 * s * c};
}

// First Omega violation, or nullopt. `slack` scales the q-interval outward.
inline std::optional<std::string> omega_violation(const TransformedState& s, const OmegaBounds& b,
                                                  double slack = 1.0) {
  const double qlo = b.q_minus / slack;
  const double qhi = b.q_plus * slack;
  for (std::size_t k = 0; k < s.grid.n; ++k) {
    std::ostringstream msg;
    msg.precision(10);
    if (!std::isfinite(s.U[k]) || !std::isfinite(s.V[k]) || !std::isfinite(s.W[k]) ||
        !std::isfinite(s.Z[k]) || !std::isfinite(s.q[k])) {
      msg << "non-finite field value at node " << k << " (xi=" << s.grid.node(k) << ")";
      return msg.str();
    }
    if (s.q[k] < qlo || s.q[k] > qhi) {
      msg << "q=" << s.q[k] << " outside [" << qlo << ", " << qhi << "] at node " << k
          << " (xi=" << s.grid.node(k) << ")";
      return msg.str();
    }
    if (std::abs(s.W[k]) > b.angle_max || std::abs(s.Z[k]) > b.angle_max) {
      msg << "|W| or |Z| exceeds " << b.angle_max << " at node " << k << " (xi=" << s.grid.node(k)
          << ", W=" << s.W[k] << ", Z=" << s.Z[k] << ")";
      return msg.str();
    }
  }
  return std::nullopt;
}

inline std::optional<std::string> decay_violation(const TransformedState& s, const OmegaBounds& b) {
  const std::size_t last = s.grid.n - 1;
  for (std::size_t k : {std::size_t{0}, last}) {
    if (std::abs(s.U[k]) > b.decay_tol || std::abs(s.V[k]) > b.decay_tol) {
      std::ostringstream msg;
      msg << "fields do not decay at grid end xi=" << s.grid.node(k) << " (|U|=" << std::abs(s.U[k])
          << ", |V|=" << std::abs(s.V[k]) << ", threshold " << b.decay_tol << ")";
      return msg.str();
    }
  }
  return std::nullopt;
}

}  // namespace novikov
