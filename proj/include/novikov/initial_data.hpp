#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>

#include "novikov/errors.hpp"
#include "novikov/grid.hpp"
#include "novikov/state.hpp"

namespace novikov {

using RealFn = std::function<double(double)>;
using Params = std::map<std::string, double>;

struct Profile {
  RealFn f;
  RealFn df;
};

struct EulerDatum {
  RealFn u0, v0, du0, dv0;
};

enum class DatumFamily { gaussian_bump, sech_bump, peakon, mirrored_of, steep_front };

inline DatumFamily parse_family(std::string_view name) {
  if (name == "gaussian_bump") return DatumFamily::gaussian_bump;
  if (name == "sech_bump") return DatumFamily::sech_bump;
  if (name == "peakon") return DatumFamily::peakon;
  if (name == "mirrored_of") return DatumFamily::mirrored_of;
  if (name == "steep_front") return DatumFamily::steep_front;
  throw ConfigError("unknown datum family '" + std::string(name) + "'");
}

inline const char* family_name(DatumFamily f) {
  switch (f) {
    case DatumFamily::gaussian_bump: return "gaussian_bump";
    case DatumFamily::sech_bump: return "sech_bump";
    case DatumFamily::peakon: return "peakon";
    case DatumFamily::mirrored_of: return "mirrored_of";
    case DatumFamily::steep_front: return "steep_front";
  }
  return "?";
}

namespace detail {

struct ParamReader {
  const Params& params;
  std::string family;
  std::set<std::string> used;

  double get(const std::string& key, double fallback) {
    used.insert(key);
    auto it = params.find(key);
    double v = it == params.end() ? fallback : it->second;
    if (!std::isfinite(v)) throw ConfigError(family + ": parameter '" + key + "' is not finite");
    return v;
  }
  double positive(const std::string& key, double fallback) {
    double v = get(key, fallback);
    if (!(v > 0.0)) throw ConfigError(family + ": parameter '" + key + "' must be > 0");
    return v;
  }
  void finish() const {
    for (const auto& [k, v] : params)
      if (!used.contains(k)) throw ConfigError(family + ": unknown parameter '" + k + "'");
  }
};

}  // namespace detail

/**
 * Scalar profile for one component.
 *   gaussian_bump: a exp(-((x-c)/w)^2)
 *   sech_bump:     a sech((x-c)/w)
 *   peakon:        sqrt(c) exp(-|x-x0|), derivative taken as 0 at the crest
 *   steep_front:   a (1 - tanh((x-c)/s))/2 * exp(-((x-c)/w)^2)
 */
inline Profile builtin_profile(DatumFamily family, const Params& params) {
  detail::ParamReader r{params, family_name(family), {}};
  Profile p;
  switch (family) {
    case DatumFamily::mirrored_of:
      throw ConfigError("mirrored_of is not a profile; use builtin_datum with a base family");
    case DatumFamily::gaussian_bump: {
      const double a = r.get("a", 1.0), c = r.get("c", 0.0), w = r.positive("w", 1.0);
      p.f = [=](double x) { const double s = (x - c) / w; return a * std::exp(-s * s); };
      p.df = [=](double x) { const double s = (x - c) / w; return -2.0 * a * s / w * std::exp(-s * s); };
      break;
    }
    case DatumFamily::sech_bump: {
      const double a = r.get("a", 1.0), c = r.get("c", 0.0), w = r.positive("w", 1.0);
      p.f = [=](double x) { return a / std::cosh(std::clamp((x - c) / w, -700.0, 700.0)); };
      p.df = [=](double x) {
        const double s = std::clamp((x - c) / w, -700.0, 700.0);
        return -a / w * std::tanh(s) / std::cosh(s);
      };
      break;
    }
    case DatumFamily::peakon: {
      const double speed = r.get("c", 1.0), x0 = r.get("x0", 0.0);
      if (speed < 0.0) throw ConfigError("peakon: speed c must be >= 0");
      const double amp = std::sqrt(speed);
      p.f = [=](double x) { return amp * std::exp(-std::abs(x - x0)); };
      p.df = [=](double x) {
        if (x == x0) return 0.0;
        return (x > x0 ? -amp : amp) * std::exp(-std::abs(x - x0));
      };
      break;
    }
    case DatumFamily::steep_front: {
      const double a = r.get("a", 1.0), c = r.get("c", 0.0), w = r.positive("w", 2.0),
                   s = r.positive("s", 0.1);
      p.f = [=](double x) {
        const double z = (x - c) / w;
        return a * 0.5 * (1.0 - std::tanh((x - c) / s)) * std::exp(-z * z);
      };
      p.df = [=](double x) {
        const double z = (x - c) / w;
        const double th = std::tanh((x - c) / s);
        const double env = std::exp(-z * z);
        const double front = 0.5 * (1.0 - th);
        return a * (-0.5 * (1.0 - th * th) / s * env + front * (-2.0 * z / w) * env);
      };
      break;
    }
  }
  r.finish();
  return p;
}

inline EulerDatum make_datum(const Profile& pu, const Profile& pv) {
  return {pu.f, pv.f, pu.df, pv.df};
}

inline Profile mirror(const Profile& p) {
  return {[f = p.f](double x) { return f(-x); }, [df = p.df](double x) { return -df(-x); }};
}

/**
 * Single-family datum. Profile families give u0 = v0 (the scalar reduction);
 * mirrored_of builds the base profile from `params` and sets v0(x) = u0(-x).
 */
inline EulerDatum builtin_datum(DatumFamily family, const Params& params,
                                DatumFamily base = DatumFamily::gaussian_bump) {
  if (family == DatumFamily::mirrored_of) {
    if (base == DatumFamily::mirrored_of) throw ConfigError("mirrored_of needs a concrete base family");
    Profile p = builtin_profile(base, params);
    return make_datum(p, mirror(p));
  }
  Profile p = builtin_profile(family, params);
  return make_datum(p, p);
}

inline EulerDatum zero_datum() {
  auto z = [](double) { return 0.0; };
  return {z, z, z, z};
}

// datum + eps * (pu, pv)
inline EulerDatum perturbed(const EulerDatum& d, double eps, const Profile& pu, const Profile& pv) {
  return {[=](double x) { return d.u0(x) + eps * pu.f(x); },
          [=](double x) { return d.v0(x) + eps * pv.f(x); },
          [=](double x) { return d.du0(x) + eps * pu.df(x); },
          [=](double x) { return d.dv0(x) + eps * pv.df(x); }};
}

inline double density0(const EulerDatum& d, double x) {
  const double a = d.du0(x), b = d.dv0(x);
  return (1.0 + a * a) * (1.0 + b * b);
}

struct InvertOptions {
  double tol = 1e-12;
  int max_iter = 60;
};

namespace detail {
inline double integrate_density(const EulerDatum& d, double a, double b) {
  if (a == b) return 0.0;
  // Integrate over [-1, 1]: boost's error estimate does not converge on
  // very short raw intervals and the recursion then runs to full depth.
  const double m = 0.5 * (a + b), h = 0.5 * (b - a);
  auto f = [&](double t) { return density0(d, m + h * t); };
  return h * boost::math::quadrature::gauss_kronrod<double, 21>::integrate(f, -1.0, 1.0, 12, 1e-15);
}
}  // namespace detail

/**
 * Solve int_0^{y0(xi)} (1+u0x^2)(1+v0x^2) dx = xi at every node.
 * Marches outward from the anchor xi = 0, y0 = 0; each node uses Newton
 * safeguarded by the bracket [y_prev, y_prev + (xi - xi_prev)] (the density
 * is >= 1) with bisection whenever a step leaves it.
 */
inline Samples invert_y0(const EulerDatum& d, const Grid& grid, const InvertOptions& opt = {}) {
  Samples y(grid.n);

  auto solve = [&](double xi_prev, double y_prev, double F_prev, double xi) -> std::pair<double, double> {
    const double span = xi - xi_prev;  // signed
    double lo = std::min(y_prev, y_prev + span), hi = std::max(y_prev, y_prev + span);
    double yk = y_prev + span / density0(d, y_prev);
    double F = 0.0, r = 0.0;
    for (int it = 0; it < opt.max_iter; ++it) {
      F = F_prev + detail::integrate_density(d, y_prev, yk);
      r = F - xi;
      if (std::abs(r) < opt.tol) return {yk, F};
      if (r > 0.0) hi = yk; else lo = yk;
      double next = yk - r / density0(d, yk);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      yk = next;
    }
    throw NumericalError("invert_y0: Newton did not converge at xi=" + std::to_string(xi) +
                         ", residual " + std::to_string(std::abs(r)));
  };

  // First node at or above zero.
  std::size_t k0 = 0;
  while (k0 < grid.n && grid.node(k0) < 0.0) ++k0;

  double xi_p = 0.0, y_p = 0.0, F_p = 0.0;
  for (std::size_t k = k0; k < grid.n; ++k) {
    auto [yk, F] = solve(xi_p, y_p, F_p, grid.node(k));
    y[k] = yk;
    xi_p = grid.node(k); y_p = yk; F_p = F;
  }
  xi_p = 0.0; y_p = 0.0; F_p = 0.0;
  for (std::size_t k = k0; k-- > 0;) {
    auto [yk, F] = solve(xi_p, y_p, F_p, grid.node(k));
    y[k] = yk;
    xi_p = grid.node(k); y_p = yk; F_p = F;
  }
  for (std::size_t k = 1; k < grid.n; ++k)
    if (!(y[k] > y[k - 1])) throw NumericalError("invert_y0: y0 not strictly increasing at node " + std::to_string(k));
  return y;
}

struct InitialState {
  TransformedState state;
  Samples y0;
};

inline InitialState direct_transform(const EulerDatum& d, const Grid& grid,
                                     const OmegaBounds& bounds = {}, bool check_decay = true) {
  InitialState out;
  out.y0 = invert_y0(d, grid);
  TransformedState& s = out.state;
  s = zero_state(grid, 0.0);
  for (std::size_t k = 0; k < grid.n; ++k) {
    const double x = out.y0[k];
    s.U[k] = d.u0(x);
    s.V[k] = d.v0(x);
    s.W[k] = 2.0 * std::atan(d.du0(x));
    s.Z[k] = 2.0 * std::atan(d.dv0(x));
  }
  if (auto bad = omega_violation(s, bounds)) throw StateError("direct_transform: " + *bad);
  if (check_decay)
    if (auto bad = decay_violation(s, bounds)) throw ConfigError("direct_transform: " + *bad);
  return out;
}

}  // namespace novikov
