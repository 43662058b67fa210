#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "novikov/errors.hpp"
#include "novikov/evolution.hpp"
#include "novikov/initial_data.hpp"
#include "novikov/metric.hpp"
#include "novikov/nonlocal.hpp"
#include "novikov/singular.hpp"

namespace novikov {

inline constexpr const char* kSchema = "novikov-scenario/1";

struct ProfileSpec {
  DatumFamily family = DatumFamily::gaussian_bump;
  Params params;
};

enum class DatumMode { pair, symmetric, mirrored };

/**
 * Datum description. pair: u from `u`, v from `v`. symmetric: u = v = `u`.
 * mirrored: u from `u`, v(x) = u(-x).
 */
struct DatumSpec {
  DatumMode mode = DatumMode::symmetric;
  ProfileSpec u, v;
};

inline EulerDatum build_datum(const DatumSpec& d) {
  const Profile pu = builtin_profile(d.u.family, d.u.params);
  switch (d.mode) {
    case DatumMode::pair: return make_datum(pu, builtin_profile(d.v.family, d.v.params));
    case DatumMode::symmetric: return make_datum(pu, pu);
    case DatumMode::mirrored: return make_datum(pu, mirror(pu));
  }
  return make_datum(pu, pu);
}

struct ScenarioConfig {
  double xi_min = -20.0, xi_max = 20.0;
  long long n = 1024;
  DatumSpec datum;
  std::optional<DatumSpec> datum1;
  double T = 1.0, dt = 1e-3;
  int record_every = 100;
  OmegaBounds bounds;
  KernelQuadrature quadrature = KernelQuadrature::corrected;
  bool singular = true, fit_exponents = true, cancellations = true;
  SingularOptions singular_opt;
  CancellationOptions cancel_opt;
  double fit_side_window = 1e-3, fit_min_gap = 1e-6;
  double alpha = 0.5;
  int m_theta = 9;
  EtaSearch search = EtaSearch::eta_zero;
  NormOptions norm;
  std::optional<ProfileSpec> perturbation;
  double epsilon = 0.05;
  std::string out_dir = "out";
  unsigned long long seed = 1;

  Grid grid() const { return make_grid(xi_min, xi_max, n); }
  EvolveOptions evolve_options() const { return {bounds, quadrature}; }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const char* first = v.data();
  const char* last = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || !std::isfinite(out))
    throw ConfigError("key '" + key + "': expected a finite number, got '" + v + "'");
  return out;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

inline DatumMode parse_mode(const std::string& v) {
  if (v == "pair") return DatumMode::pair;
  if (v == "symmetric") return DatumMode::symmetric;
  if (v == "mirrored") return DatumMode::mirrored;
  throw ConfigError("unknown datum mode '" + v + "'");
}

// Collects `<prefix>family` and `<prefix><param>` keys into a profile spec.
inline std::optional<ProfileSpec> take_profile(std::map<std::string, std::string>& kv, const std::string& prefix) {
  std::optional<ProfileSpec> spec;
  for (auto it = kv.begin(); it != kv.end();) {
    if (it->first.rfind(prefix, 0) != 0 || it->first.find('.', prefix.size()) != std::string::npos) {
      ++it;
      continue;
    }
    if (!spec) spec.emplace();
    const std::string name = it->first.substr(prefix.size());
    if (name == "family") spec->family = parse_family(it->second);
    else spec->params[name] = parse_real(it->first, it->second);
    it = kv.erase(it);
  }
  return spec;
}

inline std::optional<DatumSpec> take_datum(std::map<std::string, std::string>& kv, const std::string& prefix) {
  std::optional<DatumSpec> d;
  if (auto it = kv.find(prefix + "mode"); it != kv.end()) {
    d.emplace();
    d->mode = parse_mode(it->second);
    kv.erase(it);
  }
  auto u = take_profile(kv, prefix + "u.");
  auto v = take_profile(kv, prefix + "v.");
  if (!u && !v) return d;
  if (!d) d.emplace();
  if (!u) throw ConfigError(prefix + "u.family is required");
  d->u = *u;
  if (d->mode == DatumMode::pair) {
    if (!v) throw ConfigError(prefix + "v.* is required for mode pair");
    d->v = *v;
  } else if (v) {
    throw ConfigError(prefix + "v.* is only allowed with mode pair");
  }
  return d;
}

}  // namespace detail

/**
 * Parse the key = value scenario format. Lines starting with '#' are
 * comments. The first non-comment line must be `schema = novikov-scenario/1`.
 * Unknown keys are rejected.
 */
inline ScenarioConfig parse_config(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  bool schema_seen = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string val = detail::trim(t.substr(eq + 1));
    if (!schema_seen) {
      if (key != "schema" || val != kSchema)
        throw ConfigError(std::string("first entry must be 'schema = ") + kSchema + "'");
      schema_seen = true;
      continue;
    }
    if (key.empty() || val.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
    if (!kv.emplace(key, val).second) throw ConfigError("duplicate key '" + key + "'");
  }
  if (!schema_seen) throw ConfigError(std::string("missing schema line 'schema = ") + kSchema + "'");

  ScenarioConfig c;
  if (auto d = detail::take_datum(kv, "datum.")) c.datum = *d;
  else throw ConfigError("datum.u.family is required");
  c.datum1 = detail::take_datum(kv, "datum1.");
  c.perturbation = detail::take_profile(kv, "metric.perturbation.");

  auto take = [&](const std::string& key, auto&& apply) {
    if (auto it = kv.find(key); it != kv.end()) {
      apply(key, it->second);
      kv.erase(it);
    }
  };
  using S = const std::string&;
  take("grid.xi_min", [&](S k, S v) { c.xi_min = detail::parse_real(k, v); });
  take("grid.xi_max", [&](S k, S v) { c.xi_max = detail::parse_real(k, v); });
  take("grid.n", [&](S k, S v) { c.n = detail::parse_int(k, v); });
  take("time.T", [&](S k, S v) { c.T = detail::parse_real(k, v); });
  take("time.dt", [&](S k, S v) { c.dt = detail::parse_real(k, v); });
  take("time.record_every", [&](S k, S v) { c.record_every = static_cast<int>(detail::parse_int(k, v)); });
  take("omega.q_minus", [&](S k, S v) { c.bounds.q_minus = detail::parse_real(k, v); });
  take("omega.q_plus", [&](S k, S v) { c.bounds.q_plus = detail::parse_real(k, v); });
  take("omega.slack", [&](S k, S v) { c.bounds.slack = detail::parse_real(k, v); });
  take("omega.decay_tol", [&](S k, S v) { c.bounds.decay_tol = detail::parse_real(k, v); });
  take("kernel.quadrature", [&](S, S v) { c.quadrature = parse_quadrature(v); });
  take("analysis.singular", [&](S k, S v) { c.singular = detail::parse_bool(k, v); });
  take("analysis.fit_exponents", [&](S k, S v) { c.fit_exponents = detail::parse_bool(k, v); });
  take("analysis.cancellations", [&](S k, S v) { c.cancellations = detail::parse_bool(k, v); });
  take("analysis.tol_pi", [&](S k, S v) { c.singular_opt.tol_pi = detail::parse_real(k, v); });
  take("analysis.tol_zero", [&](S k, S v) { c.singular_opt.tol_zero = detail::parse_real(k, v); });
  take("analysis.window_nodes", [&](S k, S v) { c.singular_opt.window_nodes = static_cast<int>(detail::parse_int(k, v)); });
  take("analysis.fit_side_window", [&](S k, S v) { c.fit_side_window = detail::parse_real(k, v); });
  take("analysis.fit_min_gap", [&](S k, S v) { c.fit_min_gap = detail::parse_real(k, v); });
  take("analysis.vanish_rel", [&](S k, S v) { c.cancel_opt.vanish_rel = detail::parse_real(k, v); });
  take("metric.alpha", [&](S k, S v) { c.alpha = detail::parse_real(k, v); });
  take("metric.m_theta", [&](S k, S v) { c.m_theta = static_cast<int>(detail::parse_int(k, v)); });
  take("metric.search", [&](S, S v) { c.search = parse_search(v); });
  take("metric.eta_nodes", [&](S k, S v) { c.norm.eta_nodes = static_cast<std::size_t>(detail::parse_int(k, v)); });
  take("metric.iterations", [&](S k, S v) { c.norm.iterations = static_cast<int>(detail::parse_int(k, v)); });
  take("metric.step", [&](S k, S v) { c.norm.step = detail::parse_real(k, v); });
  take("metric.eta_bound", [&](S k, S v) { c.norm.eta_bound = detail::parse_real(k, v); });
  take("metric.epsilon", [&](S k, S v) { c.epsilon = detail::parse_real(k, v); });
  take("output.dir", [&](S, S v) { c.out_dir = v; });
  take("seed", [&](S k, S v) { c.seed = static_cast<unsigned long long>(detail::parse_int(k, v)); });
  if (!kv.empty()) throw ConfigError("unknown key '" + kv.begin()->first + "'");

  // Cross-field checks.
  (void)c.grid();
  if (!(c.T >= 0.0)) throw ConfigError("time.T must be >= 0");
  if (!(c.dt > 0.0)) throw ConfigError("time.dt must be > 0");
  const double steps = c.T / c.dt;
  if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps))
    throw ConfigError("time.dt must divide time.T");
  if (c.record_every < 1) throw ConfigError("time.record_every must be >= 1");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("metric.alpha must lie in (0,1)");
  if (c.m_theta < 3) throw ConfigError("metric.m_theta must be >= 3");
  if (c.norm.eta_nodes < 2) throw ConfigError("metric.eta_nodes must be >= 2");
  if (!(c.bounds.q_minus > 0.0 && c.bounds.q_minus < 1.0 && c.bounds.q_plus > 1.0))
    throw ConfigError("omega bounds must satisfy 0 < q_minus < 1 < q_plus");
  // Build the data once so family parameter errors surface here.
  (void)build_datum(c.datum);
  if (c.datum1) (void)build_datum(*c.datum1);
  if (c.perturbation) (void)builtin_profile(c.perturbation->family, c.perturbation->params);
  return c;
}

inline ScenarioConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in);
}

}  // namespace novikov
