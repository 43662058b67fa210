#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "novikov/initial_data.hpp"
#include "novikov/metric.hpp"

using namespace novikov;

namespace {

const Grid& window() {
  static const Grid g = make_grid(-10.0, 10.0, 256);
  return g;
}

EulerDatum bumps(double a, double b) {
  return make_datum(builtin_profile(DatumFamily::gaussian_bump, {{"a", a}, {"c", 0.5}}),
                    builtin_profile(DatumFamily::sech_bump, {{"a", b}, {"c", -0.5}, {"w", 0.5}}));
}

TransformedState state(double a, double b) { return direct_transform(bumps(a, b), window()).state; }

TangentVector tangent(const TransformedState& s, double scale) {
  TangentVector t = zero_tangent(s.grid);
  for (std::size_t k = 0; k < s.grid.n; ++k) {
    const double x = s.grid.node(k);
    const double e = std::exp(-x * x);
    t.R[k] = scale * e;
    t.S[k] = -0.5 * scale * x * e;
    t.A[k] = 0.3 * scale * std::sin(x) * e;
    t.B[k] = 0.2 * scale * e;
    t.Q[k] = 0.1 * scale * x * e;
  }
  return t;
}

}  // namespace

TEST(ZShift, ZeroTangentGivesZero) {
  const TransformedState s = state(0.5, 0.4);
  for (double v : z_shift(s, zero_tangent(s.grid))) EXPECT_EQ(v, 0.0);
}

TEST(ZShift, UnitQOnZeroStateIsArcLength) {
  const TransformedState s = zero_state(window());
  TangentVector r = zero_tangent(s.grid);
  r.Q.assign(s.grid.n, 1.0);
  const Samples z = z_shift(s, r);
  for (std::size_t k = 0; k < s.grid.n; ++k) EXPECT_NEAR(z[k], s.grid.node(k) - s.grid.xi_min, 1e-12);
}

TEST(ZShift, Linear) {
  const TransformedState s = state(0.5, 0.4);
  const TangentVector r1 = tangent(s, 1.0), r2 = tangent(s, -0.3);
  const Samples a = z_shift(s, r1), b = z_shift(s, r2), c = z_shift(s, combine(2.0, r1, 3.0, r2));
  for (std::size_t k = 0; k < s.grid.n; ++k) EXPECT_NEAR(c[k], 2.0 * a[k] + 3.0 * b[k], 1e-13);
}

TEST(PhiValues, ZeroTangentZeroShift) {
  const TransformedState s = state(0.5, 0.4);
  for (const Samples& phi : phi_values(s, zero_tangent(s.grid), ShiftField::zero()))
    for (double v : phi) EXPECT_EQ(v, 0.0);
}

TEST(PhiValues, ConstantShiftMovesDensityByItsSlope) {
  const TransformedState s = state(0.5, 0.4);
  ShiftField eta{Samples(17, 0.7)};
  const auto phi = phi_values(s, zero_tangent(s.grid), eta);
  const Samples qx = fd_derivative(s.q, s.grid, 1);
  for (std::size_t k = 0; k < s.grid.n; ++k) EXPECT_NEAR(phi[5][k], 0.7 * qx[k], 1e-12);
}

TEST(PhiValues, ZeroShiftSixthIsTangentQ) {
  const TransformedState s = state(0.5, 0.4);
  const TangentVector r = tangent(s, 1.0);
  const auto phi = phi_values(s, r, ShiftField::zero());
  EXPECT_EQ(phi[5], r.Q);
}

TEST(TangentNorm, ZeroTangentIsZero) {
  const TransformedState s = state(0.5, 0.4);
  const Samples y = characteristic_from_state(s);
  EXPECT_EQ(tangent_norm(s, y, zero_tangent(s.grid), 0.5, EtaSearch::eta_zero), 0.0);
  EXPECT_EQ(tangent_norm(s, y, zero_tangent(s.grid), 0.5, EtaSearch::coarse_descent), 0.0);
}

TEST(TangentNorm, AbsolutelyHomogeneous) {
  const TransformedState s = state(0.5, 0.4);
  const Samples y = characteristic_from_state(s);
  const TangentVector r = tangent(s, 1.0);
  const double base = tangent_norm(s, y, r, 0.5, EtaSearch::eta_zero);
  for (double lam : {2.0, -0.5, 7.0}) {
    TangentVector scaled = combine(lam, r, 0.0, r);
    EXPECT_NEAR(tangent_norm(s, y, scaled, 0.5, EtaSearch::eta_zero), std::abs(lam) * base, 1e-12 * base);
  }
}

TEST(TangentNorm, Subadditive) {
  const TransformedState s = state(0.5, 0.4);
  const Samples y = characteristic_from_state(s);
  const TangentVector r1 = tangent(s, 1.0);
  TangentVector r2 = tangent(s, 0.4);
  std::reverse(r2.A.begin(), r2.A.end());
  std::reverse(r2.Q.begin(), r2.Q.end());
  for (auto search : {EtaSearch::eta_zero, EtaSearch::coarse_descent}) {
    const double n12 = tangent_norm(s, y, combine(1.0, r1, 1.0, r2), 0.5, search);
    EXPECT_LE(n12, tangent_norm(s, y, r1, 0.5, EtaSearch::eta_zero) + tangent_norm(s, y, r2, 0.5, EtaSearch::eta_zero) + 1e-12);
  }
}

TEST(TangentNorm, DescentNeverWorseThanZeroShift) {
  const TransformedState s = state(0.5, 0.4);
  const Samples y = characteristic_from_state(s);
  const NormResult r = tangent_norm_detailed(s, y, tangent(s, 1.0), 0.5, EtaSearch::coarse_descent);
  EXPECT_LE(r.value, r.eta_zero_value);
  EXPECT_GT(r.iterations, 0);
  for (std::size_t i = 1; i < r.best_log.size(); ++i) EXPECT_LE(r.best_log[i], r.best_log[i - 1]);
}

TEST(TangentNorm, AlphaOutsideUnitIntervalIsContractError) {
  const TransformedState s = state(0.5, 0.4);
  const Samples y = characteristic_from_state(s);
  EXPECT_THROW(tangent_norm(s, y, tangent(s, 1.0), 1.0, EtaSearch::eta_zero), ContractError);
  EXPECT_THROW(tangent_norm(s, y, tangent(s, 1.0), 0.0, EtaSearch::eta_zero), ContractError);
}

TEST(StraightLinePath, EqualEndpointsGiveConstantPath) {
  const TransformedState s = state(0.5, 0.4);
  const PathOfStates p = straight_line_path(s, s, 9);
  ASSERT_EQ(p.states.size(), 9u);
  for (const auto& m : p.states) {
    EXPECT_EQ(m.U, s.U);
    EXPECT_EQ(m.W, s.W);
    EXPECT_EQ(m.q, s.q);
  }
}

TEST(StraightLinePath, EndpointsAndMidpoint) {
  const TransformedState a = state(0.5, 0.4), b = state(0.3, 0.6);
  const PathOfStates p = straight_line_path(a, b, 5);
  EXPECT_EQ(p.states.front().V, a.V);
  EXPECT_EQ(p.states.back().V, b.V);
  EXPECT_EQ(p.theta, (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}));
  for (std::size_t k = 0; k < a.grid.n; ++k) {
    EXPECT_NEAR(p.states[2].U[k], 0.5 * (a.U[k] + b.U[k]), 1e-15);
    EXPECT_NEAR(p.states[2].q[k], 0.5 * (a.q[k] + b.q[k]), 1e-15);
  }
  EXPECT_THROW(straight_line_path(a, b, 1), ContractError);
}

TEST(StraightLinePath, InadmissibleNodeIsPathError) {
  const TransformedState a = state(0.5, 0.4);
  TransformedState b = a;
  b.q[40] = 30.0;
  EXPECT_THROW(straight_line_path(a, b, 5), PathError);
}

TEST(PathLength, ConstantPathIsZero) {
  const TransformedState s = state(0.5, 0.4);
  EXPECT_EQ(path_length(straight_line_path(s, s, 9), 0.5, EtaSearch::eta_zero), 0.0);
}

TEST(PathLength, ReversalAndRefinement) {
  const TransformedState a = state(0.5, 0.4), b = state(0.45, 0.42);
  const double fwd = path_length(straight_line_path(a, b, 9), 0.5, EtaSearch::eta_zero);
  const double bwd = path_length(straight_line_path(b, a, 9), 0.5, EtaSearch::eta_zero);
  EXPECT_GT(fwd, 0.0);
  EXPECT_NEAR(fwd, bwd, 1e-10 * fwd);
  const double fine = path_length(straight_line_path(a, b, 17), 0.5, EtaSearch::eta_zero);
  EXPECT_NEAR(fine, fwd, 1e-2 * fine);
}

TEST(DistanceUpper, ZeroSymmetricAndScaling) {
  const TransformedState a = state(0.5, 0.4), b = state(0.45, 0.42);
  EXPECT_EQ(distance_upper(a, a, 0.5, 9, EtaSearch::eta_zero), 0.0);
  const double d = distance_upper(a, b, 0.5, 9, EtaSearch::eta_zero);
  EXPECT_NEAR(distance_upper(b, a, 0.5, 9, EtaSearch::eta_zero), d, 1e-10 * d);
  // Partial segment of the same line.
  const double s = 0.4;
  const TransformedState mid = straight_line_path(a, b, 6).states[2];
  EXPECT_NEAR(distance_upper(a, mid, 0.5, 9, EtaSearch::eta_zero), s * d, 0.05 * s * d);
}

TEST(Lipschitz, IdenticalDataFlaggedZero) {
  const Grid g = make_grid(-12.0, 12.0, 128);
  LipschitzOptions opt;
  opt.record_every = 10;
  const LipschitzTable t = lipschitz_experiment(bumps(0.4, 0.3), bumps(0.4, 0.3), g, 0.2, 0.01, opt);
  EXPECT_TRUE(t.complete);
  EXPECT_TRUE(t.zero_initial_distance);
  ASSERT_EQ(t.rows.size(), 5u);
  for (const auto& row : t.rows) {
    EXPECT_EQ(row.d_upper, 0.0);
    EXPECT_EQ(row.ratio, 0.0);
  }
}

TEST(Lipschitz, FiniteRatiosInAscendingTime) {
  const Grid g = make_grid(-12.0, 12.0, 128);
  LipschitzOptions opt;
  opt.record_every = 10;
  const LipschitzTable t = lipschitz_experiment(bumps(0.4, 0.3), bumps(0.42, 0.3), g, 0.2, 0.01, opt);
  EXPECT_TRUE(t.complete) << t.note;
  EXPECT_FALSE(t.zero_initial_distance);
  ASSERT_EQ(t.rows.size(), 5u);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    EXPECT_TRUE(std::isfinite(t.rows[i].ratio));
    EXPECT_GT(t.rows[i].ratio, 0.0);
    if (i) {
      EXPECT_GT(t.rows[i].t, t.rows[i - 1].t);
    }
    if (t.rows[i].t == 0.0) {
      EXPECT_EQ(t.rows[i].ratio, 1.0);
    }
  }
}
