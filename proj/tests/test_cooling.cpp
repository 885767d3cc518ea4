#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "levicool/cooling.hpp"

using namespace levicool;

namespace {

// Randomized (J, K, L, N0) on the log scales of real operating points.
struct Draw {
  double J, K, L, n0;
};

std::vector<Draw> draws(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Draw> out;
  for (int i = 0; i < n; ++i) {
    const double J = std::pow(10.0, -6.0 + 6.0 * u(rng));
    const double K = J + std::pow(10.0, -6.0 + 6.0 * u(rng));
    const double L = std::pow(10.0, -3.0 + 6.0 * u(rng));
    const double n0 = std::pow(10.0, 6.0 * u(rng));
    out.push_back({J, K, L, n0});
  }
  return out;
}

} // namespace

TEST(Cooling, SteadyStateIsStableRoot) {
  for (const auto &d : draws(11, 200)) {
    const double n = steady_state_exact(d.J, d.K, d.L);
    EXPECT_GT(n, 0.0);
    const double scale = 2.0 * d.J * n * n + (d.J + d.K) * n + d.L;
    EXPECT_LT(std::abs(phonon_rate(n, d.J, d.K, d.L)) / scale, 1e-12);
    // Stability: the rate decreases through the root.
    EXPECT_LT(-4.0 * d.J * n - (d.J + d.K), 0.0);
  }
}

TEST(Cooling, SteadyStateLimits) {
  EXPECT_NEAR(steady_state_exact(0.0, 2.0, 10.0), 5.0, 1e-15);
  // Large N: N_ss -> sqrt(L / 2J).
  const auto s = steady_state(1e-8, 1e-8, 1e6, 1e6);
  EXPECT_NEAR(s.exact, std::sqrt(1e6 / 2e-8), 1e-3 * s.exact);
  EXPECT_LT(s.gap, 1e-3);
  EXPECT_THROW(steady_state_exact(-1.0, 0.1, 100.0), NumericalError);
}

TEST(Cooling, ClosedFormMatchesIntegration) {
  for (const auto &d : draws(3, 40)) {
    const double tau = 2.0 / std::sqrt(discriminant(d.J, d.K, d.L));
    const auto grid = linspace(0.0, 10.0 * tau, 201);
    const auto a = evolve_closed(d.n0, d.J, d.K, d.L, grid);
    const auto b = evolve_ode(d.n0, d.J, d.K, d.L, grid, 1e-11);
    for (std::size_t i = 0; i < grid.size(); ++i)
      ASSERT_NEAR(b.n[i] / a.n[i], 1.0, 1e-8) << "i=" << i;
  }
}

TEST(Cooling, CurveStartsAtN0AndRelaxesMonotonically) {
  for (const auto &d : draws(5, 100)) {
    const auto c = evolve_closed(d.n0, d.J, d.K, d.L, linspace(0.0, 20.0 / (d.J + d.K), 300));
    EXPECT_DOUBLE_EQ(c.n.front(), d.n0);
    const double sign = d.n0 > c.n_ss ? -1.0 : 1.0;
    for (std::size_t i = 1; i < c.n.size(); ++i)
      ASSERT_GE(sign * (c.n[i] - c.n[i - 1]), -1e-9 * c.n_ss);
    for (double n : c.n)
      ASSERT_GT(n, 0.0);
  }
}

TEST(Cooling, BranchSelection) {
  const double J = 1e-3, K = 1e-2, L = 1e3;
  const double nss = steady_state_exact(J, K, L);
  const auto grid = linspace(0.0, 1.0, 3);
  EXPECT_EQ(evolve_closed(10.0 * nss, J, K, L, grid).branch, CurveBranch::coth);
  EXPECT_EQ(evolve_closed(0.1 * nss, J, K, L, grid).branch, CurveBranch::tanh);
  EXPECT_EQ(evolve_closed(nss, J, K, L, grid).branch, CurveBranch::fixed);
  EXPECT_EQ(evolve_closed(5.0, 0.0, 1.0, 2.0, grid).branch, CurveBranch::linear);
}

TEST(Cooling, LinearBranchIsExponential) {
  const auto c = evolve_closed(100.0, 0.0, 0.5, 1.0, {0.0, 1.0, 2.0});
  EXPECT_NEAR(c.n[2], 2.0 + 98.0 * std::exp(-1.0), 1e-12);
}

TEST(Cooling, OptimalGainMaximizesJ) {
  const auto o = optimal_gain(1e-7, 5e16);
  EXPECT_DOUBLE_EQ(o.gain, 1.0 / 9.0);
  for (double g = 0.0; g <= 0.25; g += 0.005)
    EXPECT_LE(feedback_gain_factor(g) * 1e-14 * 5e16, o.j_max * (1.0 + 1e-15));
}

TEST(Cooling, SweepRespectsModulationCap) {
  const auto s = test::reference_system();
  const auto gas = test::reference().gas;
  const auto grid = logspace(1e-9, 10.0, 25);
  for (double cap : {0.01, 0.1}) {
    const auto r = pressure_sweep(s, gas, grid, {GainPolicyKind::optimal_capped, cap});
    for (const auto &p : r.points) {
      ASSERT_TRUE(p.error.empty()) << p.error;
      EXPECT_GT(p.n_ss, 0.0);
      EXPECT_LE(p.modulation, cap * (1.0 + 1e-6));
      EXPECT_LE(p.gain, optimal_gain_value * (1.0 + 1e-12));
    }
  }
}

TEST(Cooling, FixedGainSweepIsMonotoneInPressure) {
  const auto s = test::reference_system();
  const auto r = pressure_sweep(s, test::reference().gas, logspace(1e-8, 1.0, 30),
                                {GainPolicyKind::fixed_gain, 1e-3});
  for (std::size_t i = 1; i < r.points.size(); ++i)
    EXPECT_GT(r.points[i].n_ss, r.points[i - 1].n_ss);
  EXPECT_EQ(r.points.front().regime, Regime::recoil_dominated);
  EXPECT_EQ(r.points.back().regime, Regime::gas_dominated);
}

TEST(Cooling, SweepIndependentOfThreads) {
  const auto s = test::reference_system();
  const auto grid = logspace(1e-9, 10.0, 17);
  const GainPolicy pol{GainPolicyKind::optimal_capped, 0.1};
  const auto a = pressure_sweep(s, test::reference().gas, grid, pol, 1);
  const auto b = pressure_sweep(s, test::reference().gas, grid, pol, 4);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_EQ(a.points[i].n_ss, b.points[i].n_ss);
    EXPECT_EQ(a.points[i].gain, b.points[i].gain);
  }
}

TEST(Cooling, SweepRejectsBadGrid) {
  const auto s = test::reference_system();
  const auto gas = test::reference().gas;
  const GainPolicy pol{GainPolicyKind::fixed_gain, 0.1};
  EXPECT_THROW(pressure_sweep(s, gas, {1.0, 0.5}, pol), ValidationError);
  EXPECT_THROW(pressure_sweep(s, gas, {0.0, 1.0}, pol), ValidationError);
  EXPECT_THROW(pressure_sweep(s, gas, {}, pol), ValidationError);
}
