#include <cmath>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "levicool/stochastic.hpp"

using namespace levicool;

namespace {

SdeModel model(double pressure_mbar, double gain) {
  const auto s = test::reference_system();
  auto gas = test::reference().gas;
  gas.pressure = pressure_mbar * units::mbar;
  return sde_model(s, gas, gain);
}

SimulationSettings settings(double duration, std::uint64_t seed) {
  SimulationSettings c;
  c.duration = duration;
  c.seed = seed;
  c.decimate = 4;
  return c;
}

} // namespace

TEST(Stochastic, SampleGrid) {
  const auto m = model(1.0, 0.0);
  const auto tr = simulate(m, settings(1e-3, 1));
  EXPECT_EQ(tr.steps, static_cast<std::size_t>(std::llround(1e-3 / default_dt(m.omega))));
  EXPECT_EQ(tr.t.size(), tr.steps / 4 + 1);
  EXPECT_EQ(tr.Q.size(), tr.t.size());
  EXPECT_NEAR(tr.t[1] - tr.t[0], 4.0 * tr.dt, 1e-18);
  for (double n : tr.n_est)
    ASSERT_GE(n, 0.0);
}

TEST(Stochastic, SameSeedIsBitIdentical) {
  const auto m = model(1.0, 0.0);
  const auto a = simulate_indexed(m, settings(5e-4, 42), 3);
  const auto b = simulate_indexed(m, settings(5e-4, 42), 3);
  EXPECT_EQ(a.Q, b.Q);
  EXPECT_EQ(a.P, b.P);
  EXPECT_EQ(a.n_est, b.n_est);
  const auto c = simulate_indexed(m, settings(5e-4, 43), 3);
  const auto d = simulate_indexed(m, settings(5e-4, 42), 4);
  EXPECT_NE(a.Q, c.Q);
  EXPECT_NE(a.Q, d.Q);
}

TEST(Stochastic, EnsembleIndependentOfThreads) {
  const auto m = model(1.0, 0.0);
  auto cfg = settings(2e-4, 9);
  const auto a = ensemble(m, cfg, 6, 1);
  const auto b = ensemble(m, cfg, 6, 4);
  EXPECT_EQ(a.mean_n, b.mean_n);
  EXPECT_EQ(a.var_Q, b.var_Q);
  EXPECT_EQ(a.traj_mean_q2, b.traj_mean_q2);
}

TEST(Stochastic, NoiselessOscillatorKeepsEnergy) {
  auto m = model(1e-7, 0.0);
  SimulationSettings c;
  c.duration = 20.0 * units::two_pi / m.omega;
  c.noise = false;
  c.thermal_init = false;
  c.q0 = 100.0;
  const auto tr = simulate(m, c);
  const double e0 = tr.Q.front() * tr.Q.front() + tr.P.front() * tr.P.front();
  const double e1 = tr.Q.back() * tr.Q.back() + tr.P.back() * tr.P.back();
  // Gas damping over 20 periods at 1e-7 mbar is far below the step error.
  EXPECT_NEAR(e1 / e0, 1.0, 0.05);
}

TEST(Stochastic, CoarseStepRejected) {
  const auto m = model(1.0, 0.0);
  auto c = settings(1e-3, 1);
  c.dt = 1.0 / (20.0 * units::hertz(m.omega));
  EXPECT_THROW(simulate(m, c), ValidationError);
}

TEST(Stochastic, StiffFeedbackRejected) {
  // Optimal gain from a room-temperature start gives a feedback damping far
  // beyond 1/dt.
  const auto m = model(1e-7, 1.0 / 9.0);
  EXPECT_THROW(simulate(m, settings(1e-4, 1)), ValidationError);
}

TEST(Stochastic, SteadyStateRootSolvesBalance) {
  const auto m = model(1e-3, 1e-4);
  const double x = sde_steady_state(m) + 0.5;
  const double dp = m.S_T / (2.0 * m.mass * units::hbar * m.omega);
  const double lhs = m.kappa * (12.0 * m.gain - 27.0 * m.gain * m.gain) * x * x + m.gamma0 * x;
  EXPECT_NEAR(lhs / (dp + 27.0 * m.kappa * m.gain * m.gain / 4.0), 1.0, 1e-12);
    // Without feedback the balance is Gamma0 (N + 1/2) = D'.
  const auto free = model(1.0, 0.0);
  EXPECT_NEAR(sde_steady_state(free) + 0.5, free.n0, 1e-9 * free.n0);
}

TEST(Stochastic, HomodyneCurrentScalesToPosition) {
  const auto s = test::reference_system();
  const auto m = model(1.0, 0.0);
  const auto tr = simulate(m, settings(2e-4, 5));
  const auto a = homodyne_current(tr, s.chi, s.flux, 5);
  EXPECT_EQ(a, homodyne_current(tr, s.chi, s.flux, 5));
  const auto q = measured_position(a, m.ell, m.kappa);
  ASSERT_EQ(q.size(), tr.Q.size());
  EXPECT_NEAR(q[0] * m.kappa / m.ell, a[0], 1e-12 * std::abs(a[0]));
}
