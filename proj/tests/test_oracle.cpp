#include <cmath>

#include <gtest/gtest.h>

#include "levicool/oracle.hpp"

using namespace levicool;

namespace {

Eigen::MatrixXcd dense(const SpMat &m) { return Eigen::MatrixXcd(m); }

} // namespace

TEST(Oracle, CanonicalCommutatorBelowTruncation) {
  const int d = 12;
  const auto o = fock_operators(d);
  const Eigen::MatrixXcd c = dense(o.Q) * dense(o.P) - dense(o.P) * dense(o.Q);
  for (int n = 0; n < d - 1; ++n)
    EXPECT_NEAR(std::abs(c(n, n) - std::complex<double>(0.0, 2.0)), 0.0, 1e-12);
  EXPECT_NEAR((dense(o.N) - dense(o.b).adjoint() * dense(o.b)).norm(), 0.0, 1e-12);
}

TEST(Oracle, ThermalStateMoments) {
  const auto s = thermal_state(200, 3.0, true);
  EXPECT_NEAR(s.trace(), 1.0, 1e-14);
  EXPECT_NEAR(s.mean_n(), 3.0, 1e-9);
  EXPECT_NEAR(s.mean_n2(), 2.0 * 9.0 + 3.0, 1e-7);
  EXPECT_NEAR(closure_residual(s), 0.0, 1e-8);
}

TEST(Oracle, GeneratorPreservesTraceAndHermiticity) {
  for (double g : {0.0, 1.0 / 9.0, 0.3}) {
    const auto spec = LindbladSpec::brownian(1.0, 0.05, 2.0, 0.05, g, 1.0);
    const Generator gen = build_generator(spec, 24);
    Eigen::MatrixXcd rho = thermal_state(24, 1.0, true).rho;
    rho(2, 5) = rho(5, 2) = std::complex<double>(0.01, 0.0);
    const Eigen::MatrixXcd out = gen(rho);
    EXPECT_NEAR(std::abs(out.trace()), 0.0, 1e-12) << "G=" << g;
    EXPECT_LT((out - out.adjoint()).cwiseAbs().maxCoeff(), 1e-12) << "G=" << g;
  }
}

TEST(Oracle, BrownianSpecIsLindblad) {
  const auto spec = LindbladSpec::brownian(1.0, 0.05, 2.0);
  EXPECT_TRUE(lindblad_form(spec, fock_operators(16)).has_value());
  EXPECT_TRUE(build_generator(spec, 16).is_lindblad());
}

TEST(Oracle, RateMatchesMomentEquationAtGainZero) {
  const int d = 64;
  const auto rho0 = thermal_state(d, 5.0, true);
  const auto spec = LindbladSpec::brownian(1.0, 0.05, 5.0, 0.05);
  const Generator gen = build_generator(spec, d);
  const auto c = coefficients_of(spec);
  const double moment = -c.J * rho0.mean_n2() - c.K * rho0.mean_n() + c.L;
  // The residual is the truncated thermal tail at d = 64.
  EXPECT_NEAR(gen.phonon_rate(rho0) / moment, 1.0, 2e-3);
  EXPECT_NEAR(phonon_rate_fd(rho0, gen, 1e-4) / gen.phonon_rate(rho0), 1.0, 1e-6);
}

TEST(Oracle, FeedbackSpecHasNoLindbladForm) {
  const auto spec = LindbladSpec::brownian(1.0, 0.1, 1.0, 0.0, 1.0 / 9.0, 0.5);
  EXPECT_FALSE(build_generator(spec, 16).is_lindblad());
}

TEST(Oracle, EvolutionStaysPhysical) {
  const auto spec = LindbladSpec::brownian(1.0, 0.1, 0.5);
  const Generator gen = build_generator(spec, 32);
  const auto run = evolve(thermal_state(32, 2.0, true), gen, 5.0, 0.0, 5);
  ASSERT_EQ(run.moments.size(), 6u);
  for (const auto &m : run.moments) {
    EXPECT_LT(m.trace_error, 1e-10);
    EXPECT_LT(m.hermiticity, 1e-12);
    EXPECT_GT(m.min_eigenvalue, -1e-8);
  }
  EXPECT_LT(run.moments.back().n, run.moments.front().n);
}

TEST(Oracle, RejectsBadInitialState) {
  const auto spec = LindbladSpec::brownian(1.0, 0.05, 1.0);
  const Generator gen = build_generator(spec, 16);
  auto s = thermal_state(16, 1.0, true);
  s.rho *= 2.0;
  EXPECT_THROW(evolve(s, gen, 1.0), ValidationError);
  EXPECT_THROW(evolve(thermal_state(8, 1.0, true), gen, 1.0), ValidationError);
}

TEST(Oracle, QsdTrajectoryIsNormalizedAndReproducible) {
  const auto spec = LindbladSpec::brownian(1.0, 0.05, 1.0);
  const auto ops = qsd_operators(spec, 16);
  Eigen::VectorXcd psi0 = Eigen::VectorXcd::Zero(16);
  psi0[2] = 1.0;
  std::mt19937_64 r1(7), r2(7);
  const auto a = qsd_trajectory(psi0, ops, 2.0, 1e-3, 4, r1);
  const auto b = qsd_trajectory(psi0, ops, 2.0, 1e-3, 4, r2);
  EXPECT_EQ(a.n, b.n);
  EXPECT_NEAR(a.psi.norm(), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(a.n.front(), 2.0);
}
