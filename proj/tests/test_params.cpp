#include <cmath>

#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace levicool;
using levicool::test::reference;
using levicool::test::reference_system;

namespace {

// Reference values for the 50 nm silica sphere in the calibrated trap,
// evaluated independently in double precision.
constexpr double mass_ref = 1.1519173063162574e-18;
constexpr double waist_ref = 8.697055614077647e-07;
constexpr double ell_z_ref = 1.3846203126865724e-11;
constexpr double trap_heating_ref = 66919.97530888751;
constexpr double kappa_ref = 535.6300031147351;
constexpr double implied_power_ref = 0.13841402079919107;
constexpr double probe_loss_ref = 2.4109315854678086;
constexpr double probe_heating_ref = 384.7386558276788;
constexpr double kick_4k_ref = 0.7289945100908463;

void expect_rel(double got, double want, double tol) {
  EXPECT_NEAR(got / want, 1.0, tol) << "got " << got << ", want " << want;
}

} // namespace

TEST(Params, ParticleReference) {
  const auto s = reference_system();
  expect_rel(s.particle.mass, mass_ref, 1e-12);
  EXPECT_NEAR(s.particle.clausius_mossotti, 3.3 / 4.1, 1e-15);
}

TEST(Params, CalibratedTrapReproducesFrequencies) {
  const auto s = reference_system();
  expect_rel(units::hertz(s.modes.z.omega), 38e3, 1e-12);
  expect_rel(units::hertz(s.modes.y.omega), 138e3, 1e-12);
  expect_rel(s.trap.waist, waist_ref, 1e-9);
  expect_rel(s.modes.z.ell, ell_z_ref, 1e-9);
  expect_rel(s.trap.implied_power(), implied_power_ref, 1e-9);
}

TEST(Params, ScatteringAndMeasurementRates) {
  const auto s = reference_system();
  expect_rel(s.scattering.trap_heating, trap_heating_ref, 1e-8);
  expect_rel(s.scattering.probe_loss, probe_loss_ref, 1e-8);
  expect_rel(s.scattering.probe_heating, probe_heating_ref, 1e-8);
  expect_rel(s.kappa, kappa_ref, 1e-10);
}

TEST(Params, CalibrationMismatchIsWarned) {
  const auto s = reference_system();
  bool found = false;
  for (const auto &w : s.warnings)
    found |= w.find("calibrated trap implies") != std::string::npos;
  EXPECT_TRUE(found);
}

TEST(Params, KickValidity) {
  const auto cold = derive_system(reference(4.0));
  const auto k4 = kick_validity(reference(4.0).gas, cold.modes.z);
  expect_rel(k4.ratio, kick_4k_ref, 1e-9);
  EXPECT_TRUE(k4.valid);
  const auto k300 = kick_validity(reference(300.0).gas, cold.modes.z);
  EXPECT_NEAR(k300.ratio / k4.ratio, std::sqrt(300.0 / 4.0), 1e-12);
  EXPECT_FALSE(k300.valid);
}

TEST(Params, ClausiusMossotti) {
  EXPECT_DOUBLE_EQ(clausius_mossotti(1.0), 0.0);
  EXPECT_DOUBLE_EQ(clausius_mossotti(4.0), 1.5);
  for (double e : {1.5, 2.1, 10.0, 1e6}) {
    EXPECT_GT(clausius_mossotti(e), 0.0);
    EXPECT_LT(clausius_mossotti(e), 3.0);
  }
}

TEST(Params, KnudsenCorrectionLimits) {
  EXPECT_NEAR(knudsen_correction(0.0), 1.0, 1e-12);
  // Free-molecular limit: correction * Kn tends to 0.619.
  const double kn = 1e8;
  EXPECT_NEAR(knudsen_correction(kn) * kn, 0.619, 1e-6);
  for (double k = 1e-3; k < 1e3; k *= 3.0)
    EXPECT_LT(knudsen_correction(3.0 * k), knudsen_correction(k));
}

TEST(Params, GasDampingLinearInPressureWhenRarefied) {
  const auto s = reference_system();
  auto gas = reference().gas;
  gas.pressure = 1e-5 * units::mbar;
  const double g1 = gas_damping(gas, s.particle).gamma0;
  gas.pressure = 1e-4 * units::mbar;
  const double g2 = gas_damping(gas, s.particle).gamma0;
  EXPECT_NEAR(g2 / g1, 10.0, 1e-6);
}

TEST(Params, FeedbackGainFactor) {
  EXPECT_DOUBLE_EQ(feedback_gain_factor(0.0), 0.0);
  EXPECT_NEAR(feedback_gain_factor(2.0 / 9.0), 0.0, 1e-15);
  EXPECT_NEAR(feedback_gain_factor(1.0 / 9.0), 2.0 / 3.0, 1e-15);
  for (double d : {0.01, 0.03, 0.07})
    EXPECT_NEAR(feedback_gain_factor(1.0 / 9.0 - d), feedback_gain_factor(1.0 / 9.0 + d), 1e-14);
}

TEST(Params, FeedbackCoefficientIdentities) {
  for (double g : {0.0, 0.05, 1.0 / 9.0, 0.2, 0.3}) {
    const auto c = feedback_coefficients(g, 1e-7, 5e16, 2e-20, 1e-18, 1e4);
    const double gamma0 = 2e-20 / 1e-18;
    EXPECT_NEAR(c.K - c.J, gamma0, 1e-12 * gamma0);
    EXPECT_NEAR(c.L, 1e4 - c.J / 2.0 - gamma0 / 2.0, 1e-9);
    EXPECT_EQ(c.heating, g > 2.0 / 9.0);
  }
  EXPECT_THROW(feedback_coefficients(-0.1, 1e-7, 1.0, 1.0, 1.0, 1.0), ValidationError);
}

TEST(Params, ModulationRoundTrip) {
  const double m = trap_modulation(0.1, 500.0, 1e3, 2e5);
  EXPECT_NEAR(gain_for_modulation(m, 500.0, 1e3, 2e5), 0.1, 1e-15);
}

TEST(Params, OperatingPointThermalOccupation) {
  const auto s = reference_system();
  const auto gas = reference().gas;
  const auto op = operating_point(s, gas, optimal_gain_value);
  EXPECT_NEAR(op.n0, op.n0_gas + op.n0_optical, 1e-9 * op.n0);
  // Gas part is k_B T / hbar omega_z up to the small position-diffusion term.
  const double kt = units::k_boltzmann * 300.0 / (units::hbar * s.modes.z.omega);
  EXPECT_NEAR(op.n0_gas / kt, 1.0, 1e-3);
  EXPECT_GT(op.coeffs.J, 0.0);
}

TEST(Params, RejectsNonPhysicalInput) {
  auto e = reference();
  e.particle.radius = -1.0;
  EXPECT_THROW(derive_system(e), ValidationError);
  e = reference();
  e.probe.power = 0.0;
  EXPECT_THROW(derive_system(e), ValidationError);
}
