#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "levicool/spectra.hpp"

using namespace levicool;

namespace {

std::vector<double> white(std::size_t n, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<double> v(n);
  for (auto &x : v)
    x = g(rng);
  return v;
}

OscillatorParams oscillator() {
  OscillatorParams p;
  p.mass = 1.15e-18;
  p.omega = units::two_pi * 38e3;
  p.gamma = units::two_pi * 800.0;
  p.ell = 1.38e-11;
  p.kappa = 535.0;
  p.S_T = 2.0 * p.mass * units::hbar * p.omega * p.gamma * 50.0;
  return p;
}

Spectrum model_spectrum(const OscillatorParams &p, double floor_scale) {
  Spectrum s;
  for (double f = 25.0; f < 80e3; f += 25.0) {
    s.freq_hz.push_back(f);
    const double w = units::two_pi * f;
    s.psd.push_back(2.0 * (susceptibility_sq(w, p.mass, p.omega, p.gamma) * p.S_T + floor_scale));
  }
  return s;
}

} // namespace

TEST(Spectra, WhiteNoiseLevelAndParseval) {
  const double dt = 1e-6, sigma = 2.0;
  const auto x = white(1 << 16, sigma, 1);
  for (Window w : {Window::hann, Window::rectangular}) {
    const auto s = estimate_psd(x, dt, w, 32);
    double mean = 0.0;
    for (std::size_t k = 1; k + 1 < s.psd.size(); ++k)
      mean += s.psd[k];
    mean /= static_cast<double>(s.psd.size() - 2);
    EXPECT_NEAR(mean / (2.0 * sigma * sigma * dt), 1.0, 0.02) << window_name(w);
    EXPECT_NEAR(spectrum_power(s) / (sigma * sigma), 1.0, 0.03) << window_name(w);
  }
}

TEST(Spectra, SinusoidPeakAtItsFrequency) {
  const double dt = 1e-6, f0 = 38e3;
  std::vector<double> x(1 << 15);
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = std::sin(units::two_pi * f0 * dt * static_cast<double>(i));
  const auto s = estimate_psd(x, dt, Window::hann, 8);
  const auto it = std::max_element(s.psd.begin(), s.psd.end());
  const double df = s.freq_hz[1] - s.freq_hz[0];
  EXPECT_NEAR(s.freq_hz[static_cast<std::size_t>(it - s.psd.begin())], f0, df);
  EXPECT_NEAR(spectrum_power(s), 0.5, 0.02);
}

TEST(Spectra, RejectsShortSeries) {
  EXPECT_THROW(estimate_psd(std::vector<double>(10, 1.0), 1e-6, Window::hann, 16), ValidationError);
  EXPECT_THROW(estimate_psd(white(1000, 1.0, 2), 0.0, Window::hann, 4), ValidationError);
}

TEST(Spectra, FitRecoversExactLorentzian) {
  const auto p = oscillator();
  const double peak = susceptibility_sq(p.omega, p.mass, p.omega, p.gamma) * p.S_T;
  const auto fit = fit_lorentzian(model_spectrum(p, 1e-4 * peak), {}, 30e3, 46e3, p.mass);
  EXPECT_NEAR(fit.omega / p.omega, 1.0, 1e-9);
  EXPECT_NEAR(fit.gamma / p.gamma, 1.0, 1e-7);
  EXPECT_NEAR(fit.amplitude / (p.S_T / (p.mass * p.mass)), 1.0, 1e-7);
  EXPECT_NEAR(fit.floor / (1e-4 * peak), 1.0, 1e-5);
  EXPECT_DOUBLE_EQ(fit.log_bias, 0.0);
}

TEST(Spectra, FitFailsWithoutPeak) {
  Spectrum s;
  for (int k = 1; k <= 200; ++k) {
    s.freq_hz.push_back(10.0 * k);
    s.psd.push_back(1.0);
  }
  EXPECT_THROW(fit_lorentzian(s), NumericalError);
}

TEST(Spectra, ShotNoiseMinimumAtOptimalFrequency) {
  const auto p = oscillator();
  const auto o = optimal_frequency(p.omega, p.gamma);
  ASSERT_FALSE(o.overdamped);
  const double at = force_noise_psd(o.omega, p).S_S;
  for (double r : {0.99, 0.999, 1.001, 1.01})
    EXPECT_GT(force_noise_psd(o.omega * r, p).S_S, at);
  EXPECT_NEAR(force_noise_psd(0.0, p).S_S, shot_noise_dc(p), 1e-12 * shot_noise_dc(p));
  EXPECT_TRUE(optimal_frequency(1.0, 2.0).overdamped);
}

TEST(Spectra, ForceTotalIsSum) {
  auto p = oscillator();
  p.S_F = 3.0 * p.S_T;
  const auto f = force_noise_psd(0.9 * p.omega, p);
  EXPECT_DOUBLE_EQ(f.total, f.S_T + f.S_F + f.S_S);
}

TEST(Spectra, PositionModelFloor) {
  const auto p = oscillator();
  const double far = position_psd_model(1e3 * p.omega, p);
  EXPECT_NEAR(far / (p.ell * p.ell / p.kappa), 1.0, 1e-6);
}
