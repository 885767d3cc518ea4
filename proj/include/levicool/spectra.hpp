#pragma once

// Power spectra: Welch estimation, the analytic position and force noise
// models, Lorentzian peak fitting and the standard-quantum-limit search.
// External spectra are one-sided in Hz; models take angular frequency.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>
#include <unsupported/Eigen/FFT>

#include "levicool/cooling.hpp"
#include "levicool/errors.hpp"
#include "levicool/params.hpp"

namespace levicool {

enum class Window { hann, rectangular };

inline const char *window_name(Window w) { return w == Window::hann ? "hann" : "rectangular"; }

struct Spectrum {
  std::vector<double> freq_hz;
  std::vector<double> psd; // one-sided, units^2/Hz
  Window window = Window::hann;
  std::size_t segments = 0;
  std::size_t segment_length = 0;
  double overlap = 0.5;
};

inline std::vector<double> window_coefficients(Window w, std::size_t n) {
  std::vector<double> c(n, 1.0);
  if (w == Window::hann)
    for (std::size_t i = 0; i < n; ++i)
      c[i] = 0.5 - 0.5 * std::cos(units::two_pi * static_cast<double>(i) / static_cast<double>(n));
  return c;
}

/// Welch averaged periodogram with 50% overlap. The series mean is removed
/// once; segment length is chosen so that `n_segments` segments fit.
inline Spectrum estimate_psd(const std::vector<double> &series, double dt, Window window,
                             std::size_t n_segments) {
  require(dt > 0.0, "dt must be > 0");
  require(n_segments >= 1, "n_segments must be >= 1");
  std::size_t seg = 2 * series.size() / (n_segments + 1);
  seg -= seg % 2;
  if (seg < 16 || series.size() < 2 * seg)
    throw ValidationError("series too short for " + std::to_string(n_segments) +
                          " segments: need at least " +
                          std::to_string(std::max<std::size_t>(16, 2 * seg) * (n_segments + 1) / 2) +
                          " samples, have " + std::to_string(series.size()));
  const std::size_t hop = seg / 2;
  const std::size_t count = (series.size() - seg) / hop + 1;

  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / series.size();
  const auto w = window_coefficients(window, seg);
  const double w2 = std::inner_product(w.begin(), w.end(), w.begin(), 0.0);

  Eigen::FFT<double> fft;
  std::vector<double> buf(seg);
  std::vector<std::complex<double>> spec;
  std::vector<double> acc(seg / 2 + 1, 0.0);
  for (std::size_t s = 0; s < count; ++s) {
    for (std::size_t i = 0; i < seg; ++i)
      buf[i] = (series[s * hop + i] - mean) * w[i];
    fft.fwd(spec, buf);
    for (std::size_t k = 0; k <= seg / 2; ++k)
      acc[k] += std::norm(spec[k]);
  }

  Spectrum out;
  out.window = window;
  out.segments = count;
  out.segment_length = seg;
  out.freq_hz.resize(acc.size());
  out.psd.resize(acc.size());
  const double df = 1.0 / (dt * static_cast<double>(seg));
  for (std::size_t k = 0; k < acc.size(); ++k) {
    const double one_sided = (k == 0 || k == seg / 2) ? 1.0 : 2.0;
    out.freq_hz[k] = static_cast<double>(k) * df;
    out.psd[k] = one_sided * dt * acc[k] / (w2 * static_cast<double>(count));
  }
  return out;
}

/// Integral of a one-sided spectrum over frequency (rectangle rule).
inline double spectrum_power(const Spectrum &s) {
  if (s.freq_hz.size() < 2)
    return 0.0;
  const double df = s.freq_hz[1] - s.freq_hz[0];
  return std::accumulate(s.psd.begin(), s.psd.end(), 0.0) * df;
}

struct OscillatorParams {
  double mass = 0.0;   // kg
  double omega = 0.0;  // omega_z, rad/s
  double gamma = 0.0;  // total damping, rad/s
  double ell = 0.0;    // m
  double kappa = 0.0;  // chi^2 Phi, 1/s
  double S_T = 0.0;    // N^2 s
  double S_F = 0.0;    // N^2 s
};

/// |chi_m(omega)|^2 for chi_m = 1 / (m [(w_z^2 - w^2) - i w Gamma]).
inline double susceptibility_sq(double w, double mass, double omega, double gamma) {
  const double re = omega * omega - w * w;
  const double im = w * gamma;
  return 1.0 / (mass * mass * (re * re + im * im));
}

/// |chi_m|^2 (S_T + S_F) + l^2/kappa, m^2 per Hz (two-sided in omega/2pi).
inline double position_psd_model(double w, const OscillatorParams &p) {
  require(p.gamma > 0.0, "position PSD model requires Gamma > 0");
  const double floor = p.kappa > 0.0 ? p.ell * p.ell / p.kappa : 0.0;
  return susceptibility_sq(w, p.mass, p.omega, p.gamma) * (p.S_T + p.S_F) + floor;
}

/// One-sided version in m^2/Hz, as produced by estimate_psd().
inline double position_psd_one_sided(double f_hz, const OscillatorParams &p) {
  return 2.0 * position_psd_model(units::two_pi * f_hz, p);
}

struct ForceNoise {
  double S_T = 0.0;
  double S_F = 0.0;
  double S_S = 0.0;
  double total = 0.0;
};

inline double shot_noise_dc(const OscillatorParams &p) {
  const double a = p.mass * p.ell * p.omega * p.omega;
  return a * a / p.kappa;
}

/// S_T + S_F + S_S(w), S_S(w) = S_S(0) [(1 - (w/w_z)^2)^2 + (w Gamma / w_z^2)^2].
inline ForceNoise force_noise_psd(double w, const OscillatorParams &p) {
  require(p.gamma >= 0.0, "Gamma must be >= 0");
  require(p.kappa > 0.0, "force noise requires kappa > 0");
  ForceNoise f;
  f.S_T = p.S_T;
  f.S_F = p.S_F;
  const double u = w / p.omega;
  const double v = w * p.gamma / (p.omega * p.omega);
  f.S_S = shot_noise_dc(p) * ((1.0 - u * u) * (1.0 - u * u) + v * v);
  f.total = f.S_T + f.S_F + f.S_S;
  return f;
}

struct OptimalFrequency {
  double omega = 0.0;
  bool overdamped = false;
};

inline OptimalFrequency optimal_frequency(double omega_z, double gamma) {
  const double arg = omega_z * omega_z - gamma * gamma / 2.0;
  if (arg <= 0.0)
    return {0.0, true};
  return {std::sqrt(arg), false};
}

struct LorentzFit {
  double omega = 0.0;      // rad/s
  double gamma = 0.0;      // rad/s
  double amplitude = 0.0;  // A = (S_T + S_F)/m^2, m^2 s^-3
  double floor = 0.0;      // two-sided floor, m^2/Hz
  double variance = 0.0;   // peak area A / (2 w^2 Gamma), m^2
  double n_ss = std::numeric_limits<double>::quiet_NaN();
  double omega_err = 0.0;
  double gamma_err = 0.0;
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero(); // (w, ln G, ln A, ln B)
  double residual_rms = 0.0;
  double log_bias = 0.0; // subtracted from ln(PSD) before fitting
  int iterations = 0;
  std::size_t points = 0;
};

struct LorentzGuess {
  double omega = 0.0, gamma = 0.0, amplitude = 0.0, floor = 0.0;
};

namespace detail {

inline double lorentz_one_sided(double w, double omega, double gamma, double a, double b) {
  const double re = omega * omega - w * w;
  return 2.0 * (a / (re * re + w * w * gamma * gamma) + b);
}

inline LorentzGuess auto_guess(const std::vector<double> &w, const std::vector<double> &y) {
  const std::size_t n = y.size();
  const std::size_t ipk = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
  std::vector<double> sorted = y;
  std::nth_element(sorted.begin(), sorted.begin() + n / 4, sorted.end());
  const double floor1 = sorted[n / 4];
  if (!(y[ipk] > 3.0 * floor1))
    throw NumericalError("no resolvable peak: peak/floor = " + std::to_string(y[ipk] / floor1) +
                         " (need > 3)");
  const double half = floor1 + 0.5 * (y[ipk] - floor1);
  std::size_t lo = ipk, hi = ipk;
  while (lo > 0 && y[lo] > half)
    --lo;
  while (hi + 1 < n && y[hi] > half)
    ++hi;
  const double dw = w.size() > 1 ? w[1] - w[0] : 1.0;
  LorentzGuess g;
  g.omega = w[ipk];
  g.gamma = std::max(w[hi] - w[lo], dw);
  g.floor = floor1 / 2.0;
  g.amplitude = (y[ipk] - floor1) / 2.0 * g.omega * g.omega * g.gamma * g.gamma;
  return g;
}

} // namespace detail

/// Levenberg-Marquardt fit of log one-sided PSD to
/// 2 [A / ((w_z^2 - w^2)^2 + w^2 Gamma^2) + B] over [f_min, f_max].
/// With `mass` the steady-state occupation var/(2 l^2) - 1/2 is reported.
inline LorentzFit fit_lorentzian(const Spectrum &spec, std::optional<LorentzGuess> guess = {},
                                 double f_min = 0.0,
                                 double f_max = std::numeric_limits<double>::infinity(),
                                 std::optional<double> mass = {}, int max_iter = 200) {
  std::vector<double> w, y;
  for (std::size_t k = 0; k < spec.freq_hz.size(); ++k) {
    const double f = spec.freq_hz[k];
    if (f <= 0.0 || f < f_min || f > f_max || !(spec.psd[k] > 0.0))
      continue;
    w.push_back(units::two_pi * f);
    y.push_back(spec.psd[k]);
  }
  require(w.size() >= 8, "fit band holds fewer than 8 positive bins");
  const LorentzGuess g0 = guess ? *guess : detail::auto_guess(w, y);
  require(g0.omega > 0.0 && g0.gamma > 0.0 && g0.amplitude > 0.0 && g0.floor > 0.0,
          "initial guess must be positive");

  const double wscale = g0.omega;
  const std::size_t n = w.size();
  Eigen::Vector4d p(1.0, std::log(g0.gamma), std::log(g0.amplitude), std::log(g0.floor));
  // An averaged periodogram is S chi2_nu / nu, and E[ln(chi2_nu / nu)] =
  // digamma(nu/2) - ln(nu/2) < 0. Welch's equivalent dof for 50% overlap:
  // nu = 2K / (1 + 2c^2), c = 0.167 (Hann) or 0.25 (rectangular).
  double log_bias = 0.0;
  if (spec.segments > 0) {
    const double c = spec.window == Window::hann ? 0.167 : 0.25;
    const double half_nu = static_cast<double>(spec.segments) / (1.0 + 2.0 * c * c);
    log_bias = boost::math::digamma(half_nu) - std::log(half_nu);
  }
  Eigen::VectorXd ly(n);
  for (std::size_t i = 0; i < n; ++i)
    ly[i] = std::log(y[i]) - log_bias;

  auto residuals = [&](const Eigen::Vector4d &q, Eigen::VectorXd &r, Eigen::MatrixXd *jac) {
    const double om = q[0] * wscale, ga = std::exp(q[1]), a = std::exp(q[2]), b = std::exp(q[3]);
    r.resize(n);
    if (jac)
      jac->resize(n, 4);
    for (std::size_t i = 0; i < n; ++i) {
      const double re = om * om - w[i] * w[i];
      const double den = re * re + w[i] * w[i] * ga * ga;
      const double h = 1.0 / den;
      const double model = 2.0 * (a * h + b);
      r[i] = std::log(model) - ly[i];
      if (jac) {
        (*jac)(i, 0) = 2.0 * a * (-h * h * 4.0 * re * om) / model * wscale;
        (*jac)(i, 1) = 2.0 * a * (-h * h * 2.0 * w[i] * w[i] * ga * ga) / model;
        (*jac)(i, 2) = 2.0 * a * h / model;
        (*jac)(i, 3) = 2.0 * b / model;
      }
    }
  };

  Eigen::VectorXd r, r_try;
  Eigen::MatrixXd jac;
  residuals(p, r, &jac);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  LorentzFit fit;
  bool converged = false;
  int it = 0;
  for (; it < max_iter; ++it) {
    const Eigen::Matrix4d jtj = jac.transpose() * jac;
    const Eigen::Vector4d grad = jac.transpose() * r;
    if (grad.cwiseAbs().maxCoeff() <= 1e-14 * std::max(1.0, cost)) {
      converged = true;
      break;
    }
    bool accepted = false;
    while (!accepted && lambda < 1e16) {
      Eigen::Matrix4d a = jtj;
      a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-30);
      const Eigen::Vector4d step = a.ldlt().solve(-grad);
      const Eigen::Vector4d trial = p + step;
      residuals(trial, r_try, nullptr);
      const double c_try = r_try.squaredNorm();
      if (std::isfinite(c_try) && c_try <= cost) {
        const double rel = (cost - c_try) / std::max(cost, 1e-300);
        const double step_rel = step.norm() / (p.norm() + 1e-12);
        p = trial;
        residuals(p, r, &jac);
        cost = c_try;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (rel < 1e-15 || step_rel < 1e-13)
          converged = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted)
      converged = true; // no descent direction left at machine precision
    if (converged)
      break;
  }
  if (!converged)
    throw NumericalError("Lorentzian fit did not converge in " + std::to_string(max_iter) +
                         " iterations (last omega = " + std::to_string(p[0] * wscale) +
                         ", Gamma = " + std::to_string(std::exp(p[1])) + ")");

  fit.iterations = it;
  fit.points = n;
  fit.log_bias = log_bias;
  fit.omega = p[0] * wscale;
  fit.gamma = std::exp(p[1]);
  fit.amplitude = std::exp(p[2]);
  fit.floor = std::exp(p[3]);
  fit.variance = fit.amplitude / (2.0 * fit.omega * fit.omega * fit.gamma);
  fit.residual_rms = std::sqrt(cost / static_cast<double>(n));
  const double sigma2 = n > 4 ? cost / static_cast<double>(n - 4) : 0.0;
  Eigen::Matrix4d cov = sigma2 * (jac.transpose() * jac).inverse();
  // Rescale the first parameter to rad/s.
  cov.row(0) *= wscale;
  cov.col(0) *= wscale;
  fit.covariance = cov;
  fit.omega_err = std::sqrt(std::max(cov(0, 0), 0.0));
  fit.gamma_err = fit.gamma * std::sqrt(std::max(cov(1, 1), 0.0));
  if (mass && *mass > 0.0) {
    const double l2 = units::hbar / (2.0 * *mass * fit.omega);
    fit.n_ss = fit.variance / (2.0 * l2) - 0.5;
  }
  return fit;
}

struct SqlPoint {
  double power = 0.0;       // W
  double sensitivity = 0.0; // sqrt(S_T + S_F + S_S(w_opt)), N/sqrt(Hz)
  double S_T = 0.0, S_F = 0.0, S_S = 0.0;
};

struct SqlResult {
  // Operating point at the configured probe power.
  double gamma = 0.0;   // Gamma0 + dGamma, rad/s
  double n_ss = 0.0;
  double gain = optimal_gain_value;
  // Closed form: chi^2 Phi_SQL = Gamma / 8.
  double flux_closed = 0.0;
  double power_closed = 0.0;       // W
  double sensitivity_closed = 0.0; // N/sqrt(Hz)
  // Numeric minimum of the Phi scan.
  double power_numeric = 0.0;
  double sensitivity_numeric = 0.0;
  double power_gap = 0.0;       // |numeric/closed - 1|
  double sensitivity_gap = 0.0; // |numeric/closed - 1|
  std::vector<SqlPoint> scan;
  std::vector<std::string> flags;
};

/// Force noise at probe power `power` with (Gamma, N, G) held at the
/// operating point. A_p scales with power, A_t and gas terms do not.
inline SqlPoint sql_noise_at(const System &s, const OperatingPoint &op, double gamma, double n,
                             double power) {
  const double ratio = power / s.probe.power;
  const double kappa = s.kappa * ratio;
  const double w = s.modes.z.omega;
  const double m = s.particle.mass;
  const double dp = op.brownian.momentum_diffusion + s.scattering.trap_heating +
                    s.scattering.probe_heating * ratio;
  OscillatorParams p{m, w, gamma, s.modes.z.ell, kappa, 2.0 * m * units::hbar * w * dp,
                     feedback_force_noise(m, w, kappa, op.gain, n)};
  const auto wopt = optimal_frequency(w, gamma);
  const auto f = force_noise_psd(wopt.omega, p);
  return {power, std::sqrt(f.total), f.S_T, f.S_F, f.S_S};
}

/// Standard quantum limit at the gas pressure in `gas`, optimal gain.
/// Both the closed form and a log-spaced power scan with golden-section
/// refinement are reported.
inline SqlResult sql_optimize(const System &s, const GasEnvironment &gas, double p_lo = 1e-6,
                              double p_hi = 10.0, std::size_t scan_points = 241) {
  SqlResult r;
  r.flags.push_back("assumes optimal feedback J = J_max (G = 1/9)");
  const auto op = operating_point(s, gas, optimal_gain_value);
  r.n_ss = steady_state_exact(op.coeffs.J, op.coeffs.K, op.coeffs.L);
  r.gamma = op.damping.gamma0 + feedback_damping(s.kappa, optimal_gain_value, r.n_ss);

  r.flux_closed = r.gamma / (8.0 * s.chi * s.chi);
  r.power_closed = r.flux_closed * units::hbar * s.probe.angular_frequency();
  const double m = s.particle.mass, w = s.modes.z.omega;
  const double sens2 = 2.0 * m * op.damping.gamma0 * units::k_boltzmann * gas.temperature +
                       4.0 * m * units::hbar * w *
                           (s.scattering.trap_heating + std::sqrt(2.0) * r.gamma);
  r.sensitivity_closed = std::sqrt(sens2);

  const auto grid = logspace(p_lo, p_hi, scan_points);
  r.scan.reserve(grid.size());
  std::size_t best = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    r.scan.push_back(sql_noise_at(s, op, r.gamma, r.n_ss, grid[i]));
    if (r.scan[i].sensitivity < r.scan[best].sensitivity)
      best = i;
  }
  if (best == 0 || best + 1 == grid.size()) {
    r.flags.push_back("power scan minimum at the scan boundary");
    r.power_numeric = grid[best];
    r.sensitivity_numeric = r.scan[best].sensitivity;
  } else {
    double a = std::log(grid[best - 1]), b = std::log(grid[best + 1]);
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    auto f = [&](double x) { return sql_noise_at(s, op, r.gamma, r.n_ss, std::exp(x)).sensitivity; };
    double c = b - phi * (b - a), d = a + phi * (b - a);
    double fc = f(c), fd = f(d);
    for (int i = 0; i < 100 && b - a > 1e-10; ++i) {
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - phi * (b - a);
        fc = f(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + phi * (b - a);
        fd = f(d);
      }
    }
    r.power_numeric = std::exp(0.5 * (a + b));
    r.sensitivity_numeric = f(0.5 * (a + b));
  }
  r.power_gap = std::abs(r.power_numeric / r.power_closed - 1.0);
  r.sensitivity_gap = std::abs(r.sensitivity_numeric / r.sensitivity_closed - 1.0);
  return r;
}

} // namespace levicool
