#pragma once

// Phonon-number dynamics under parametric feedback:
//   dN/dt = -2J N^2 - (J+K) N + L
// closed form, adaptive integration, steady state, pressure sweeps and the
// ground-state feasibility report.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "levicool/errors.hpp"
#include "levicool/parallel.hpp"
#include "levicool/params.hpp"

namespace levicool {

enum class CurveBranch { tanh, coth, fixed, linear };

struct PhononCurve {
  std::vector<double> t; // s
  std::vector<double> n;
  double n0 = 0.0;
  double n_ss = 0.0;
  double tau = 0.0;
  double theta = 0.0;
  double theta_naive = std::numeric_limits<double>::quiet_NaN();
  CurveBranch branch = CurveBranch::fixed;
  double J = 0.0, K = 0.0, L = 0.0;
  std::vector<std::string> warnings;
};

inline double phonon_rate(double n, double J, double K, double L) {
  return -2.0 * J * n * n - (J + K) * n + L;
}

inline double discriminant(double J, double K, double L) { return (J + K) * (J + K) + 8.0 * J * L; }

struct SteadyState {
  double exact = 0.0;
  double approx = 0.0;
  double gap = 0.0; // |exact - approx| / exact
};

/// Stable root of -2J N^2 - (J+K) N + L = 0, written as
/// 2L / ((J+K) + sqrt((J+K)^2 + 8JL)) so J -> 0 gives L/K.
inline double steady_state_exact(double J, double K, double L) {
  const double disc = discriminant(J, K, L);
  if (disc < 0.0)
    throw NumericalError("no steady state: feedback heating outruns damping (J < 0, disc < 0)");
  const double den = (J + K) + std::sqrt(disc);
  if (den <= 0.0)
    throw NumericalError("no steady state: J + K <= 0");
  return 2.0 * L / den;
}

/// Exact root and the large-N approximation sqrt(decoherence / 2J).
/// Without a decoherence rate the approximation uses L.
inline SteadyState steady_state(double J, double K, double L,
                                std::optional<double> decoherence = std::nullopt) {
  require(J > 0.0, "steady_state requires J > 0");
  SteadyState s;
  s.exact = steady_state_exact(J, K, L);
  s.approx = std::sqrt(std::max(decoherence.value_or(L), 0.0) / (2.0 * J));
  s.gap = s.exact > 0.0 ? std::abs(s.exact - s.approx) / s.exact : 0.0;
  return s;
}

inline std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = a;
    return v;
  }
  for (std::size_t i = 0; i < n; ++i)
    v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

inline std::vector<double> logspace(double lo, double hi, std::size_t n) {
  auto e = linspace(std::log10(lo), std::log10(hi), n);
  for (auto &x : e)
    x = std::pow(10.0, x);
  return e;
}

/// Analytic solution.
///
/// With roots r+ = N_ss and r- of the quadratic, (N - r+)/(N - r-) decays
/// as exp(-2t/tau), tau = 2 / sqrt((J+K)^2 + 8JL). This is the tanh form
/// N = -(J+K)/4J + tanh(t/tau + theta)/(2J tau) when N0 < N_ss and the coth
/// form when N0 > N_ss; theta is reported for either branch but the curve
/// is evaluated through the root form, which has no cancellation near N_ss.
inline PhononCurve evolve_closed(double n0, double J, double K, double L,
                                 const std::vector<double> &t_grid) {
  require(n0 >= 0.0, "N0 must be >= 0");
  PhononCurve c;
  c.t = t_grid;
  c.n.resize(t_grid.size());
  c.n0 = n0;
  c.J = J;
  c.K = K;
  c.L = L;

  if (J == 0.0) {
    require(K > 0.0, "linear branch requires K > 0");
    c.branch = CurveBranch::linear;
    c.n_ss = L / K;
    c.tau = 1.0 / K;
    for (std::size_t i = 0; i < t_grid.size(); ++i)
      c.n[i] = c.n_ss + (n0 - c.n_ss) * std::exp(-K * t_grid[i]);
    return c;
  }

  const double disc = discriminant(J, K, L);
  if (disc <= 0.0)
    throw NumericalError("phonon ODE has no real fixed point; N diverges (J=" + std::to_string(J) +
                         ")");
  const double root = std::sqrt(disc);
  const double rp = steady_state_exact(J, K, L);
  const double rm = -(J + K) / (2.0 * J) - rp;
  c.n_ss = rp;
  c.tau = 2.0 / root;

  const double x = (2.0 * J * n0 + (J + K) / 2.0) * c.tau;
  if (std::abs(n0 - rp) <= 1e-12 * std::max(rp, 1e-300)) {
    c.branch = CurveBranch::fixed;
    c.theta = std::numeric_limits<double>::infinity();
  } else if (std::abs(x) < 1.0) {
    c.branch = CurveBranch::tanh;
    c.theta = std::atanh(x);
  } else {
    c.branch = CurveBranch::coth;
    c.theta = std::atanh(1.0 / x);
  }
  const double naive = (2.0 * J * n0 + J + K) * c.tau;
  if (std::abs(naive) < 1.0)
    c.theta_naive = std::atanh(naive);
  if (J > 0.0 && c.branch != CurveBranch::fixed)
    c.warnings.push_back("theta from N(0) = N0 is atanh[(2J N0 + (J+K)/2) tau]" +
                         std::string(c.branch == CurveBranch::coth ? " (coth branch)" : "") +
                         "; the form atanh[(2J N0 + J + K) tau] does not satisfy N(0) = N0");

  if (c.branch == CurveBranch::fixed) {
    std::fill(c.n.begin(), c.n.end(), n0);
    return c;
  }
  // J < 0 with N0 beyond the unstable root blows up in finite time.
  const double C = (n0 - rp) / (n0 - rm);
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    const double e = C * std::exp(-root * t_grid[i]);
    const double den = 1.0 - e;
    if (den <= 0.0 || !std::isfinite(e))
      throw NumericalError("phonon number diverges before t = " + std::to_string(t_grid[i]) + " s");
    c.n[i] = (rp - rm * e) / den;
  }
  c.n[0] = n0;
  return c;
}

/// Adaptive Dormand-Prince 5(4) integration, stepping onto every grid
/// point. Local error per step is held below tol relative to |N|.
inline PhononCurve evolve_ode(double n0, double J, double K, double L,
                              const std::vector<double> &t_grid, double tol) {
  require(tol > 0.0, "tol must be > 0");
  require(!t_grid.empty(), "time grid is empty");
  PhononCurve c;
  c.t = t_grid;
  c.n.resize(t_grid.size());
  c.n0 = n0;
  c.J = J;
  c.K = K;
  c.L = L;
  if (J != 0.0 && discriminant(J, K, L) > 0.0) {
    c.n_ss = steady_state_exact(J, K, L);
    c.tau = 2.0 / std::sqrt(discriminant(J, K, L));
  } else if (J == 0.0 && K > 0.0) {
    c.n_ss = L / K;
    c.tau = 1.0 / K;
  }

  auto f = [&](double y) { return phonon_rate(y, J, K, L); };
  static constexpr double a21 = 1.0 / 5, a31 = 3.0 / 40, a32 = 9.0 / 40, a41 = 44.0 / 45,
                          a42 = -56.0 / 15, a43 = 32.0 / 9, a51 = 19372.0 / 6561,
                          a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729,
                          a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656, b1 = 35.0 / 384,
                          b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                          b6 = 11.0 / 84, e1 = 71.0 / 57600, e3 = -71.0 / 16695,
                          e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525,
                          e7 = -1.0 / 40;

  const double scale = std::max({n0, std::abs(c.n_ss), 1e-300});
  const double atol = tol * 1e-6 * scale;
  double y = n0;
  double t = t_grid.front();
  c.n[0] = y;
  double k1 = f(y);
  double h = 0.0;
  {
    const double span = t_grid.back() - t_grid.front();
    const double rate = std::abs(k1) / std::max(std::abs(y), atol);
    h = rate > 0.0 ? 0.01 / rate : span;
    h = std::min(h, span > 0.0 ? span : 1.0);
  }
  for (std::size_t i = 1; i < t_grid.size(); ++i) {
    const double target = t_grid[i];
    while (t < target) {
      bool last = false;
      double step = h;
      if (t + step >= target) {
        step = target - t;
        last = true;
      }
      if (step <= 1e-14 * std::max(std::abs(t), std::abs(target)))
        throw NumericalError("ODE step size underflow at t = " + std::to_string(t) +
                             " s, N = " + std::to_string(y));
      const double k2 = f(y + step * a21 * k1);
      const double k3 = f(y + step * (a31 * k1 + a32 * k2));
      const double k4 = f(y + step * (a41 * k1 + a42 * k2 + a43 * k3));
      const double k5 = f(y + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      const double k6 = f(y + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      const double y5 = y + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      const double k7 = f(y5);
      const double err = std::abs(step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7));
      const double sc = atol + tol * std::max(std::abs(y), std::abs(y5));
      const double ratio = err / sc;
      if (!std::isfinite(y5))
        throw NumericalError("ODE state became non-finite at t = " + std::to_string(t) + " s");
      if (ratio <= 1.0) {
        t = last ? target : t + step;
        y = y5;
        k1 = k7;
        const double grow = ratio == 0.0 ? 5.0 : std::min(5.0, 0.9 * std::pow(ratio, -0.2));
        if (!last || grow < 1.0)
          h = step * grow;
      } else {
        h = step * std::max(0.1, 0.9 * std::pow(ratio, -0.2));
      }
    }
    c.n[i] = y;
  }
  return c;
}

struct OptimalGain {
  double gain = optimal_gain_value;
  double j_max = 0.0;
};

inline OptimalGain optimal_gain(double chi, double flux) {
  require(chi > 0.0 && flux > 0.0, "chi and flux must be > 0");
  return {optimal_gain_value, feedback_gain_factor(optimal_gain_value) * chi * chi * flux};
}

enum class GainPolicyKind { fixed_gain, fixed_modulation, optimal_capped };

struct GainPolicy {
  GainPolicyKind kind = GainPolicyKind::fixed_gain;
  double value = optimal_gain_value; // G for fixed_gain, M otherwise
};

enum class Regime { gas_dominated, recoil_dominated };

inline const char *regime_name(Regime r) {
  return r == Regime::gas_dominated ? "gas" : "recoil";
}

struct SweepPoint {
  double pressure_mbar = 0.0;
  double n_ss = 0.0;
  double gain = 0.0;
  double modulation = 0.0;
  double gamma0 = 0.0;
  double n0 = 0.0;
  Regime regime = Regime::gas_dominated;
  bool converged = true;
  std::string error;
};

struct SweepResult {
  std::vector<SweepPoint> points;
};

inline double steady_phonons(const System &s, const GasEnvironment &gas, double gain) {
  const auto op = operating_point(s, gas, gain);
  return steady_state_exact(op.coeffs.J, op.coeffs.K, op.coeffs.L);
}

struct GainSolution {
  double gain = 0.0;
  double n_ss = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Self-consistent G = M omega_z / (kappa N_ss(G)) by damped fixed-point
/// iteration (relaxation 0.5, 100 iterations, 1e-10 relative).
inline GainSolution gain_at_modulation(const System &s, const GasEnvironment &gas, double m) {
  require(m >= 0.0 && m <= 1.0, "modulation must lie in [0, 1]");
  GainSolution r;
  const double w = s.modes.z.omega;
  if (m == 0.0) {
    r.gain = 0.0;
    r.n_ss = steady_phonons(s, gas, 0.0);
    r.converged = true;
    return r;
  }
  double g = std::min(optimal_gain_value, gain_for_modulation(m, s.kappa, steady_phonons(s, gas, 0.0), w));
  for (r.iterations = 1; r.iterations <= 100; ++r.iterations) {
    const double n = steady_phonons(s, gas, g);
    const double next = 0.5 * g + 0.5 * gain_for_modulation(m, s.kappa, n, w);
    const double delta = std::abs(next - g);
    g = next;
    if (delta <= 1e-10 * std::max(g, 1e-300)) {
      r.converged = true;
      break;
    }
  }
  r.gain = g;
  r.n_ss = steady_phonons(s, gas, g);
  return r;
}

/// G = min(1/9, root of M(G) = M_max on [0, 1/9]).
inline GainSolution optimal_capped_gain(const System &s, const GasEnvironment &gas, double m_max) {
  require(m_max > 0.0 && m_max <= 1.0, "M_max must lie in (0, 1]");
  const double w = s.modes.z.omega;
  auto modulation = [&](double g) { return trap_modulation(g, s.kappa, steady_phonons(s, gas, g), w); };
  GainSolution r;
  r.converged = true;
  if (modulation(optimal_gain_value) <= m_max) {
    r.gain = optimal_gain_value;
  } else {
    double lo = 0.0, hi = optimal_gain_value;
    for (r.iterations = 0; r.iterations < 200 && hi - lo > 1e-15 * hi; ++r.iterations) {
      const double mid = 0.5 * (lo + hi);
      (modulation(mid) > m_max ? hi : lo) = mid;
    }
    r.gain = lo;
  }
  r.n_ss = steady_phonons(s, gas, r.gain);
  return r;
}

inline SweepPoint sweep_point(const System &s, GasEnvironment gas, double pressure_mbar,
                              const GainPolicy &policy) {
  SweepPoint p;
  p.pressure_mbar = pressure_mbar;
  gas.pressure = pressure_mbar * units::mbar;
  try {
    GainSolution sol;
    switch (policy.kind) {
    case GainPolicyKind::fixed_gain:
      sol.gain = policy.value;
      sol.n_ss = steady_phonons(s, gas, policy.value);
      sol.converged = true;
      break;
    case GainPolicyKind::fixed_modulation:
      sol = gain_at_modulation(s, gas, policy.value);
      break;
    case GainPolicyKind::optimal_capped:
      sol = optimal_capped_gain(s, gas, policy.value);
      break;
    }
    const auto op = operating_point(s, gas, sol.gain);
    p.gain = sol.gain;
    p.n_ss = sol.n_ss;
    p.converged = sol.converged;
    p.modulation = trap_modulation(sol.gain, s.kappa, sol.n_ss, s.modes.z.omega);
    p.gamma0 = op.damping.gamma0;
    p.n0 = op.n0;
    p.regime = op.brownian.momentum_diffusion > s.optical_heating() ? Regime::gas_dominated
                                                                    : Regime::recoil_dominated;
    if (!sol.converged)
      p.error = "gain self-consistency did not converge";
  } catch (const std::exception &e) {
    p.converged = false;
    p.error = e.what();
  }
  return p;
}

/// Steady state over a strictly increasing pressure grid [mbar]. Failed
/// points carry an error string; the sweep continues.
inline SweepResult pressure_sweep(const System &s, const GasEnvironment &gas,
                                  const std::vector<double> &pressure_mbar,
                                  const GainPolicy &policy, unsigned threads = 1) {
  require(!pressure_mbar.empty(), "pressure grid is empty");
  for (std::size_t i = 0; i < pressure_mbar.size(); ++i) {
    require(pressure_mbar[i] > 0.0, "pressure grid must be > 0");
    if (i > 0)
      require(pressure_mbar[i] > pressure_mbar[i - 1], "pressure grid must be strictly increasing");
  }
  SweepResult r;
  r.points.resize(pressure_mbar.size());
  parallel_for(pressure_mbar.size(), threads,
               [&](std::size_t i) { r.points[i] = sweep_point(s, gas, pressure_mbar[i], policy); });
  return r;
}

struct ScheduleStep {
  double t = 0.0; // s
  double n = 0.0;
  double gain = 0.0;
  double modulation = 0.0;
};

struct FeasibilityReport {
  double m_max = 0.0;
  double min_n_ss = std::numeric_limits<double>::infinity();
  double pressure_at_min_mbar = 0.0;
  // Highest grid pressure with N_ss < 1; NaN when none.
  double required_pressure_mbar = std::numeric_limits<double>::quiet_NaN();
  // Low-pressure floor sqrt((A_t + A_p)/2J) at G = 1/9.
  double recoil_floor = 0.0;
  // Probe power that would bring the floor below one phonon; NaN when none.
  double required_probe_power = std::numeric_limits<double>::quiet_NaN();
  bool feasible = false;
  std::vector<SweepPoint> sweep;
  std::vector<ScheduleStep> schedule;
};

/// Gain schedule from N0 at the given pressure: every step sets
/// G = min(1/9, M_max omega / (kappa N)) and advances N with the closed
/// form over one interval.
inline std::vector<ScheduleStep> gain_schedule(const System &s, const GasEnvironment &gas,
                                               double m_max, std::size_t steps = 400) {
  const auto op0 = operating_point(s, gas, 0.0);
  double n = op0.n0;
  const double w = s.modes.z.omega;
  const auto opt = operating_point(s, gas, optimal_gain_value);
  const double n_target = steady_state_exact(opt.coeffs.J, opt.coeffs.K, opt.coeffs.L);
  // Horizon: a few nonlinear timescales from the hottest start, floored by
  // the linear time at the final gain.
  const double horizon = 20.0 / std::max(opt.coeffs.K + 4.0 * opt.coeffs.J * n_target, 1e-300);
  std::vector<ScheduleStep> out;
  double t = 0.0;
  const double dt_log0 = horizon * 1e-6;
  for (std::size_t k = 0; k <= steps; ++k) {
    double g = m_max > 0.0 ? std::min(optimal_gain_value, gain_for_modulation(m_max, s.kappa, n, w))
                           : 0.0;
    out.push_back({t, n, g, trap_modulation(g, s.kappa, n, w)});
    if (k == steps)
      break;
    // Log-spaced intervals: cooling is fast at first and slow near N_ss.
    const double t_next = dt_log0 * std::pow(horizon / dt_log0, static_cast<double>(k + 1) / steps);
    const auto op = operating_point(s, gas, g);
    const auto seg = evolve_closed(n, op.coeffs.J, op.coeffs.K, op.coeffs.L, {0.0, t_next - t});
    n = seg.n.back();
    t = t_next;
  }
  return out;
}

/// Ground-state report at the gas temperature in `gas`: sweeps pressure
/// from p_max_mbar down to p_min_mbar under the optimal-capped policy.
inline FeasibilityReport ground_state_feasibility(const Experiment &e, double m_max,
                                                  double p_max_mbar, double p_min_mbar = 1e-10,
                                                  std::size_t n_points = 41) {
  require(m_max > 0.0 && m_max <= 1.0, "M_max must lie in (0, 1]");
  require(p_max_mbar > p_min_mbar && p_min_mbar > 0.0, "pressure range must be positive and ordered");
  const System s = derive_system(e);
  FeasibilityReport r;
  r.m_max = m_max;
  const auto grid = logspace(p_min_mbar, p_max_mbar, n_points);
  r.sweep = pressure_sweep(s, e.gas, grid, {GainPolicyKind::optimal_capped, m_max}).points;
  for (const auto &p : r.sweep) {
    if (!p.error.empty())
      continue;
    if (p.n_ss < r.min_n_ss) {
      r.min_n_ss = p.n_ss;
      r.pressure_at_min_mbar = p.pressure_mbar;
    }
    if (p.n_ss < 1.0)
      r.required_pressure_mbar = p.pressure_mbar;
  }
  r.feasible = r.min_n_ss < 1.0;
  const double j_max = optimal_gain(s.chi, s.flux).j_max;
  r.recoil_floor = std::sqrt(s.optical_heating() / (2.0 * j_max));

  // Recoil floor vs probe power: A_p and J both scale with power, A_t not.
  auto floor_at = [&](double power) {
    Experiment trial = e;
    trial.probe.power = power;
    const System st = derive_system(trial);
    return std::sqrt(st.optical_heating() / (2.0 * optimal_gain(st.chi, st.flux).j_max));
  };
  double lo = std::max(e.probe.power, 1e-9), hi = 1e4;
  if (floor_at(lo) < 1.0) {
    r.required_probe_power = lo;
  } else if (floor_at(hi) < 1.0) {
    for (int i = 0; i < 100 && hi / lo > 1.0 + 1e-9; ++i) {
      const double mid = std::sqrt(lo * hi);
      (floor_at(mid) < 1.0 ? hi : lo) = mid;
    }
    r.required_probe_power = hi;
  }

  GasEnvironment g = e.gas;
  g.pressure = (r.feasible ? r.required_pressure_mbar : p_max_mbar) * units::mbar;
  r.schedule = gain_schedule(s, g, m_max);
  return r;
}

} // namespace levicool
