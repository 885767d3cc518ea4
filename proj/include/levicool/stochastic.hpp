#pragma once

// Langevin simulation of the z quadratures,
//   dQ/dt = w P
//   dP/dt = -w Q - Gamma P + F / (m w l),
// with thermal and feedback force noise, plus synthetic homodyne readout.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "levicool/errors.hpp"
#include "levicool/parallel.hpp"
#include "levicool/params.hpp"

namespace levicool {

/// Everything the integrator needs, in SI.
struct SdeModel {
  double omega = 0.0;  // rad/s
  double mass = 0.0;   // kg
  double ell = 0.0;    // m
  double gamma0 = 0.0; // rad/s
  double kappa = 0.0;  // chi^2 Phi, 1/s
  double gain = 0.0;
  double S_T = 0.0;    // N^2 s
  double n0 = 0.0;     // thermal start occupation
};

/// Model at the gas state in `gas`. Without optical heating the thermal
/// noise is the gas part only.
inline SdeModel sde_model(const System &s, const GasEnvironment &gas, double gain,
                          bool optical_heating = true) {
  const auto op = operating_point(s, gas, gain);
  SdeModel m;
  m.omega = s.modes.z.omega;
  m.mass = s.particle.mass;
  m.ell = s.modes.z.ell;
  m.gamma0 = op.damping.gamma0;
  m.kappa = s.kappa;
  m.gain = gain;
  const double dp = optical_heating ? op.decoherence : op.brownian.momentum_diffusion;
  m.S_T = 2.0 * m.mass * units::hbar * m.omega * dp;
  m.n0 = dp / m.gamma0;
  return m;
}

enum Stream : std::uint64_t { stream_init = 0, stream_thermal = 1, stream_feedback = 2, stream_homodyne = 3 };

struct SimulationSettings {
  double duration = 0.0;   // s
  double dt = 0.0;         // s; 0 selects 1/(200 f_z)
  std::uint64_t seed = 0;
  std::size_t decimate = 1;
  bool thermal_init = true;
  double q0 = 0.0, p0 = 0.0; // used when thermal_init is false
  double ema_periods = 10.0; // N_est time constant in mechanical periods
  bool record = true;        // keep sampled series
  bool noise = true;         // false switches off both force channels
};

struct Trajectory {
  double dt = 0.0;
  std::size_t decimate = 1;
  std::size_t steps = 0;
  std::uint64_t master_seed = 0;
  std::uint64_t index = 0;
  std::vector<std::uint64_t> sub_seeds; // init, thermal, feedback, homodyne
  std::vector<double> t, Q, P, q, I_h, n_est;
  // Time averages over all steps.
  double mean_q2 = 0.0; // <Q^2>
  double mean_p2 = 0.0; // <P^2>
  double mean_n_est = 0.0;
  // Realized feedback impulse variance per unit time, N^2 s.
  double feedback_noise = 0.0;
};

inline double default_dt(double omega) { return 1.0 / (200.0 * units::hertz(omega)); }

inline void check_dt(double dt, double omega) {
  const double limit = 1.0 / (50.0 * units::hertz(omega));
  if (dt > limit)
    throw ValidationError("dt = " + std::to_string(dt) + " s is too coarse; need dt <= " +
                          std::to_string(limit) + " s (1/(50 f_z))");
}

/// Semi-implicit Euler-Maruyama: momentum first, then position with the
/// updated momentum. Trajectory `index` under `master_seed` draws from the
/// sub-streams make_engine(master_seed, index, stream).
inline Trajectory simulate_indexed(const SdeModel &m, const SimulationSettings &cfg,
                                   std::uint64_t index) {
  require(m.omega > 0.0 && m.mass > 0.0 && m.ell > 0.0, "SDE model is not derived");
  require(cfg.duration > 0.0, "duration must be > 0");
  require(cfg.decimate >= 1, "decimate must be >= 1");
  const double dt = cfg.dt > 0.0 ? cfg.dt : default_dt(m.omega);
  check_dt(dt, m.omega);

  Trajectory tr;
  tr.dt = dt;
  tr.decimate = cfg.decimate;
  tr.master_seed = cfg.seed;
  tr.index = index;
  for (std::uint64_t s : {stream_init, stream_thermal, stream_feedback, stream_homodyne})
    tr.sub_seeds.push_back(sub_seed(cfg.seed, index, s));
  tr.steps = static_cast<std::size_t>(std::llround(cfg.duration / dt));

  auto rng_init = make_engine(cfg.seed, index, stream_init);
  auto rng_t = make_engine(cfg.seed, index, stream_thermal);
  auto rng_f = make_engine(cfg.seed, index, stream_feedback);
  std::normal_distribution<double> gauss(0.0, 1.0);

  double Q = cfg.q0, P = cfg.p0;
  if (cfg.thermal_init) {
    const double sd = std::sqrt(2.0 * m.n0 + 1.0);
    Q = sd * gauss(rng_init);
    P = sd * gauss(rng_init);
  }
  double n_est = cfg.thermal_init ? m.n0 : std::max(0.0, (Q * Q + P * P - 2.0) / 4.0);
  // The explicit step needs the total damping resolved by dt.
  const double gamma_start = m.gamma0 + feedback_damping(m.kappa, m.gain, n_est);
  if (gamma_start * dt > 0.05)
    throw ValidationError("feedback damping " + std::to_string(gamma_start) + " rad/s at N = " +
                          std::to_string(n_est) + " is not resolved by dt = " + std::to_string(dt) +
                          " s (need Gamma dt <= 0.05); lower the gain, start colder or reduce dt");
  const double alpha = dt / (cfg.ema_periods * units::two_pi / m.omega);
  const double force_scale = 1.0 / (m.mass * m.omega * m.ell);
  const double sqdt = std::sqrt(dt);

  if (cfg.record) {
    const std::size_t n_rec = tr.steps / cfg.decimate + 1;
    for (auto *v : {&tr.t, &tr.Q, &tr.P, &tr.n_est})
      v->reserve(n_rec);
  }
  auto record = [&](std::size_t k) {
    tr.t.push_back(static_cast<double>(k) * dt);
    tr.Q.push_back(Q);
    tr.P.push_back(P);
    tr.n_est.push_back(n_est);
  };
  if (cfg.record)
    record(0);

  double sum_q2 = 0.0, sum_p2 = 0.0, sum_n = 0.0, sum_ff2 = 0.0;
  for (std::size_t k = 1; k <= tr.steps; ++k) {
    const double gamma = m.gamma0 + feedback_damping(m.kappa, m.gain, n_est);
    if (gamma * dt > 0.5)
      throw NumericalError("feedback damping outran the time step at step " + std::to_string(k));
    double impulse = 0.0;
    if (cfg.noise) {
      const double s_f = feedback_force_noise(m.mass, m.omega, m.kappa, m.gain, n_est);
      const double f_t = std::sqrt(m.S_T) * sqdt * gauss(rng_t);
      const double f_f = std::sqrt(s_f) * sqdt * gauss(rng_f);
      sum_ff2 += f_f * f_f;
      impulse = (f_t + f_f) * force_scale;
    }
    P += (-m.omega * Q - gamma * P) * dt + impulse;
    Q += m.omega * P * dt;
    if (!std::isfinite(Q) || !std::isfinite(P))
      throw NumericalError("SDE state became non-finite at step " + std::to_string(k));
    n_est += alpha * ((Q * Q + P * P - 2.0) / 4.0 - n_est);
    if (n_est < 0.0)
      n_est = 0.0;
    sum_q2 += Q * Q;
    sum_p2 += P * P;
    sum_n += n_est;
    if (cfg.record && k % cfg.decimate == 0)
      record(k);
  }
  const double ns = static_cast<double>(std::max<std::size_t>(tr.steps, 1));
  tr.mean_q2 = sum_q2 / ns;
  tr.mean_p2 = sum_p2 / ns;
  tr.mean_n_est = sum_n / ns;
  tr.feedback_noise = sum_ff2 / (ns * dt);
  if (cfg.record) {
    tr.q.resize(tr.Q.size());
    for (std::size_t i = 0; i < tr.Q.size(); ++i)
      tr.q[i] = m.ell * tr.Q[i];
  }
  return tr;
}

inline Trajectory simulate(const SdeModel &m, const SimulationSettings &cfg) {
  return simulate_indexed(m, cfg, 0);
}

/// I_h = kappa Q + sqrt(kappa) xi on the recorded samples, with xi white
/// noise of variance 1/dt_sample.
inline std::vector<double> homodyne_current(const Trajectory &tr, double chi, double flux,
                                            std::uint64_t seed) {
  const double kappa = chi * chi * flux;
  const double dts = tr.dt * static_cast<double>(tr.decimate);
  auto rng = make_engine(seed, tr.index, stream_homodyne);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> out(tr.Q.size());
  const double noise = std::sqrt(kappa / dts);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = kappa * tr.Q[i] + noise * gauss(rng);
  return out;
}

/// Position inferred from the homodyne current, l I_h / kappa.
inline std::vector<double> measured_position(const std::vector<double> &current, double ell,
                                             double kappa) {
  std::vector<double> q(current.size());
  for (std::size_t i = 0; i < q.size(); ++i)
    q[i] = ell * current[i] / kappa;
  return q;
}

struct EnsembleStats {
  std::vector<double> t;
  std::vector<double> mean_Q, var_Q, mean_P, var_P, mean_n, var_n;
  std::vector<double> traj_mean_q2; // per-trajectory time averages
  std::vector<double> traj_mean_p2;
  std::vector<double> traj_mean_n;
  std::size_t n_traj = 0;
};

/// n_traj independent trajectories; reduction runs in index order so the
/// result does not depend on `threads`.
inline EnsembleStats ensemble(const SdeModel &m, const SimulationSettings &cfg, std::size_t n_traj,
                              unsigned threads = 1) {
  require(n_traj >= 1, "n_traj must be >= 1");
  std::vector<Trajectory> runs(n_traj);
  parallel_for(n_traj, threads, [&](std::size_t i) { runs[i] = simulate_indexed(m, cfg, i); });

  EnsembleStats st;
  st.n_traj = n_traj;
  const std::size_t len = runs[0].t.size();
  st.t = runs[0].t;
  for (auto *v : {&st.mean_Q, &st.var_Q, &st.mean_P, &st.var_P, &st.mean_n, &st.var_n})
    v->assign(len, 0.0);
  for (const auto &r : runs) {
    st.traj_mean_q2.push_back(r.mean_q2);
    st.traj_mean_p2.push_back(r.mean_p2);
    st.traj_mean_n.push_back(r.mean_n_est);
    for (std::size_t k = 0; k < len; ++k) {
      st.mean_Q[k] += r.Q[k];
      st.mean_P[k] += r.P[k];
      st.mean_n[k] += r.n_est[k];
    }
  }
  const double n = static_cast<double>(n_traj);
  for (std::size_t k = 0; k < len; ++k) {
    st.mean_Q[k] /= n;
    st.mean_P[k] /= n;
    st.mean_n[k] /= n;
  }
  if (n_traj > 1) {
    for (const auto &r : runs)
      for (std::size_t k = 0; k < len; ++k) {
        st.var_Q[k] += (r.Q[k] - st.mean_Q[k]) * (r.Q[k] - st.mean_Q[k]);
        st.var_P[k] += (r.P[k] - st.mean_P[k]) * (r.P[k] - st.mean_P[k]);
        st.var_n[k] += (r.n_est[k] - st.mean_n[k]) * (r.n_est[k] - st.mean_n[k]);
      }
    for (std::size_t k = 0; k < len; ++k) {
      st.var_Q[k] /= n - 1.0;
      st.var_P[k] /= n - 1.0;
      st.var_n[k] /= n - 1.0;
    }
  }
  return st;
}

/// Steady state x = N + 1/2 of the SDE's own energy balance,
/// kappa(12G - 27G^2) x^2 + Gamma0 x = D' + 27 kappa G^2 / 4,
/// which differs from the thermal-closure ODE because Gamma depends on the
/// mean occupation rather than on N itself.
inline double sde_steady_state(const SdeModel &m) {
  const double dp = m.S_T / (2.0 * m.mass * units::hbar * m.omega);
  const double a = m.kappa * (12.0 * m.gain - 27.0 * m.gain * m.gain);
  const double c = dp + 27.0 * m.kappa * m.gain * m.gain / 4.0;
  double x = 0.0;
  if (a == 0.0)
    x = c / m.gamma0;
  else
    x = 2.0 * c / (m.gamma0 + std::sqrt(m.gamma0 * m.gamma0 + 4.0 * a * c));
  return x - 0.5;
}

} // namespace levicool
