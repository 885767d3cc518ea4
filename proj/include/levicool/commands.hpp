#pragma once

// Subcommand implementations. Each one reads an ExperimentConfig, computes,
// and writes its files into an OutputSet; run_command() adds the manifest
// and removes partial output when something throws.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "levicool/config.hpp"
#include "levicool/cooling.hpp"
#include "levicool/errors.hpp"
#include "levicool/io.hpp"
#include "levicool/manifest.hpp"
#include "levicool/oracle.hpp"
#include "levicool/params.hpp"
#include "levicool/spectra.hpp"
#include "levicool/stochastic.hpp"

namespace levicool {

using nlohmann::json;

struct RunContext {
  std::optional<ExperimentConfig> config;
  std::uint64_t seed = default_seed;
  unsigned threads = 1;
  bool plot = false;
  std::string command_line;

  const ExperimentConfig &require_config(const char *command) const {
    if (!config)
      throw ValidationError(std::string(command) + " needs --config");
    return *config;
  }
};

struct CommandReport {
  std::vector<std::string> warnings;
  std::string summary; // printed to stdout
};

namespace detail {

inline std::string fmt(double v, const char *f = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Value with unit and provenance: the formula it came from and a hash of
// the numbers that went into it.
inline json quantity(double value, const char *unit, const char *formula,
                     std::initializer_list<double> inputs) {
  std::string key;
  for (double x : inputs)
    key += format_double(x) + ";";
  return {{"value", value}, {"unit", unit}, {"formula", formula}, {"inputs", hex64(fnv1a(key))}};
}

inline void add_system_warnings(const System &s, const GasEnvironment &gas, CommandReport &r) {
  for (const auto &w : s.warnings)
    r.warnings.push_back(w);
  const auto kick = kick_validity(gas, s.modes.z);
  if (!kick.valid)
    r.warnings.push_back("gas kick ratio " + fmt(kick.ratio, "%.3g") +
                         " >= 1: single-collision kicks exceed the zero-point momentum");
  else if (kick.ratio > 0.5)
    r.warnings.push_back("gas kick ratio " + fmt(kick.ratio, "%.3g") +
                         " is close to 1; the diffusive gas model is marginal");
}

inline json kick_json(const KickValidity &k) {
  return {{"momentum_kick", {{"value", k.momentum_kick}, {"unit", "kg m/s"}}},
          {"ratio", k.ratio},
          {"valid", k.valid}};
}

} // namespace detail

// ---------------------------------------------------------------- rates

inline CommandReport cmd_rates(const RunContext &ctx, OutputSet &out) {
  using detail::quantity;
  const auto &cfg = ctx.require_config("rates");
  const Experiment e = to_experiment(cfg);
  const System s = derive_system(e);
  const auto op = operating_point(s, e.gas, e.feedback.gain);
  const auto &p = s.particle;
  const auto &t = s.trap;
  const auto &m = s.modes;
  const auto &sc = s.scattering;
  const auto &c = op.coeffs;
  CommandReport r;
  detail::add_system_warnings(s, e.gas, r);

  json doc;
  doc["mode"] = e.calibration ? "calibrated" : "forward";
  doc["config_hash"] = config_hash(cfg);
  doc["particle"] = {
      {"volume", quantity(p.volume, "m^3", "4/3 pi r^3", {p.radius})},
      {"mass", quantity(p.mass, "kg", "rho V", {p.density, p.volume})},
      {"clausius_mossotti", quantity(p.clausius_mossotti, "1", "3 (eps_r - 1)/(eps_r + 2)", {p.permittivity})},
  };
  doc["trap"] = {
      {"waist", quantity(t.waist, "m", e.calibration ? "w0 = sqrt(2) z_R omega_z / omega_y" : "input", {t.waist})},
      {"rayleigh_range", quantity(t.rayleigh_range, "m", "pi w0^2 / lambda", {t.waist, t.wavelength})},
      {"field_sq", quantity(t.field_sq, "V^2/m^2", e.calibration ? "m z_R^2 omega_z^2 / (eps_c eps0 V)" : "4 P / (pi w0^2 eps0 c)",
                            {t.waist, t.power, p.mass})},
      {"implied_power", quantity(t.implied_power(), "W", "E0^2 eps0 c pi w0^2 / 4", {t.field_sq, t.waist})},
  };
  json modes;
  for (const auto *mode : {&m.x, &m.y, &m.z}) {
    const char *name = mode->axis == Axis::x ? "x" : mode->axis == Axis::y ? "y" : "z";
    const char *formula = mode->axis == Axis::z ? "sqrt(eps_c eps0 E0^2 V / (m z_R^2))"
                                                : "sqrt(2 eps_c eps0 E0^2 V / (m w0^2))";
    modes[name] = {{"omega", quantity(mode->omega, "rad/s", formula, {t.field_sq, p.mass})},
                   {"frequency", quantity(units::hertz(mode->omega), "Hz", "omega / 2 pi", {mode->omega})},
                   {"ell", quantity(mode->ell, "m", "sqrt(hbar / (2 m omega))", {p.mass, mode->omega})}};
  }
  doc["modes"] = modes;
  doc["probe"] = {
      {"flux", quantity(s.flux, "1/s", "P_p / (hbar omega_p)", {s.probe.power, s.probe.wavelength})},
      {"alpha", quantity(s.probe.alpha(), "1", "sqrt(Phi / dw)", {s.flux, s.probe.linewidth})},
      {"waist", quantity(s.probe.waist, "m", "input or trap waist", {s.probe.waist})},
      {"g_x", quantity(s.couplings[0], "rad/s", "2 V eps_c omega_p dw x0 l_x / (pi c z_R^2)", {s.probe.offset[0]})},
      {"g_y", quantity(s.couplings[1], "rad/s", "2 V eps_c omega_p dw y0 l_y / (pi c z_R^2)", {s.probe.offset[1]})},
      {"g_z", quantity(s.couplings[2], "rad/s", "V eps_c omega_p dw z0 l_z / (pi c z_R^2)", {s.probe.offset[2]})},
      {"chi", quantity(s.chi, "1", e.feedback.chi > 0 ? "input" : "4 g_z dt", {s.chi})},
      {"kappa", quantity(s.kappa, "1/s", "chi^2 Phi", {s.chi, s.flux})},
  };
  doc["scattering"] = {
      {"A_t", quantity(sc.trap_heating, "1/s", "14 omega_t^5 I_t eps_c^2 V^2 l_z^2 / (60 pi hbar c^6)", {t.field_sq, m.z.ell})},
      {"B", quantity(sc.probe_loss, "1/s", "omega_p^4 eps_c^2 V^2 dw / (24 pi^3 w_p^2 c^4)", {s.probe.power, s.probe.linewidth})},
      {"A_p", quantity(sc.probe_heating, "1/s", "2 alpha^2 B 7 omega_p^2 l_z^2 / (5 c^2)", {sc.probe_loss, s.probe.alpha()})},
  };
  doc["gas"] = {
      {"pressure", quantity(e.gas.pressure, "Pa", "input", {e.gas.pressure})},
      {"temperature", quantity(e.gas.temperature, "K", "input", {e.gas.temperature})},
      {"damping_model", e.gas.model == DampingModel::stokes ? "stokes" : "calibrated"},
      {"knudsen", quantity(op.damping.knudsen, "1", "lambda_mfp / r", {e.gas.pressure, p.radius})},
      {"correction", quantity(op.damping.correction, "1", "0.619/(0.619+Kn) (1 + 0.31Kn/(0.785+1.152Kn+Kn^2))", {op.damping.knudsen})},
      {"friction", quantity(op.damping.friction, "kg/s", "m Gamma0", {op.damping.gamma0, p.mass})},
      {"gamma0", quantity(op.damping.gamma0, "rad/s", e.gas.model == DampingModel::stokes ? "6 pi mu r c_Kn / m" : "(r/70nm) 2pi 1MHz c_Kn'", {e.gas.pressure, p.radius})},
      {"D_p", quantity(op.brownian.momentum_diffusion, "1/s", "2 eta_f k_B T l_z^2 / hbar^2", {op.damping.friction, e.gas.temperature})},
      {"D_q", quantity(op.brownian.position_diffusion, "1/s", "eta_f hbar^2 / (24 k_B T m^2 l_z^2)", {op.damping.friction, e.gas.temperature})},
      {"kick_validity", detail::kick_json(kick_validity(e.gas, m.z))},
  };
  doc["operating_point"] = {
      {"gain", quantity(op.gain, "1", "input", {op.gain})},
      {"decoherence", quantity(op.decoherence, "1/s", "D_p + A_t + A_p", {op.brownian.momentum_diffusion, s.optical_heating()})},
      {"diffusion", quantity(op.diffusion, "1/s", "D_p' + D_q", {op.decoherence, op.brownian.position_diffusion})},
      {"n0", quantity(op.n0, "phonons", "D_p' / Gamma0", {op.decoherence, op.damping.gamma0})},
      {"n0_gas", quantity(op.n0_gas, "phonons", "D_p / Gamma0", {op.brownian.momentum_diffusion, op.damping.gamma0})},
      {"n0_optical", quantity(op.n0_optical, "phonons", "(A_t + A_p) / Gamma0", {s.optical_heating(), op.damping.gamma0})},
      {"J", quantity(c.J, "1/s", "(12G - 54G^2) chi^2 Phi", {op.gain, s.kappa})},
      {"K", quantity(c.K, "1/s", "Gamma0 + J", {op.damping.gamma0, c.J})},
      {"L", quantity(c.L, "1/s", "D - J/2 - Gamma0/2", {op.diffusion, c.J, op.damping.gamma0})},
      {"feedback_heats", c.heating},
  };
  try {
    const double nss = steady_state_exact(c.J, c.K, c.L);
    const auto nm = noise_model(s, op, nss);
    doc["operating_point"]["n_ss"] = quantity(nss, "phonons", "2L / ((J+K) + sqrt((J+K)^2 + 8JL))", {c.J, c.K, c.L});
    doc["operating_point"]["modulation"] =
        quantity(trap_modulation(op.gain, s.kappa, nss, m.z.omega), "1", "G kappa N / omega_z", {op.gain, s.kappa, nss});
    doc["force_noise"] = {
        {"S_T", quantity(nm.S_T, "N^2 s", "2 m hbar omega_z D_p'", {p.mass, op.decoherence})},
        {"S_F", quantity(nm.S_F, "N^2 s", "27 m hbar omega_z kappa G^2 (2N^2 + 2N + 1)", {p.mass, s.kappa, op.gain, nss})},
        {"S_S0", quantity(shot_noise_dc({p.mass, m.z.omega, nm.gamma(), m.z.ell, s.kappa, 0, 0}), "N^2 s",
                          "(m l_z omega_z^2)^2 / kappa", {p.mass, m.z.ell, s.kappa})},
        {"delta_gamma", quantity(nm.delta_gamma, "rad/s", "12 kappa G (N + 1/2)", {s.kappa, op.gain, nss})},
    };
  } catch (const NumericalError &err) {
    doc["operating_point"]["n_ss"] = nullptr;
    r.warnings.push_back(err.what());
  }
  doc["assumptions"] = json::array({"A_p from the coherent-amplitude linearization of the probe scattering term",
                                    "z motion treated as an independent 1D oscillator"});
  doc["warnings"] = r.warnings;
  out.write_json("rates.json", doc);

  std::ostringstream sum;
  sum << "f_z = " << detail::fmt(units::hertz(m.z.omega)) << " Hz, f_y = " << detail::fmt(units::hertz(m.y.omega))
      << " Hz, kappa = " << detail::fmt(s.kappa) << " 1/s, A_t = " << detail::fmt(sc.trap_heating)
      << " 1/s, A_p = " << detail::fmt(sc.probe_heating) << " 1/s, N0 = " << detail::fmt(op.n0) << "\n";
  r.summary = sum.str();
  return r;
}

// ---------------------------------------------------------------- cool

struct CoolOptions {
  std::optional<double> tmax; // s
  std::size_t points = 400;
  bool ode = false; // add an n_ode column from the numerical integrator
};

inline CommandReport cmd_cool(const RunContext &ctx, const CoolOptions &o, OutputSet &out) {
  const auto &cfg = ctx.require_config("cool");
  const Experiment e = to_experiment(cfg);
  const System s = derive_system(e);
  const auto op = operating_point(s, e.gas, e.feedback.gain);
  const auto &c = op.coeffs;
  require(o.points >= 2, "--points must be >= 2");
  CommandReport r;
  detail::add_system_warnings(s, e.gas, r);

  double tmax = o.tmax.value_or(cfg.number_or("simulation.cool_time", 0.0));
  if (tmax <= 0.0) {
    const auto probe = evolve_closed(op.n0, c.J, c.K, c.L, {0.0});
    tmax = 10.0 * probe.tau;
    require(std::isfinite(tmax) && tmax > 0.0, "cannot choose a cooling horizon; pass --tmax");
  }
  const auto grid = linspace(0.0, tmax, o.points);
  const auto curve = evolve_closed(op.n0, c.J, c.K, c.L, grid);
  for (const auto &w : curve.warnings)
    r.warnings.push_back(w);
  const double m0 = trap_modulation(op.gain, s.kappa, op.n0, s.modes.z.omega);
  if (m0 > e.feedback.modulation_max)
    r.warnings.push_back("initial trap modulation " + detail::fmt(m0, "%.3g") + " exceeds the cap " +
                         detail::fmt(e.feedback.modulation_max, "%.3g") + "; see sweep/feasibility for capped gains");

  Table tab;
  tab.columns = {{"t_s", curve.t}, {"n", curve.n}};
  if (o.ode) {
    const auto num = evolve_ode(op.n0, c.J, c.K, c.L, grid, 1e-9);
    tab.columns.push_back({"n_ode", num.n});
  }
  out.write_csv("cooling.csv", tab);

  static const char *branch_names[] = {"tanh", "coth", "fixed", "linear"};
  json doc = {{"n0", curve.n0},
              {"n_ss", curve.n_ss},
              {"tau_s", curve.tau},
              {"theta", curve.theta},
              {"branch", branch_names[static_cast<int>(curve.branch)]},
              {"J_per_s", c.J},
              {"K_per_s", c.K},
              {"L_per_s", c.L},
              {"gain", op.gain},
              {"pressure_mbar", e.gas.pressure / units::mbar},
              {"initial_modulation", m0},
              {"tmax_s", tmax}};
  if (std::isfinite(curve.theta_naive))
    doc["theta_naive"] = curve.theta_naive;
  out.write_json("cooling.json", doc);
  if (ctx.plot)
    out.write_svg("cooling.svg", {"Phonon cooling", "t [s]", "<N>", false, true, {{"closed form", curve.t, curve.n}}});
  r.summary = "N0 = " + detail::fmt(curve.n0) + " -> N_ss = " + detail::fmt(curve.n_ss) + ", tau = " +
              detail::fmt(curve.tau) + " s\n";
  return r;
}

// ---------------------------------------------------------------- sweep

struct SweepOptions {
  std::optional<double> pmin_mbar, pmax_mbar;
  std::optional<std::size_t> points;
  std::string policy = "optimal-capped"; // fixed-gain | fixed-modulation | optimal-capped
  std::optional<double> value;           // G or M; defaults from [feedback]
};

inline GainPolicy parse_policy(const std::string &name, std::optional<double> value,
                               const Experiment &e) {
  if (name == "fixed-gain")
    return {GainPolicyKind::fixed_gain, value.value_or(e.feedback.gain)};
  if (name == "fixed-modulation")
    return {GainPolicyKind::fixed_modulation, value.value_or(e.feedback.modulation_max)};
  if (name == "optimal-capped")
    return {GainPolicyKind::optimal_capped, value.value_or(e.feedback.modulation_max)};
  throw ValidationError("--policy must be fixed-gain, fixed-modulation or optimal-capped");
}

inline CommandReport cmd_sweep(const RunContext &ctx, const SweepOptions &o, OutputSet &out) {
  const auto &cfg = ctx.require_config("sweep");
  const Experiment e = to_experiment(cfg);
  const System s = derive_system(e);
  CommandReport r;
  detail::add_system_warnings(s, e.gas, r);
  const double lo = o.pmin_mbar.value_or(cfg.number_or("simulation.sweep_min", 1e-8 * units::mbar) / units::mbar);
  const double hi = o.pmax_mbar.value_or(cfg.number_or("simulation.sweep_max", 10.0 * units::mbar) / units::mbar);
  const auto n = o.points.value_or(static_cast<std::size_t>(cfg.number_or("simulation.sweep_points", 61)));
  require(lo > 0.0 && hi > lo, "sweep range must satisfy 0 < pmin < pmax");
  require(n >= 2, "sweep needs at least 2 points");
  const auto policy = parse_policy(o.policy, o.value, e);
  const auto res = pressure_sweep(s, e.gas, logspace(lo, hi, n), policy, ctx.threads);

  Table tab;
  tab.columns = {{"pressure_mbar", {}}, {"n_ss", {}}, {"gain", {}}, {"modulation", {}}};
  tab.text_names = {"regime", "status"};
  tab.text_columns.resize(2);
  std::size_t failed = 0;
  for (const auto &p : res.points) {
    const bool ok = p.error.empty();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    tab.columns[0].values.push_back(p.pressure_mbar);
    tab.columns[1].values.push_back(p.n_ss > 0.0 ? p.n_ss : nan);
    tab.columns[2].values.push_back(p.gain);
    tab.columns[3].values.push_back(p.modulation);
    tab.text_columns[0].push_back(regime_name(p.regime));
    tab.text_columns[1].push_back(ok ? "ok" : "failed");
    if (!ok) {
      ++failed;
      r.warnings.push_back("P = " + detail::fmt(p.pressure_mbar) + " mbar: " + p.error);
    }
  }
  out.write_csv("sweep.csv", tab);
  if (ctx.plot)
    out.write_svg("sweep.svg", {"Steady-state occupation", "pressure [mbar]", "N_ss", true, true,
                                {{"N_ss", tab.columns[0].values, tab.columns[1].values}}});
  r.summary = std::to_string(res.points.size()) + " pressures, " + std::to_string(failed) + " failed\n";
  return r;
}

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
  std::optional<double> duration, dt; // s
  std::optional<std::size_t> decimate, trajectories;
};

inline SimulationSettings simulation_settings(const ExperimentConfig &cfg, const SimulateOptions &o,
                                              std::uint64_t seed) {
  SimulationSettings st;
  st.duration = o.duration.value_or(cfg.number_or("simulation.duration", 10e-3));
  st.dt = o.dt.value_or(cfg.number_or("simulation.dt", 0.0));
  st.decimate = o.decimate.value_or(static_cast<std::size_t>(cfg.number_or("simulation.decimate", 1)));
  st.seed = seed;
  require(st.duration > 0.0, "duration must be > 0");
  require(st.decimate >= 1, "decimate must be >= 1");
  return st;
}

inline CommandReport cmd_simulate(const RunContext &ctx, const SimulateOptions &o, OutputSet &out) {
  const auto &cfg = ctx.require_config("simulate");
  const Experiment e = to_experiment(cfg);
  const System s = derive_system(e);
  CommandReport r;
  detail::add_system_warnings(s, e.gas, r);
  const SdeModel model = sde_model(s, e.gas, e.feedback.gain);
  const auto st = simulation_settings(cfg, o, ctx.seed);
  const auto n_traj = o.trajectories.value_or(static_cast<std::size_t>(cfg.number_or("simulation.trajectories", 1)));
  require(n_traj >= 1, "trajectories must be >= 1");

  const Trajectory tr = simulate(model, st);
  const auto current = homodyne_current(tr, s.chi, s.flux, ctx.seed);
  const std::vector<double> q_meas = measured_position(current, model.ell, model.kappa);
  out.write_csv("traj.csv", {{{"t_s", tr.t}, {"Q", tr.Q}, {"P", tr.P}, {"q_m", tr.q}, {"I_h_per_s", current},
                              {"q_meas_m", q_meas}, {"n_est", tr.n_est}}});
  json side = {{"master_seed", tr.master_seed},
               {"trajectory_index", tr.index},
               {"sub_seeds", {{"init", tr.sub_seeds[0]}, {"thermal", tr.sub_seeds[1]},
                              {"feedback", tr.sub_seeds[2]}, {"homodyne", tr.sub_seeds[3]}}},
               {"dt_s", tr.dt},
               {"steps", tr.steps},
               {"decimate", tr.decimate},
               {"duration_s", st.duration},
               {"model", {{"omega_rad_s", model.omega}, {"mass_kg", model.mass}, {"ell_m", model.ell},
                          {"gamma0_rad_s", model.gamma0}, {"kappa_per_s", model.kappa}, {"gain", model.gain},
                          {"S_T_N2s", model.S_T}, {"n0", model.n0}}},
               {"time_averages", {{"Q2", tr.mean_q2}, {"P2", tr.mean_p2}, {"n_est", tr.mean_n_est}}},
               {"sde_steady_state", sde_steady_state(model)}};

  if (n_traj > 1) {
    const auto ens = ensemble(model, st, n_traj, ctx.threads);
    out.write_csv("ensemble.csv", {{{"t_s", ens.t}, {"mean_Q", ens.mean_Q}, {"var_Q", ens.var_Q},
                                    {"mean_P", ens.mean_P}, {"var_P", ens.var_P}, {"mean_n", ens.mean_n},
                                    {"var_n", ens.var_n}}});
    side["ensemble_trajectories"] = n_traj;
  }
  out.write_json("traj.json", side);
  if (ctx.plot)
    out.write_svg("traj.svg", {"Trajectory", "t [s]", "q [m]", false, false, {{"q", tr.t, tr.q}}});
  r.summary = std::to_string(tr.steps) + " steps, <n_est> = " + detail::fmt(tr.mean_n_est) + "\n";
  return r;
}

// ---------------------------------------------------------------- psd / fit

struct PsdOptions {
  std::string input;          // CSV path
  std::string column = "q_m"; // signal column
  std::optional<double> calibration; // metres per signal unit
  std::size_t segments = 16;
  std::string window = "hann";
  std::optional<double> fmin, fmax; // Hz, fit band
  bool fit = true;
};

namespace detail {

inline std::optional<double> length_factor(const std::string &column) {
  const auto pos = column.rfind('_');
  if (pos == std::string::npos)
    return std::nullopt;
  const std::string unit = column.substr(pos + 1);
  for (const auto &u : suffixes(Dim::length))
    if (unit == u.suffix)
      return u.factor;
  return std::nullopt;
}

inline std::pair<std::vector<double>, double> read_series(const PsdOptions &o) {
  const CsvData csv = read_csv(o.input);
  int tcol = -1;
  double tfac = 1.0;
  for (const auto &u : suffixes(Dim::time)) {
    const int i = csv.find(std::string("t_") + u.suffix);
    if (i >= 0) {
      tcol = i;
      tfac = u.factor;
      break;
    }
  }
  if (tcol < 0)
    throw ValidationError(o.input + ": no time column (t_s, t_ms, t_us or t_ns)");
  std::vector<double> sig = csv.column(o.column);
  double factor = 1.0;
  if (o.calibration) {
    factor = *o.calibration;
  } else if (auto f = length_factor(o.column)) {
    factor = *f;
  } else {
    throw ValidationError("column '" + o.column +
                          "' has no length unit; pass --calibration METRES_PER_UNIT");
  }
  const auto &t = csv.columns[static_cast<std::size_t>(tcol)];
  require(t.size() >= 32, o.input + ": too few samples");
  const double dt = (t[1] - t[0]) * tfac;
  require(dt > 0.0, o.input + ": time column must increase");
  const double span = (t.back() - t.front()) * tfac;
  if (std::abs(span / (dt * static_cast<double>(t.size() - 1)) - 1.0) > 1e-6)
    throw ValidationError(o.input + ": samples are not uniformly spaced");
  for (auto &v : sig) {
    if (!std::isfinite(v))
      throw ValidationError(o.input + ": non-numeric value in column " + o.column);
    v *= factor;
  }
  return {sig, dt};
}

inline json fit_json(const LorentzFit &f) {
  return {{"omega_rad_s", f.omega},
          {"omega_err_rad_s", f.omega_err},
          {"frequency_Hz", units::hertz(f.omega)},
          {"gamma_rad_s", f.gamma},
          {"gamma_err_rad_s", f.gamma_err},
          {"amplitude_m2_per_s3", f.amplitude},
          {"floor_m2_per_Hz", f.floor},
          {"variance_m2", f.variance},
          {"n_ss", std::isfinite(f.n_ss) ? json(f.n_ss) : json(nullptr)},
          {"residual_rms_log", f.residual_rms},
          {"log_bias", f.log_bias},
          {"iterations", f.iterations},
          {"points", f.points},
          {"weighting", "uniform in log PSD"}};
}

inline Spectrum read_spectrum(const std::string &path) {
  const CsvData csv = read_csv(path);
  Spectrum s;
  s.freq_hz = csv.column("freq_Hz");
  s.psd = csv.column("psd_m2_per_Hz");
  return s;
}

// Fit band defaults to +-30% around the configured z frequency, or the
// whole spectrum without a config.
inline std::pair<double, double> fit_band(const RunContext &ctx, std::optional<double> fmin,
                                          std::optional<double> fmax) {
  double lo = 0.0, hi = std::numeric_limits<double>::infinity();
  if (ctx.config) {
    const System s = derive_system(to_experiment(*ctx.config));
    const double fz = units::hertz(s.modes.z.omega);
    lo = 0.7 * fz;
    hi = 1.3 * fz;
  }
  return {fmin.value_or(lo), fmax.value_or(hi)};
}

} // namespace detail

inline CommandReport cmd_psd(const RunContext &ctx, const PsdOptions &o, OutputSet &out) {
  require(!o.input.empty(), "psd needs --input");
  require(o.window == "hann" || o.window == "rectangular", "--window must be hann or rectangular");
  CommandReport r;
  const auto [series, dt] = detail::read_series(o);
  const Spectrum spec = estimate_psd(series, dt, o.window == "hann" ? Window::hann : Window::rectangular, o.segments);
  out.write_csv("spectrum.csv", {{{"freq_Hz", spec.freq_hz}, {"psd_m2_per_Hz", spec.psd}}});
  r.summary = std::to_string(spec.freq_hz.size()) + " bins, " + std::to_string(spec.segments) + " segments (" +
              window_name(spec.window) + ")\n";
  if (!o.fit)
    return r;

  const auto [lo, hi] = detail::fit_band(ctx, o.fmin, o.fmax);
  std::optional<double> mass;
  std::optional<System> sys;
  if (ctx.config) {
    sys = derive_system(to_experiment(*ctx.config));
    mass = sys->particle.mass;
  }
  const LorentzFit fit = fit_lorentzian(spec, std::nullopt, lo, hi, mass);
  json doc = detail::fit_json(fit);
  doc["band_Hz"] = {lo, hi};
  doc["spectrum"] = {{"window", window_name(spec.window)}, {"segments", spec.segments},
                     {"segment_length", spec.segment_length}, {"overlap", spec.overlap}};
  out.write_json("fit.json", doc);

  std::vector<double> model(spec.freq_hz.size());
  for (std::size_t k = 0; k < model.size(); ++k)
    model[k] = detail::lorentz_one_sided(units::two_pi * spec.freq_hz[k], fit.omega, fit.gamma, fit.amplitude, fit.floor);

  if (sys) {
    // Force-noise budget from the fit: S_T from the config, S_F is the
    // remainder of the fitted drive m^2 A, S_S from the fitted floor.
    const Experiment e = to_experiment(*ctx.config);
    const auto op = operating_point(*sys, e.gas, e.feedback.gain);
    const double m = sys->particle.mass;
    const double s_t = 2.0 * m * units::hbar * sys->modes.z.omega * op.decoherence;
    const double drive = m * m * fit.amplitude;
    if (drive < s_t)
      r.warnings.push_back("fitted drive is below the configured thermal force noise; S_F clamped to 0");
    const auto grid = linspace(0.5 * fit.omega, 1.5 * fit.omega, 401);
    Table sense;
    sense.columns = {{"omega_rad_s", grid}, {"S_T_N2_per_Hz", {}}, {"S_F_N2_per_Hz", {}}, {"S_S_N2_per_Hz", {}}, {"total_N2_per_Hz", {}}};
    for (double w : grid) {
      const double ss = fit.floor / susceptibility_sq(w, m, fit.omega, fit.gamma);
      const double sf = std::max(drive - s_t, 0.0);
      sense.columns[1].values.push_back(s_t);
      sense.columns[2].values.push_back(sf);
      sense.columns[3].values.push_back(ss);
      sense.columns[4].values.push_back(s_t + sf + ss);
    }
    out.write_csv("sense.csv", sense);
  } else {
    r.warnings.push_back("no --config: particle mass unknown, sense.csv and n_ss not produced");
  }
  if (ctx.plot)
    out.write_svg("spectrum.svg", {"Position PSD", "f [Hz]", "S_q [m^2/Hz]", true, true,
                                   {{"estimate", spec.freq_hz, spec.psd}, {"fit", spec.freq_hz, model}}});
  r.summary += "f_z = " + detail::fmt(units::hertz(fit.omega)) + " Hz, Gamma = " + detail::fmt(fit.gamma) + " rad/s\n";
  return r;
}

struct FitOptions {
  std::string input; // spectrum.csv
  std::optional<double> fmin, fmax;
  std::size_t segments = 0; // Hann segments behind the spectrum; 0 skips the log-bias correction
};

inline CommandReport cmd_fit(const RunContext &ctx, const FitOptions &o, OutputSet &out) {
  require(!o.input.empty(), "fit needs --input");
  CommandReport r;
  Spectrum spec = detail::read_spectrum(o.input);
  spec.segments = o.segments;
  const auto [lo, hi] = detail::fit_band(ctx, o.fmin, o.fmax);
  std::optional<double> mass;
  if (ctx.config)
    mass = derive_system(to_experiment(*ctx.config)).particle.mass;
  const LorentzFit fit = fit_lorentzian(spec, std::nullopt, lo, hi, mass);
  json doc = detail::fit_json(fit);
  doc["band_Hz"] = {lo, hi};
  doc["input"] = o.input;
  out.write_json("fit.json", doc);
  r.summary = "f_z = " + detail::fmt(units::hertz(fit.omega)) + " Hz, Gamma = " + detail::fmt(fit.gamma) + " rad/s\n";
  return r;
}

// ---------------------------------------------------------------- sense

struct SenseOptions {
  bool scan_power = false;
  double p_lo = 1e-6, p_hi = 10.0; // W
  std::size_t scan_points = 241;
  std::size_t points = 401;
};

inline CommandReport cmd_sense(const RunContext &ctx, const SenseOptions &o, OutputSet &out) {
  const auto &cfg = ctx.require_config("sense");
  const Experiment e = to_experiment(cfg);
  const System s = derive_system(e);
  CommandReport r;
  detail::add_system_warnings(s, e.gas, r);
  const auto op = operating_point(s, e.gas, e.feedback.gain);
  const double nss = steady_state_exact(op.coeffs.J, op.coeffs.K, op.coeffs.L);
  const auto nm = noise_model(s, op, nss);
  const OscillatorParams p{s.particle.mass, s.modes.z.omega, nm.gamma(), s.modes.z.ell, s.kappa, nm.S_T, nm.S_F};

  Table tab;
  const auto grid = linspace(0.5 * p.omega, 1.5 * p.omega, o.points);
  tab.columns = {{"omega_rad_s", grid}, {"S_T_N2_per_Hz", {}}, {"S_F_N2_per_Hz", {}}, {"S_S_N2_per_Hz", {}}, {"total_N2_per_Hz", {}}};
  for (double w : grid) {
    const auto f = force_noise_psd(w, p);
    tab.columns[1].values.push_back(f.S_T);
    tab.columns[2].values.push_back(f.S_F);
    tab.columns[3].values.push_back(f.S_S);
    tab.columns[4].values.push_back(f.total);
  }
  out.write_csv("sense.csv", tab);

  const auto sql = sql_optimize(s, e.gas, o.p_lo, o.p_hi, o.scan_points);
  const auto wopt = optimal_frequency(p.omega, p.gamma);
  json doc = {
      {"operating_point", {{"gain", op.gain}, {"n_ss", nss}, {"gamma_rad_s", p.gamma},
                           {"optimal_omega_rad_s", wopt.omega}, {"overdamped", wopt.overdamped},
                           {"sensitivity_N_per_rtHz", std::sqrt(force_noise_psd(wopt.omega, p).total)}}},
      {"sql_closed_form", {{"flux_per_s", sql.flux_closed}, {"power_W", sql.power_closed},
                           {"sensitivity_N_per_rtHz", sql.sensitivity_closed}}},
      {"sql_numeric", {{"power_W", sql.power_numeric}, {"sensitivity_N_per_rtHz", sql.sensitivity_numeric},
                       {"scan_range_W", {o.p_lo, o.p_hi}}, {"scan_points", o.scan_points}}},
      {"gaps", {{"power", sql.power_gap}, {"sensitivity", sql.sensitivity_gap}}},
      {"flags", sql.flags}};
  out.write_json("sql.json", doc);
  for (const auto &f : sql.flags)
    r.warnings.push_back(f);

  if (o.scan_power) {
    Table scan;
    scan.columns = {{"power_W", {}}, {"sensitivity_N_per_rtHz", {}}, {"S_T_N2_per_Hz", {}}, {"S_F_N2_per_Hz", {}}, {"S_S_N2_per_Hz", {}}};
    for (const auto &pt : sql.scan) {
      scan.columns[0].values.push_back(pt.power);
      scan.columns[1].values.push_back(pt.sensitivity);
      scan.columns[2].values.push_back(pt.S_T);
      scan.columns[3].values.push_back(pt.S_F);
      scan.columns[4].values.push_back(pt.S_S);
    }
    out.write_csv("sql_scan.csv", scan);
    if (ctx.plot)
      out.write_svg("sql_scan.svg", {"Force sensitivity vs probe power", "P [W]", "sqrt(S_F) [N/rtHz]", true, true,
                                     {{"total", scan.columns[0].values, scan.columns[1].values}}});
  }
  if (ctx.plot) {
    std::vector<double> tot(grid.size());
    for (std::size_t i = 0; i < tot.size(); ++i)
      tot[i] = std::sqrt(tab.columns[4].values[i]);
    out.write_svg("sense.svg", {"Force noise", "omega [rad/s]", "sqrt(S) [N/rtHz]", false, true, {{"total", grid, tot}}});
  }
  r.summary = "SQL closed form: " + detail::fmt(sql.sensitivity_closed) + " N/rtHz at " +
              detail::fmt(sql.power_closed * 1e3) + " mW; numeric: " + detail::fmt(sql.sensitivity_numeric) +
              " N/rtHz at " + detail::fmt(sql.power_numeric * 1e3) + " mW\n";
  return r;
}

// ---------------------------------------------------------------- oracle

struct OracleOptions {
  std::optional<std::size_t> qsd_trajectories;
};

inline CommandReport cmd_oracle(const RunContext &ctx, const OracleOptions &o, OutputSet &out) {
  const ExperimentConfig empty;
  const OracleScenario sc = oracle_scenario(ctx.config ? *ctx.config : empty);
  CommandReport r;
  const int d = static_cast<int>(sc.dimension);
  const Generator gen = build_generator(sc.spec, d);
  if (!gen.is_lindblad())
    r.warnings.push_back("no Lindblad form for these rates; using the direct generator");
  const auto rho0 = thermal_state(d, sc.initial_occupation, true);
  const auto run = evolve(rho0, gen, sc.duration, 0.0, sc.checkpoints);
  const auto coeffs = coefficients_of(sc.spec);

  Table mom;
  mom.columns = {{"t", {}}, {"n", {}}, {"n2", {}}, {"closure_residual", {}}, {"trace_error", {}}};
  std::vector<double> ts;
  for (const auto &m : run.moments) {
    ts.push_back(m.t);
    mom.columns[0].values.push_back(m.t);
    mom.columns[1].values.push_back(m.n);
    mom.columns[2].values.push_back(m.n2);
    mom.columns[3].values.push_back(m.closure);
    mom.columns[4].values.push_back(m.trace_error);
  }
  out.write_csv("oracle_moments.csv", mom);

  const auto pred = evolve_closed(run.moments.front().n, coeffs.J, coeffs.K, coeffs.L, ts);
  Table cmp;
  cmp.columns = {{"t", ts}, {"n_oracle", mom.columns[1].values}, {"n_closed", pred.n}, {"rel_dev", {}}};
  double worst = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double dev = std::abs(mom.columns[1].values[i] / pred.n[i] - 1.0);
    worst = std::max(worst, dev);
    cmp.columns[3].values.push_back(dev);
  }
  out.write_csv("oracle_compare.csv", cmp);

  const double rate_oracle = gen.phonon_rate(rho0);
  const double n = rho0.mean_n(), n2 = rho0.mean_n2();
  const double rate_moment = -coeffs.J * n2 - coeffs.K * n + coeffs.L;
  json doc = {{"dimension", d},
              {"initial_occupation", sc.initial_occupation},
              {"lindblad_form", gen.is_lindblad()},
              {"dt", run.dt},
              {"steps", run.steps},
              {"max_tail", run.max_tail},
              {"coefficients", {{"J", coeffs.J}, {"K", coeffs.K}, {"L", coeffs.L}}},
              {"initial_rate", {{"oracle", rate_oracle}, {"moment_equation", rate_moment},
                                {"rel_gap", std::abs(rate_oracle / rate_moment - 1.0)}}},
              {"max_rel_dev_closed_form", worst}};

  const std::size_t n_qsd = o.qsd_trajectories.value_or(sc.qsd_trajectories);
  if (n_qsd > 0) {
    const auto ens = qsd_ensemble(sc.spec, d, sc.initial_occupation, sc.duration, sc.qsd_dt,
                                  sc.checkpoints, n_qsd, ctx.seed, ctx.threads);
    Table q;
    q.columns = {{"t", ens.t}, {"mean_n", ens.mean_n}, {"stderr_n", ens.stderr_n}, {"n_master", {}}, {"z_score", {}}};
    double zmax = 0.0;
    for (std::size_t i = 0; i < ens.t.size(); ++i) {
      // Same checkpoint grid as the master-equation run.
      const double nm = mom.columns[1].values.at(i);
      const double z = ens.stderr_n[i] > 0.0 ? (ens.mean_n[i] - nm) / ens.stderr_n[i] : 0.0;
      zmax = std::max(zmax, std::abs(z));
      q.columns[3].values.push_back(nm);
      q.columns[4].values.push_back(z);
    }
    out.write_csv("qsd.csv", q);
    doc["qsd"] = {{"trajectories", n_qsd}, {"dt", sc.qsd_dt}, {"max_abs_z", zmax},
                  {"max_norm_error", ens.max_norm_error}, {"max_drift_scale", ens.max_drift_scale}};
  }
  out.write_json("oracle.json", doc);
  if (ctx.plot)
    out.write_svg("oracle.svg", {"Master equation vs moment equation", "t", "<N>", false, false,
                                 {{"oracle", ts, mom.columns[1].values}, {"closed form", ts, pred.n}}});
  r.summary = "max |n_oracle/n_closed - 1| = " + detail::fmt(worst, "%.3g") + "\n";
  return r;
}

// ---------------------------------------------------------------- driver

/// Runs `body`, writes manifest.json, and on failure removes everything the
/// command wrote before rethrowing.
inline CommandReport run_command(const std::string &name, const RunContext &ctx, OutputSet &out,
                                 const std::function<CommandReport(OutputSet &)> &body) {
  try {
    CommandReport r = body(out);
    RunManifest m;
    m.command = name;
    m.command_line = ctx.command_line;
    m.config_hash = ctx.config ? config_hash(*ctx.config) : "";
    m.seed = ctx.seed;
    m.threads = ctx.threads;
    m.warnings = r.warnings;
    write_manifest(out, m);
    return r;
  } catch (...) {
    out.rollback();
    throw;
  }
}

} // namespace levicool
