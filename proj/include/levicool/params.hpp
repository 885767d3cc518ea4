#pragma once

// Physical description of a levitated-nanoparticle experiment and every
// rate derived from it: trap frequencies, oscillator lengths, photon
// scattering, gas damping and diffusion, feedback coefficients.

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "levicool/errors.hpp"
#include "levicool/units.hpp"

namespace levicool {

struct NanoparticleSpec {
  double radius = 0.0;       // m
  double permittivity = 0.0; // relative, eps_r
  double density = 0.0;      // kg/m^3

  // Filled by derive_particle().
  double volume = 0.0;            // m^3
  double mass = 0.0;              // kg
  double clausius_mossotti = 0.0; // eps_c
};

inline double clausius_mossotti(double permittivity) {
  return 3.0 * (permittivity - 1.0) / (permittivity + 2.0);
}

inline NanoparticleSpec derive_particle(NanoparticleSpec p) {
  require(p.radius > 0.0, "particle.radius must be > 0");
  require(p.density > 0.0, "particle.density must be > 0");
  require(p.permittivity > 1.0,
          "particle.permittivity must be > 1 (eps_c degenerate at eps_r <= 1)");
  p.volume = 4.0 / 3.0 * units::pi * p.radius * p.radius * p.radius;
  p.mass = p.density * p.volume;
  p.clausius_mossotti = clausius_mossotti(p.permittivity);
  return p;
}

struct TrapBeamSpec {
  double wavelength = 0.0;       // m, vacuum
  double power = 0.0;            // W
  double waist = 0.0;            // m, w0
  double modulation_depth = 0.0; // M, fractional

  // Filled by derive_trap_beam() or calibrate_trap_beam().
  double rayleigh_range = 0.0; // m
  double field_sq = 0.0;       // E0^2 at focus, V^2/m^2

  double angular_frequency() const {
    return units::two_pi * units::c_light / wavelength;
  }
  /// Focal intensity E0^2 eps0 c / 2.
  double focal_intensity() const {
    return field_sq * units::epsilon0 * units::c_light / 2.0;
  }
  /// Beam power consistent with field_sq for a Gaussian focus.
  double implied_power() const {
    return focal_intensity() * units::pi * waist * waist / 2.0;
  }
};

/// Forward mode: waist and power known, focal field from the Gaussian
/// peak intensity 2P/(pi w0^2).
inline TrapBeamSpec derive_trap_beam(TrapBeamSpec t) {
  require(t.wavelength > 0.0, "trap.wavelength must be > 0");
  require(t.power >= 0.0, "trap.power must be >= 0");
  require(t.waist > 0.0, "trap.waist must be > 0");
  require(t.modulation_depth >= 0.0 && t.modulation_depth <= 1.0,
          "trap.modulation must lie in [0, 1]");
  t.rayleigh_range = units::pi * t.waist * t.waist / t.wavelength;
  const double intensity = 2.0 * t.power / (units::pi * t.waist * t.waist);
  t.field_sq = 2.0 * intensity / (units::epsilon0 * units::c_light);
  return t;
}

/// Calibration mode: solve waist and focal field from measured axial and
/// transverse frequencies. omega_y/omega_z = sqrt(2) z_R / w0 fixes the
/// waist; omega_z then fixes E0^2. The configured power is left untouched
/// and can be compared against implied_power().
inline TrapBeamSpec calibrate_trap_beam(TrapBeamSpec t, const NanoparticleSpec &particle,
                                        double omega_z, double omega_y) {
  require(t.wavelength > 0.0, "trap.wavelength must be > 0");
  require(omega_z > 0.0 && omega_y > 0.0, "calibration frequencies must be > 0");
  require(omega_y > omega_z, "calibration requires omega_y > omega_z");
  require(particle.mass > 0.0, "particle must be derived before trap calibration");
  const double zr_over_w0 = omega_y / (std::sqrt(2.0) * omega_z);
  t.waist = zr_over_w0 * t.wavelength / units::pi;
  t.rayleigh_range = units::pi * t.waist * t.waist / t.wavelength;
  t.field_sq = omega_z * omega_z * particle.mass * t.rayleigh_range * t.rayleigh_range /
               (particle.clausius_mossotti * units::epsilon0 * particle.volume);
  return t;
}

enum class Axis { x, y, z };

struct MechanicalMode {
  Axis axis = Axis::z;
  double omega = 0.0; // rad/s
  double ell = 0.0;   // m, sqrt(hbar / 2 m omega)
};

inline double oscillator_length(double mass, double omega) {
  return std::sqrt(units::hbar / (2.0 * mass * omega));
}

struct TrapModes {
  MechanicalMode x{Axis::x}, y{Axis::y}, z{Axis::z};
};

/// omega_z = sqrt(eps_c eps0 E0^2 V / (m z_R^2)),
/// omega_{x,y} = sqrt(2 eps_c eps0 E0^2 V / (m w0^2)).
inline TrapModes derive_trap(const TrapBeamSpec &trap, const NanoparticleSpec &particle) {
  require(particle.mass > 0.0, "particle must be derived before the trap");
  require(trap.rayleigh_range > 0.0 && trap.waist > 0.0, "trap beam must be derived");
  const double stiffness = particle.clausius_mossotti * units::epsilon0 * trap.field_sq *
                           particle.volume / particle.mass;
  TrapModes m;
  m.z.omega = std::sqrt(stiffness / (trap.rayleigh_range * trap.rayleigh_range));
  m.x.omega = std::sqrt(2.0 * stiffness / (trap.waist * trap.waist));
  m.y.omega = m.x.omega;
  for (auto *mode : {&m.x, &m.y, &m.z})
    mode->ell = mode->omega > 0.0 ? oscillator_length(particle.mass, mode->omega) : 0.0;
  return m;
}

struct ProbeBeamSpec {
  double wavelength = 0.0; // m
  double linewidth = 0.0;  // rad/s, detection bandwidth
  double power = 0.0;      // W
  double waist = 0.0;      // m
  std::array<double, 3> offset{0.0, 0.0, 0.0}; // focus offset from the trap, m

  double angular_frequency() const {
    return units::two_pi * units::c_light / wavelength;
  }
  /// Detected photon flux P/(hbar omega_p).
  double flux() const { return power / (units::hbar * angular_frequency()); }
  /// Coherent amplitude with alpha^2 * linewidth = flux.
  double alpha() const { return std::sqrt(flux() / linewidth); }
  double rayleigh_range() const { return units::pi * waist * waist / wavelength; }
};

inline void validate_probe(const ProbeBeamSpec &p) {
  require(p.wavelength > 0.0, "probe.wavelength must be > 0");
  require(p.linewidth > 0.0, "probe.linewidth must be > 0");
  require(p.power > 0.0, "probe.power must be > 0");
  require(p.waist > 0.0, "probe.waist must be > 0");
}

/// Linear optomechanical couplings g_j [rad/s] from a probe focus offset.
inline std::array<double, 3> optomechanical_couplings(const ProbeBeamSpec &probe,
                                                      const NanoparticleSpec &particle,
                                                      const TrapModes &modes) {
  const double zr2 = probe.rayleigh_range() * probe.rayleigh_range();
  const double pre = particle.volume * particle.clausius_mossotti *
                     probe.angular_frequency() * probe.linewidth / (units::pi * units::c_light);
  return {pre * 2.0 * probe.offset[0] * modes.x.ell / zr2,
          pre * 2.0 * probe.offset[1] * modes.y.ell / zr2,
          pre * probe.offset[2] * modes.z.ell / zr2};
}

enum class DampingModel {
  calibrated, // (r/70 nm) 2 pi 1 MHz / (0.619 + Kn) (1 + ...)
  stokes,     // 6 pi mu r / m * 0.619/(0.619 + Kn) (1 + ...)
};

struct GasEnvironment {
  double temperature = 300.0;               // K
  double pressure = 0.0;                    // Pa
  double viscosity = 1.81e-5;               // Pa s
  double mean_free_path_atm = 70e-9;        // m at 1 atm
  double molecule_mass = units::mass_n2;    // kg
  DampingModel model = DampingModel::calibrated;
};

struct GasDamping {
  double knudsen = 0.0;
  double correction = 0.0; // 0.619/(0.619+Kn) (1 + 0.31 Kn/(0.785 + 1.152 Kn + Kn^2))
  double friction = 0.0;   // eta_f, kg/s
  double gamma0 = 0.0;     // eta_f / m, rad/s
};

/// Rarefied-gas correction to Stokes drag; tends to 1 as Kn -> 0.
inline double knudsen_correction(double kn) {
  return 0.619 / (0.619 + kn) * (1.0 + 0.31 * kn / (0.785 + 1.152 * kn + kn * kn));
}

inline GasDamping gas_damping(const GasEnvironment &gas, const NanoparticleSpec &particle) {
  require(gas.pressure > 0.0, "gas.pressure must be > 0");
  require(particle.mass > 0.0, "particle must be derived before gas damping");
  GasDamping d;
  const double mfp = gas.mean_free_path_atm * (units::atmosphere_mbar * units::mbar) / gas.pressure;
  d.knudsen = mfp / particle.radius;
  d.correction = knudsen_correction(d.knudsen);
  if (gas.model == DampingModel::stokes) {
    d.gamma0 = 6.0 * units::pi * gas.viscosity * particle.radius / particle.mass * d.correction;
  } else {
    const double kn = d.knudsen;
    d.gamma0 = particle.radius / 70e-9 * units::two_pi * 1e6 / (0.619 + kn) *
               (1.0 + 0.31 * kn / (0.785 + 1.152 * kn + kn * kn));
  }
  d.friction = particle.mass * d.gamma0;
  return d;
}

struct ScatteringRates {
  double trap_heating = 0.0;  // A_t, 1/s
  double probe_loss = 0.0;    // B, 1/s
  double probe_heating = 0.0; // A_p, 1/s
};

/// Photon-scattering rates along z.
///
/// A_t = 2 * 7 w_t^5 I_t eps_c^2 V^2 l_z^2 / (60 pi hbar c^6), I_t = E0^2 eps0 c / 2.
/// B   = (hbar w_p)^4 eps_c^2 V^2 / (hbar^4 c^3 24 pi^3 w_p0^2 (c/dw))
///     = w_p^4 eps_c^2 V^2 dw / (24 pi^3 w_p0^2 c^4)                 [1/s]
/// A_p linearizes B (7 w_p^2 l_z^2 / 5c^2) D[a Q] about the coherent
/// amplitude alpha: A_p = 2 alpha^2 B 7 w_p^2 l_z^2 / (5 c^2). This last
/// step is an assumption; callers surface it in output metadata.
inline ScatteringRates scattering_rates(const TrapBeamSpec &trap, const ProbeBeamSpec &probe,
                                        const NanoparticleSpec &particle,
                                        const MechanicalMode &mode_z) {
  using units::c_light;
  const double ec2v2 = particle.clausius_mossotti * particle.clausius_mossotti *
                       particle.volume * particle.volume;
  const double l2 = mode_z.ell * mode_z.ell;
  const double wt = trap.angular_frequency();
  const double c6 = std::pow(c_light, 6);

  ScatteringRates s;
  s.trap_heating = 2.0 * 7.0 * std::pow(wt, 5) * trap.focal_intensity() * ec2v2 * l2 /
                   (60.0 * units::pi * units::hbar * c6);

  const double wp = probe.angular_frequency();
  s.probe_loss = std::pow(wp, 4) * ec2v2 * probe.linewidth /
                 (24.0 * std::pow(units::pi, 3) * probe.waist * probe.waist * std::pow(c_light, 4));
  const double a2 = probe.flux() / probe.linewidth;
  s.probe_heating = 2.0 * a2 * s.probe_loss * 7.0 * wp * wp * l2 / (5.0 * c_light * c_light);
  return s;
}

struct BrownianCoefficients {
  double momentum_diffusion = 0.0; // D_p, 1/s
  double position_diffusion = 0.0; // D_q, 1/s
};

/// D_p = 2 eta_f k_B T l_z^2 / hbar^2, D_q = eta_f hbar^2 / (24 k_B T m^2 l_z^2).
/// Their product is eta_f^2 / (12 m^2) independent of T and l_z.
inline BrownianCoefficients brownian_coefficients(const GasEnvironment &gas,
                                                  const NanoparticleSpec &particle,
                                                  const MechanicalMode &mode_z) {
  require(gas.temperature > 0.0, "gas.temperature must be > 0");
  const double eta = gas_damping(gas, particle).friction;
  const double kt = units::k_boltzmann * gas.temperature;
  const double l2 = mode_z.ell * mode_z.ell;
  const double h2 = units::hbar * units::hbar;
  return {2.0 * eta * kt * l2 / h2,
          eta * h2 / (24.0 * kt * particle.mass * particle.mass * l2)};
}

/// Coefficients of d<N>/dt = -J<N^2> - K<N> + L.
struct FeedbackCoefficients {
  double J = 0.0;
  double K = 0.0;
  double L = 0.0;
  bool heating = false; // G > 2/9: backaction beats feedback cooling
};

/// Gain-only part of the cooling rate, (12G - 54G^2). Vanishes at G = 0
/// and G = 2/9, peaks at G = 1/9.
inline double feedback_gain_factor(double gain) { return 12.0 * gain - 54.0 * gain * gain; }

/// J = (12G - 54G^2) chi^2 Phi, K = eta_f/m + J, L = D - J/2 - eta_f/2m.
///
/// The eta_f/m and -eta_f/2m friction terms are the exact first moments of
/// -i(eta_f/4m)[Q,{P,rho}]; D = D_p + A_t + A_p + D_q.
inline FeedbackCoefficients feedback_coefficients(double gain, double chi, double flux,
                                                  double friction, double mass,
                                                  double diffusion) {
  require(gain >= 0.0, "feedback.gain must be >= 0");
  require(chi >= 0.0 && flux >= 0.0, "chi and flux must be >= 0");
  require(mass > 0.0, "mass must be > 0");
  FeedbackCoefficients c;
  const double gamma0 = friction / mass;
  c.J = feedback_gain_factor(gain) * chi * chi * flux;
  c.K = gamma0 + c.J;
  c.L = diffusion - c.J / 2.0 - gamma0 / 2.0;
  c.heating = gain > 2.0 / 9.0;
  return c;
}

inline constexpr double optimal_gain_value = 1.0 / 9.0;

/// Trap intensity modulation M = G chi^2 Phi <N> / omega_z.
inline double trap_modulation(double gain, double kappa, double phonons, double omega_z) {
  return gain * kappa * phonons / omega_z;
}

/// Inverse of trap_modulation for the gain.
inline double gain_for_modulation(double modulation, double kappa, double phonons,
                                  double omega_z) {
  return modulation * omega_z / (kappa * phonons);
}

struct KickValidity {
  double momentum_kick = 0.0; // 2 sqrt(3 m_gas k_B T)
  double ratio = 0.0;         // momentum_kick * l_z / hbar
  bool valid = false;         // ratio < 1
};

/// Whether single gas collisions are small enough for the linearized
/// Brownian master equation.
inline KickValidity kick_validity(const GasEnvironment &gas, const MechanicalMode &mode_z) {
  require(gas.molecule_mass > 0.0, "gas.molecule_mass must be > 0");
  KickValidity k;
  const double t = std::max(gas.temperature, 0.0);
  k.momentum_kick = 2.0 * std::sqrt(3.0 * gas.molecule_mass * units::k_boltzmann * t);
  k.ratio = k.momentum_kick * mode_z.ell / units::hbar;
  k.valid = k.ratio < 1.0;
  return k;
}

struct FeedbackSpec {
  double gain = optimal_gain_value;
  double chi = 0.0;              // scaled coupling; 0 means derive 4 g_z dt
  double integration_time = 0.0; // s, dt in chi = 4 g_z dt
  double modulation_max = 1.0;   // cap on M used by gain schedules
};

/// Full physical description in SI.
struct Experiment {
  NanoparticleSpec particle;
  TrapBeamSpec trap;
  std::optional<std::array<double, 2>> calibration; // (omega_z, omega_y), rad/s
  ProbeBeamSpec probe;
  GasEnvironment gas;
  FeedbackSpec feedback;
};

/// Pressure-independent part of the derivation.
struct System {
  NanoparticleSpec particle;
  TrapBeamSpec trap;
  TrapModes modes;
  ProbeBeamSpec probe;
  std::array<double, 3> couplings{};
  double chi = 0.0;
  double flux = 0.0;
  double kappa = 0.0; // chi^2 Phi, 1/s
  ScatteringRates scattering;
  std::vector<std::string> warnings;

  double optical_heating() const { return scattering.trap_heating + scattering.probe_heating; }
};

inline System derive_system(const Experiment &e) {
  System s;
  s.particle = derive_particle(e.particle);
  if (e.calibration) {
    s.trap = calibrate_trap_beam(e.trap, s.particle, (*e.calibration)[0], (*e.calibration)[1]);
    if (e.trap.power > 0.0) {
      const double implied = s.trap.implied_power();
      if (std::abs(implied / e.trap.power - 1.0) > 0.05)
        s.warnings.push_back("calibrated trap implies " + std::to_string(implied * 1e3) +
                             " mW at focus vs configured " + std::to_string(e.trap.power * 1e3) +
                             " mW; rates use the calibrated field");
    }
  } else {
    s.trap = derive_trap_beam(e.trap);
  }
  s.modes = derive_trap(s.trap, s.particle);
  s.probe = e.probe;
  if (s.probe.waist <= 0.0)
    s.probe.waist = s.trap.waist;
  validate_probe(s.probe);
  s.couplings = optomechanical_couplings(s.probe, s.particle, s.modes);
  if (e.feedback.chi > 0.0) {
    s.chi = e.feedback.chi;
  } else {
    require(e.feedback.integration_time > 0.0,
            "feedback.chi or feedback.integration_time must be given");
    s.chi = 4.0 * s.couplings[2] * e.feedback.integration_time;
    require(s.chi > 0.0, "derived chi is zero; set probe.offset_z or feedback.chi");
  }
  s.flux = s.probe.flux();
  s.kappa = s.chi * s.chi * s.flux;
  s.scattering = scattering_rates(s.trap, s.probe, s.particle, s.modes.z);
  s.warnings.push_back("A_p assumes the coherent-amplitude linearization 2 alpha^2 B (7 w_p^2 l_z^2 / 5c^2)");
  return s;
}

/// Pressure- and gain-dependent rates at one operating point.
struct OperatingPoint {
  GasDamping damping;
  BrownianCoefficients brownian;
  double decoherence = 0.0; // D_p' = D_p + A_t + A_p
  double diffusion = 0.0;   // D = D_p' + D_q
  double n0 = 0.0;          // D_p' / Gamma0 = k_B T_eff / hbar omega_z
  double n0_gas = 0.0;      // D_p / Gamma0
  double n0_optical = 0.0;  // (A_t + A_p) / Gamma0
  double gain = 0.0;
  FeedbackCoefficients coeffs;
};

/// Initial phonon number N0 = D_p' m / eta_f = k_B T_eff / (hbar omega_z).
/// Returns (total, gas part, optical part).
inline std::array<double, 3> n0_initial(const BrownianCoefficients &b, const ScatteringRates &s,
                                        double gamma0) {
  require(gamma0 > 0.0, "gas damping must be > 0 for an initial thermal occupation");
  const double gas = b.momentum_diffusion / gamma0;
  const double optical = (s.trap_heating + s.probe_heating) / gamma0;
  return {gas + optical, gas, optical};
}

inline OperatingPoint operating_point(const System &s, const GasEnvironment &gas, double gain) {
  OperatingPoint op;
  op.damping = gas_damping(gas, s.particle);
  op.brownian = brownian_coefficients(gas, s.particle, s.modes.z);
  op.decoherence = op.brownian.momentum_diffusion + s.optical_heating();
  op.diffusion = op.decoherence + op.brownian.position_diffusion;
  const auto n0 = n0_initial(op.brownian, s.scattering, op.damping.gamma0);
  op.n0 = n0[0];
  op.n0_gas = n0[1];
  op.n0_optical = n0[2];
  op.gain = gain;
  op.coeffs = feedback_coefficients(gain, s.chi, s.flux, op.damping.friction, s.particle.mass,
                                    op.diffusion);
  return op;
}

/// Force-noise strengths and feedback damping at mean occupation n.
struct NoiseModel {
  double S_T = 0.0;         // 2 m hbar omega D_p' = 2 m Gamma0 k_B T_eff, N^2 s
  double S_F = 0.0;         // 27 m hbar omega kappa G^2 (2n^2 + 2n + 1), N^2 s
  double kappa = 0.0;       // chi^2 Phi, 1/s; shot-noise scale is sqrt(kappa)
  double gamma0 = 0.0;      // rad/s
  double delta_gamma = 0.0; // 12 kappa G (n + 1/2), rad/s

  double gamma() const { return gamma0 + delta_gamma; }
};

inline double feedback_force_noise(double mass, double omega, double kappa, double gain, double n) {
  return 27.0 * mass * units::hbar * omega * kappa * gain * gain * (2.0 * n * n + 2.0 * n + 1.0);
}

inline double feedback_damping(double kappa, double gain, double n) {
  return 12.0 * kappa * gain * (n + 0.5);
}

inline NoiseModel noise_model(const System &s, const OperatingPoint &op, double n) {
  NoiseModel nm;
  const double w = s.modes.z.omega;
  nm.S_T = 2.0 * s.particle.mass * units::hbar * w * op.decoherence;
  nm.S_F = feedback_force_noise(s.particle.mass, w, s.kappa, op.gain, n);
  nm.kappa = s.kappa;
  nm.gamma0 = op.damping.gamma0;
  nm.delta_gamma = feedback_damping(s.kappa, op.gain, n);
  return nm;
}

} // namespace levicool
