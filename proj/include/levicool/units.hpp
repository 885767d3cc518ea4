#pragma once

#include <numbers>

// Physical constants (CODATA 2018, exact where SI defines them) and the
// unit factors used at the configuration boundary. Everything inside the
// library is SI.
namespace levicool::units {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

inline constexpr double hbar = 1.054571817e-34;      // J s
inline constexpr double k_boltzmann = 1.380649e-23;  // J/K
inline constexpr double c_light = 299792458.0;       // m/s
inline constexpr double epsilon0 = 8.8541878128e-12; // F/m
inline constexpr double amu = 1.66053906660e-27;     // kg

inline constexpr double atmosphere_mbar = 1013.25;
inline constexpr double mbar = 100.0; // Pa

inline constexpr double nm = 1e-9;
inline constexpr double um = 1e-6;
inline constexpr double mW = 1e-3;
inline constexpr double kHz = 1e3;
inline constexpr double MHz = 1e6;

inline constexpr double mass_n2 = 28.0134 * amu;
inline constexpr double mass_he = 4.002602 * amu;

constexpr double angular(double hz) { return two_pi * hz; }
constexpr double hertz(double rad_per_s) { return rad_per_s / two_pi; }

} // namespace levicool::units
