#pragma once

#include "levicool/config.hpp"
#include "levicool/params.hpp"

namespace levicool::test {

inline Experiment reference(double temperature_k = 300.0, double pressure_mbar = 1e-7) {
  auto cfg = parse_config(reference_config_text());
  cfg.set("gas.temperature", temperature_k);
  cfg.set("gas.pressure", pressure_mbar * units::mbar);
  return to_experiment(cfg);
}

inline System reference_system() { return derive_system(reference()); }

} // namespace levicool::test
