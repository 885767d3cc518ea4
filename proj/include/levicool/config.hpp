#pragma once

// Experiment configuration: sectioned key = value text (INI) or JSON.
// Dimensional keys carry a unit suffix, e.g. radius_nm, pressure_mbar.
// Values are converted to SI on read and kept in SI afterwards.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "levicool/errors.hpp"
#include "levicool/oracle.hpp"
#include "levicool/params.hpp"
#include "levicool/units.hpp"

namespace levicool {

enum class Dim {
  none,        // dimensionless real
  integer,     // non-negative integer
  text,        // free string
  fraction,    // plain number or _percent
  length,      // m
  power,       // W
  frequency,   // Hz
  pressure,    // Pa
  temperature, // K
  time,        // s
  density,     // kg/m^3
  viscosity,   // Pa s
  mass,        // kg
  rate,        // 1/s
};

struct UnitSuffix {
  const char *suffix;
  double factor; // multiply to get SI
};

inline const std::vector<UnitSuffix> &suffixes(Dim d) {
  static const std::map<Dim, std::vector<UnitSuffix>> table = {
      {Dim::none, {{"", 1.0}}},
      {Dim::integer, {{"", 1.0}}},
      {Dim::text, {{"", 1.0}}},
      {Dim::fraction, {{"", 1.0}, {"percent", 1e-2}}},
      {Dim::length, {{"m", 1.0}, {"mm", 1e-3}, {"um", 1e-6}, {"nm", 1e-9}}},
      {Dim::power, {{"W", 1.0}, {"mW", 1e-3}, {"uW", 1e-6}}},
      {Dim::frequency, {{"Hz", 1.0}, {"kHz", 1e3}, {"MHz", 1e6}}},
      {Dim::pressure, {{"Pa", 1.0}, {"mbar", units::mbar}}},
      {Dim::temperature, {{"K", 1.0}}},
      {Dim::time, {{"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"ns", 1e-9}}},
      {Dim::density, {{"kg_m3", 1.0}}},
      {Dim::viscosity, {{"Pa_s", 1.0}}},
      {Dim::mass, {{"kg", 1.0}, {"amu", units::amu}}},
      {Dim::rate, {{"per_s", 1.0}}},
  };
  return table.at(d);
}

struct KeySpec {
  const char *section;
  const char *name;
  Dim dim;
  bool required;
};

// Keys not listed here are rejected.
inline const std::vector<KeySpec> &config_schema() {
  static const std::vector<KeySpec> schema = {
      {"particle", "radius", Dim::length, true},
      {"particle", "permittivity", Dim::none, true},
      {"particle", "density", Dim::density, true},

      {"trap", "wavelength", Dim::length, true},
      {"trap", "power", Dim::power, true},
      {"trap", "waist", Dim::length, false},
      {"trap", "freq_z", Dim::frequency, false},
      {"trap", "freq_y", Dim::frequency, false},
      {"trap", "modulation", Dim::fraction, false},

      {"probe", "wavelength", Dim::length, true},
      {"probe", "power", Dim::power, true},
      {"probe", "linewidth", Dim::frequency, true},
      {"probe", "waist", Dim::length, false},
      {"probe", "offset_x", Dim::length, false},
      {"probe", "offset_y", Dim::length, false},
      {"probe", "offset_z", Dim::length, false},

      {"gas", "temperature", Dim::temperature, true},
      {"gas", "pressure", Dim::pressure, true},
      {"gas", "viscosity", Dim::viscosity, false},
      {"gas", "mean_free_path", Dim::length, false},
      {"gas", "molecule_mass", Dim::mass, false},
      {"gas", "damping_model", Dim::text, false},

      {"feedback", "gain", Dim::none, false},
      {"feedback", "chi", Dim::none, false},
      {"feedback", "integration_time", Dim::time, false},
      {"feedback", "modulation_max", Dim::fraction, false},

      {"simulation", "duration", Dim::time, false},
      {"simulation", "dt", Dim::time, false},
      {"simulation", "seed", Dim::integer, false},
      {"simulation", "trajectories", Dim::integer, false},
      {"simulation", "decimate", Dim::integer, false},
      {"simulation", "cool_time", Dim::time, false},
      {"simulation", "sweep_min", Dim::pressure, false},
      {"simulation", "sweep_max", Dim::pressure, false},
      {"simulation", "sweep_points", Dim::integer, false},
      {"simulation", "segments", Dim::integer, false},

      // Scaled single-mode problem for the density-matrix oracle. Rates
      // are in 1/s but any consistent time unit works.
      {"oracle", "omega", Dim::rate, false},
      {"oracle", "gamma0", Dim::rate, false},
      {"oracle", "bath_occupation", Dim::none, false},
      {"oracle", "extra_heating", Dim::rate, false},
      {"oracle", "gain", Dim::none, false},
      {"oracle", "kappa", Dim::rate, false},
      {"oracle", "dimension", Dim::integer, false},
      {"oracle", "initial_occupation", Dim::none, false},
      {"oracle", "duration", Dim::time, false},
      {"oracle", "checkpoints", Dim::integer, false},
      {"oracle", "qsd_trajectories", Dim::integer, false},
      {"oracle", "qsd_dt", Dim::time, false},
  };
  return schema;
}

inline const KeySpec *find_key(const std::string &section, const std::string &name) {
  for (const auto &k : config_schema())
    if (section == k.section && name == k.name)
      return &k;
  return nullptr;
}

inline std::string canonical_key(const KeySpec &k) {
  const std::string si = suffixes(k.dim).front().suffix;
  return si.empty() ? std::string(k.name) : std::string(k.name) + "_" + si;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Parses "10s", "2.5 ms", "1e-7mbar" or a bare number (taken as SI).
inline double parse_quantity(const std::string &text, Dim dim) {
  const char *begin = text.c_str();
  char *end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || !std::isfinite(v))
    throw ValidationError("'" + text + "' is not a number");
  std::string unit(end);
  unit.erase(0, unit.find_first_not_of(" _\t"));
  unit.erase(unit.find_last_not_of(" \t") + 1);
  if (unit.empty())
    return v;
  for (const auto &u : suffixes(dim))
    if (unit == u.suffix)
      return v * u.factor;
  std::string known;
  for (const auto &u : suffixes(dim))
    if (*u.suffix)
      known += (known.empty() ? "" : ", ") + std::string(u.suffix);
  throw ValidationError("'" + text + "': unknown unit '" + unit + "' (expected " + known + ")");
}

using ConfigValue = std::variant<double, std::string>;

/// Validated configuration; values are SI, keyed by "section.name".
class ExperimentConfig {
public:
  bool has(const std::string &path) const { return values_.count(path) > 0; }

  double number(const std::string &path) const {
    auto it = values_.find(path);
    if (it == values_.end() || !std::holds_alternative<double>(it->second))
      throw ValidationError("missing numeric key " + path);
    return std::get<double>(it->second);
  }
  double number_or(const std::string &path, double fallback) const {
    return has(path) ? number(path) : fallback;
  }
  std::optional<double> maybe(const std::string &path) const {
    if (!has(path))
      return std::nullopt;
    return number(path);
  }
  std::string text_or(const std::string &path, const std::string &fallback) const {
    auto it = values_.find(path);
    if (it == values_.end())
      return fallback;
    return std::get<std::string>(it->second);
  }

  void set(const std::string &path, ConfigValue v) { values_[path] = std::move(v); }
  void erase(const std::string &path) { values_.erase(path); }
  const std::map<std::string, ConfigValue> &values() const { return values_; }

  bool operator==(const ExperimentConfig &o) const { return values_ == o.values_; }

private:
  std::map<std::string, ConfigValue> values_;
};

namespace detail {

// Raw (section, key) -> text before unit resolution.
using RawConfig = std::vector<std::tuple<std::string, std::string, std::string>>;

inline std::optional<double> parse_number(const std::string &text) {
  std::string s = text;
  s.erase(0, s.find_first_not_of(" \t"));
  s.erase(s.find_last_not_of(" \t\r") + 1);
  if (s.empty())
    return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size())
      return std::nullopt;
    return v;
  } catch (const std::exception &) {
    return std::nullopt;
  }
}

inline std::string trim(std::string s) {
  s.erase(0, s.find_first_not_of(" \t\""));
  s.erase(s.find_last_not_of(" \t\r\"") + 1);
  return s;
}

/// Resolves unit suffixes and checks the schema. Every problem found is
/// collected into a single error.
inline ExperimentConfig resolve(const RawConfig &raw) {
  ExperimentConfig cfg;
  std::vector<std::string> problems;
  std::map<std::string, std::string> seen; // path -> key as written

  for (const auto &[section, key, text] : raw) {
    const KeySpec *match = nullptr;
    double factor = 1.0;
    for (const auto &k : config_schema()) {
      if (section != k.section)
        continue;
      for (const auto &u : suffixes(k.dim)) {
        const std::string full =
            std::string(u.suffix).empty() ? k.name : std::string(k.name) + "_" + u.suffix;
        if (key == full) {
          match = &k;
          factor = u.factor;
        }
      }
    }
    const std::string where = section + "." + key;
    if (!match) {
      const bool known_section = std::any_of(config_schema().begin(), config_schema().end(),
                                             [&](const KeySpec &k) { return section == k.section; });
      problems.push_back(known_section ? where + ": unknown key" : "[" + section + "]: unknown section");
      continue;
    }
    const std::string path = section + "." + match->name;
    if (seen.count(path)) {
      problems.push_back(where + ": duplicates " + section + "." + seen[path]);
      continue;
    }
    seen[path] = key;
    if (match->dim == Dim::text) {
      cfg.set(path, trim(text));
      continue;
    }
    const auto v = parse_number(text);
    if (!v || !std::isfinite(*v)) {
      problems.push_back(where + ": '" + text + "' is not a finite number");
      continue;
    }
    if (match->dim == Dim::integer && (*v < 0.0 || *v != std::floor(*v))) {
      problems.push_back(where + ": expected a non-negative integer");
      continue;
    }
    cfg.set(path, *v * factor);
  }

  for (const auto &k : config_schema())
    if (k.required && !cfg.has(std::string(k.section) + "." + k.name)) {
      std::string hint;
      for (const auto &u : suffixes(k.dim))
        hint += hint.empty() ? "" : "|", hint += std::string(u.suffix).empty() ? k.name : std::string(k.name) + "_" + u.suffix;
      problems.push_back(std::string(k.section) + "." + k.name + ": missing (" + hint + ")");
    }

  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto &p : problems)
      msg += "\n  " + p;
    throw ValidationError(msg);
  }
  return cfg;
}

} // namespace detail

inline ExperimentConfig parse_ini(const std::string &text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error &e) {
    throw ValidationError(std::string("config syntax: ") + e.what());
  }
  detail::RawConfig raw;
  for (const auto &[section, body] : tree) {
    if (body.empty()) {
      if (!body.data().empty())
        raw.emplace_back("(top level)", section, body.data());
      continue;
    }
    for (const auto &[key, value] : body)
      raw.emplace_back(section, key, value.data());
  }
  return detail::resolve(raw);
}

inline ExperimentConfig parse_json(const std::string &text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error &e) {
    throw ValidationError(std::string("config syntax: ") + e.what());
  }
  if (!doc.is_object())
    throw ValidationError("config: JSON top level must be an object of sections");
  detail::RawConfig raw;
  for (const auto &[section, body] : doc.items()) {
    if (!body.is_object()) {
      raw.emplace_back("(top level)", section, body.dump());
      continue;
    }
    for (const auto &[key, value] : body.items()) {
      if (value.is_string())
        raw.emplace_back(section, key, value.get<std::string>());
      else if (value.is_number())
        raw.emplace_back(section, key, format_double(value.get<double>()));
      else
        raw.emplace_back(section, key, value.dump());
    }
  }
  return detail::resolve(raw);
}

inline ExperimentConfig parse_config(const std::string &text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{')
    return parse_json(text);
  return parse_ini(text);
}

inline ExperimentConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Canonical text form: schema order, SI suffixes, %.17g. Parsing it back
/// gives an identical configuration.
inline std::string serialize_ini(const ExperimentConfig &cfg) {
  std::ostringstream out;
  std::string current;
  for (const auto &k : config_schema()) {
    const std::string path = std::string(k.section) + "." + k.name;
    auto it = cfg.values().find(path);
    if (it == cfg.values().end())
      continue;
    if (current != k.section) {
      out << (current.empty() ? "" : "\n") << "[" << k.section << "]\n";
      current = k.section;
    }
    out << canonical_key(k) << " = ";
    if (const auto *d = std::get_if<double>(&it->second))
      out << format_double(*d);
    else
      out << std::get<std::string>(it->second);
    out << "\n";
  }
  return out.str();
}

inline nlohmann::json serialize_json(const ExperimentConfig &cfg) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto &k : config_schema()) {
    auto it = cfg.values().find(std::string(k.section) + "." + k.name);
    if (it == cfg.values().end())
      continue;
    if (const auto *d = std::get_if<double>(&it->second))
      doc[k.section][canonical_key(k)] = *d;
    else
      doc[k.section][canonical_key(k)] = std::get<std::string>(it->second);
  }
  return doc;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string &data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string config_hash(const ExperimentConfig &cfg) { return hex64(fnv1a(serialize_ini(cfg))); }

inline constexpr std::uint64_t default_seed = 20160527;

/// Builds the physical description. The trap is either forward-specified
/// by its waist or calibrated from (freq_z, freq_y), never both.
inline Experiment to_experiment(const ExperimentConfig &c) {
  Experiment e;
  std::vector<std::string> problems;
  auto check = [&](bool ok, const std::string &msg) {
    if (!ok)
      problems.push_back(msg);
  };

  e.particle.radius = c.number("particle.radius");
  e.particle.permittivity = c.number("particle.permittivity");
  e.particle.density = c.number("particle.density");
  check(e.particle.radius > 0.0, "particle.radius must be > 0");
  check(e.particle.density > 0.0, "particle.density must be > 0");
  if (e.particle.permittivity == 1.0)
    problems.push_back("particle.permittivity = 1: eps_c degenerate (no polarizability)");
  else
    check(e.particle.permittivity > 1.0, "particle.permittivity must be > 1");

  e.trap.wavelength = c.number("trap.wavelength");
  e.trap.power = c.number("trap.power");
  e.trap.modulation_depth = c.number_or("trap.modulation", 0.0);
  check(e.trap.wavelength > 0.0, "trap.wavelength must be > 0");
  check(e.trap.power > 0.0, "trap.power must be > 0");
  const bool forward = c.has("trap.waist");
  const bool calib = c.has("trap.freq_z") || c.has("trap.freq_y");
  if (forward && calib) {
    problems.push_back("trap: give either waist (forward mode) or freq_z + freq_y (calibrated mode), not both");
  } else if (calib) {
    if (!c.has("trap.freq_z") || !c.has("trap.freq_y")) {
      problems.push_back("trap: calibrated mode needs both freq_z and freq_y");
    } else {
      const double fz = c.number("trap.freq_z"), fy = c.number("trap.freq_y");
      check(fz > 0.0 && fy > fz, "trap: need 0 < freq_z < freq_y");
      e.calibration = std::array<double, 2>{units::angular(fz), units::angular(fy)};
    }
  } else if (forward) {
    e.trap.waist = c.number("trap.waist");
    check(e.trap.waist > 0.0, "trap.waist must be > 0");
  } else {
    problems.push_back("trap: need waist (forward mode) or freq_z + freq_y (calibrated mode)");
  }

  e.probe.wavelength = c.number("probe.wavelength");
  e.probe.power = c.number("probe.power");
  e.probe.linewidth = units::angular(c.number("probe.linewidth"));
  e.probe.waist = c.number_or("probe.waist", 0.0);
  e.probe.offset = {c.number_or("probe.offset_x", 0.0), c.number_or("probe.offset_y", 0.0),
                    c.number_or("probe.offset_z", 0.0)};
  check(e.probe.wavelength > 0.0, "probe.wavelength must be > 0");
  check(e.probe.power > 0.0, "probe.power must be > 0");
  check(e.probe.linewidth > 0.0, "probe.linewidth must be > 0");

  e.gas.temperature = c.number("gas.temperature");
  e.gas.pressure = c.number("gas.pressure");
  e.gas.viscosity = c.number_or("gas.viscosity", e.gas.viscosity);
  e.gas.mean_free_path_atm = c.number_or("gas.mean_free_path", e.gas.mean_free_path_atm);
  e.gas.molecule_mass = c.number_or("gas.molecule_mass", e.gas.molecule_mass);
  const std::string model = c.text_or("gas.damping_model", "calibrated");
  if (model == "calibrated")
    e.gas.model = DampingModel::calibrated;
  else if (model == "stokes")
    e.gas.model = DampingModel::stokes;
  else
    problems.push_back("gas.damping_model must be 'calibrated' or 'stokes'");
  check(e.gas.temperature >= 0.0, "gas.temperature must be >= 0");
  check(e.gas.pressure > 0.0, "gas.pressure must be > 0");

  e.feedback.gain = c.number_or("feedback.gain", optimal_gain_value);
  e.feedback.chi = c.number_or("feedback.chi", 0.0);
  e.feedback.integration_time = c.number_or("feedback.integration_time", 0.0);
  e.feedback.modulation_max = c.number_or("feedback.modulation_max", 1.0);
  check(e.feedback.gain >= 0.0, "feedback.gain must be >= 0");
  check(e.feedback.chi >= 0.0, "feedback.chi must be >= 0");
  check(e.feedback.chi > 0.0 || e.feedback.integration_time > 0.0,
        "feedback: need chi or integration_time");
  check(e.feedback.modulation_max > 0.0, "feedback.modulation_max must be > 0");

  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto &p : problems)
      msg += "\n  " + p;
    throw ValidationError(msg);
  }
  return e;
}

struct OracleScenario {
  LindbladSpec spec;
  std::size_t dimension = 64;
  double initial_occupation = 5.0;
  double duration = 0.0; // 0 selects 3 / Gamma0
  std::size_t checkpoints = 20;
  std::size_t qsd_trajectories = 0;
  double qsd_dt = 5e-4;
};

/// Oracle section, with a Brownian default (omega = 1, Gamma0 = 0.05,
/// n_th = 1) when keys are absent.
inline OracleScenario oracle_scenario(const ExperimentConfig &c) {
  OracleScenario o;
  const double omega = c.number_or("oracle.omega", 1.0);
  const double gamma0 = c.number_or("oracle.gamma0", 0.05);
  const double n_th = c.number_or("oracle.bath_occupation", 1.0);
  const double extra = c.number_or("oracle.extra_heating", 0.0);
  const double gain = c.number_or("oracle.gain", 0.0);
  const double kappa = c.number_or("oracle.kappa", 0.0);
  o.spec = LindbladSpec::brownian(omega, gamma0, n_th, extra, gain, kappa);
  o.spec.validate();
  o.dimension = static_cast<std::size_t>(c.number_or("oracle.dimension", 64));
  o.initial_occupation = c.number_or("oracle.initial_occupation", 5.0);
  o.duration = c.number_or("oracle.duration", 3.0 / gamma0);
  o.checkpoints = static_cast<std::size_t>(c.number_or("oracle.checkpoints", 20));
  o.qsd_trajectories = static_cast<std::size_t>(c.number_or("oracle.qsd_trajectories", 0));
  o.qsd_dt = c.number_or("oracle.qsd_dt", 5e-4);
  require(o.dimension >= 4, "oracle.dimension must be >= 4");
  require(o.initial_occupation >= 0.0, "oracle.initial_occupation must be >= 0");
  require(o.duration > 0.0, "oracle.duration must be > 0");
  require(o.checkpoints >= 1, "oracle.checkpoints must be >= 1");
  return o;
}

/// Reference parameter set: silica, 50 nm, 1064 nm trap at 100 mW calibrated
/// to 38 / 138 kHz, 10 mW probe, chi = 1e-7.
inline const char *reference_config_text() {
  return R"([particle]
radius_nm = 50
permittivity = 2.1
density_kg_m3 = 2200

[trap]
wavelength_nm = 1064
power_mW = 100
freq_z_kHz = 38
freq_y_kHz = 138

[probe]
wavelength_nm = 1064
power_mW = 10
linewidth_MHz = 1

[gas]
temperature_K = 300
pressure_mbar = 1e-7

[feedback]
gain = 0.1111111111111111
chi = 1e-7
modulation_max_percent = 10
)";
}

} // namespace levicool
