#include <gtest/gtest.h>

#include "levicool/config.hpp"

using namespace levicool;

namespace {

std::string error_of(const std::string &text) {
  try {
    to_experiment(parse_config(text));
  } catch (const ValidationError &e) {
    return e.what();
  }
  return {};
}

const char *minimal = R"([particle]
radius_nm = 50
permittivity = 2.1
density_kg_m3 = 2200
[trap]
wavelength_nm = 1064
power_mW = 100
waist_um = 1
[probe]
wavelength_nm = 1064
power_mW = 10
linewidth_MHz = 1
[gas]
temperature_K = 300
pressure_mbar = 1e-7
[feedback]
chi = 1e-7
)";

} // namespace

TEST(Config, QuantitiesConvertToSi) {
  EXPECT_DOUBLE_EQ(parse_quantity("10ms", Dim::time), 1e-2);
  EXPECT_DOUBLE_EQ(parse_quantity("1e-7mbar", Dim::pressure), 1e-5);
  EXPECT_DOUBLE_EQ(parse_quantity("38 kHz", Dim::frequency), 38e3);
  EXPECT_DOUBLE_EQ(parse_quantity("2.5", Dim::length), 2.5);
  EXPECT_THROW(parse_quantity("3 parsec", Dim::length), ValidationError);
  EXPECT_THROW(parse_quantity("abc", Dim::time), ValidationError);
}

TEST(Config, ReferenceConfigDerives) {
  const auto cfg = parse_config(reference_config_text());
  EXPECT_DOUBLE_EQ(cfg.number("trap.freq_z"), 38e3);
  EXPECT_DOUBLE_EQ(cfg.number("gas.pressure"), 1e-5);
  const auto e = to_experiment(cfg);
  ASSERT_TRUE(e.calibration.has_value());
  EXPECT_NEAR((*e.calibration)[0], units::two_pi * 38e3, 1e-9);
  EXPECT_NEAR(e.probe.linewidth, units::two_pi * 1e6, 1e-6);
}

TEST(Config, RoundTripIniAndJson) {
  const auto cfg = parse_config(reference_config_text());
  const auto ini = parse_config(serialize_ini(cfg));
  const auto js = parse_config(serialize_json(cfg).dump());
  EXPECT_EQ(cfg, ini);
  EXPECT_EQ(cfg, js);
  EXPECT_EQ(config_hash(cfg), config_hash(ini));
  EXPECT_EQ(config_hash(cfg), config_hash(js));
  EXPECT_EQ(serialize_ini(ini), serialize_ini(cfg));
}

TEST(Config, HashChangesWithValues) {
  auto cfg = parse_config(reference_config_text());
  const auto h = config_hash(cfg);
  cfg.set("gas.temperature", 4.0);
  EXPECT_NE(config_hash(cfg), h);
  EXPECT_EQ(config_hash(cfg).size(), 16u);
}

TEST(Config, UnitSpellingsAreEquivalent) {
  std::string pa = minimal;
  pa.replace(pa.find("pressure_mbar = 1e-7"), 20, "pressure_Pa = 1e-5");
  pa.replace(pa.find("waist_um = 1"), 12, "waist_nm = 1000");
  const auto x = parse_config(minimal), y = parse_config(pa);
  ASSERT_EQ(x.values().size(), y.values().size());
  EXPECT_DOUBLE_EQ(x.number("gas.pressure"), y.number("gas.pressure"));
  EXPECT_DOUBLE_EQ(x.number("trap.waist"), y.number("trap.waist"));
}

TEST(Config, UnknownKeysAndSectionsRejected) {
  EXPECT_NE(error_of(std::string(minimal) + "colour = red\n").find("colour"), std::string::npos);
  EXPECT_NE(error_of(std::string(minimal) + "[lasers]\npower_W = 1\n").find("lasers"),
            std::string::npos);
  std::string unit = minimal;
  unit.replace(unit.find("pressure_mbar"), 13, "pressure_furlong");
  EXPECT_NE(error_of(unit).find("pressure_furlong"), std::string::npos);
  EXPECT_FALSE(error_of(std::string(minimal) + "[gas]\nviscosity_Pa_s = 1\n").empty());
}

TEST(Config, MissingKeysReportedTogether) {
  const auto msg = error_of("[particle]\nradius_nm = 50\n");
  EXPECT_NE(msg.find("particle.permittivity"), std::string::npos);
  EXPECT_NE(msg.find("particle.density"), std::string::npos);
  EXPECT_NE(msg.find("gas.pressure"), std::string::npos);
  EXPECT_NE(msg.find("probe.power"), std::string::npos);
}

TEST(Config, TrapModesAreExclusive) {
  EXPECT_TRUE(error_of(minimal).empty()) << error_of(minimal);
  const auto both = std::string(minimal) + "[trap]\nfreq_z_kHz = 38\nfreq_y_kHz = 138\n";
  EXPECT_FALSE(error_of(both).empty());
  std::string half = minimal;
  half.replace(half.find("waist_um = 1"), 12, "freq_z_kHz = 38");
  EXPECT_NE(error_of(half).find("freq_y"), std::string::npos);
}

TEST(Config, DegeneratePermittivity) {
  std::string t = minimal;
  t.replace(t.find("permittivity = 2.1"), 18, "permittivity = 1");
  EXPECT_NE(error_of(t).find("permittivity"), std::string::npos);
}

TEST(Config, JsonAndIniAgree) {
  const auto js = parse_config(R"({
    "particle": {"radius_nm": 50, "permittivity": 2.1, "density_kg_m3": 2200},
    "trap": {"wavelength_nm": 1064, "power_mW": 100, "waist_um": 1},
    "probe": {"wavelength_nm": 1064, "power_mW": 10, "linewidth_MHz": 1},
    "gas": {"temperature_K": 300, "pressure_mbar": 1e-7},
    "feedback": {"chi": 1e-7}})");
  EXPECT_EQ(parse_config(minimal), js);
}

TEST(Config, MalformedInput) {
  EXPECT_THROW(parse_config("{not json"), ValidationError);
  EXPECT_THROW(parse_config("[gas\npressure_mbar = 1\n"), ValidationError);
  EXPECT_THROW(parse_config("[gas]\npressure_mbar = fast\n"), ValidationError);
  EXPECT_THROW(load_config("/nonexistent/levicool.cfg"), IoError);
}

TEST(Config, OracleDefaults) {
  const auto o = oracle_scenario(parse_config(reference_config_text()));
  EXPECT_EQ(o.dimension, 64u);
  EXPECT_DOUBLE_EQ(o.spec.omega, 1.0);
  EXPECT_DOUBLE_EQ(o.spec.friction, 0.05);
}
