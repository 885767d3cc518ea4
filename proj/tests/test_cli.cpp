#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

const fs::path configs = fs::path(LEVICOOL_SOURCE_DIR) / "configs";

fs::path scratch(const std::string &name) {
  const fs::path p = fs::temp_directory_path() / ("levicool_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string &args, const std::string &env = "") {
  const std::string cmd = env + " \"" LEVICOOL_BIN "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string header(const fs::path &p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

std::string cfg(const char *name) { return (configs / name).string(); }

} // namespace

TEST(Cli, RatesAndManifest) {
  const auto out = scratch("rates");
  ASSERT_EQ(run("rates --config " + cfg("silica50.cfg") + " --out " + out.string()), 0);
  const auto rates = slurp(out / "rates.json");
  EXPECT_NE(rates.find("\"operating_point\""), std::string::npos);
  EXPECT_NE(rates.find("\"kick_validity\""), std::string::npos);
  const auto manifest = slurp(out / "manifest.json");
  EXPECT_NE(manifest.find("\"seed\": 20160527"), std::string::npos);
  EXPECT_NE(manifest.find("rates.json"), std::string::npos);
}

TEST(Cli, GoldenHeaders) {
  const auto out = scratch("headers");
  const std::string common = " --config " + cfg("ringdown.cfg") + " --out " + out.string();
  ASSERT_EQ(run("cool --tmax 1s --points 50" + common), 0);
  EXPECT_EQ(header(out / "cooling.csv"), "t_s,n");
  ASSERT_EQ(run("sweep --points 5" + common), 0);
  EXPECT_EQ(header(out / "sweep.csv"), "pressure_mbar,n_ss,gain,modulation,regime,status");
  ASSERT_EQ(run("simulate --duration 2ms" + common), 0);
  EXPECT_EQ(header(out / "traj.csv"), "t_s,Q,P,q_m,I_h_per_s,q_meas_m,n_est");
  ASSERT_EQ(run("psd --segments 4 --no-fit" + common), 0);
  EXPECT_EQ(header(out / "spectrum.csv"), "freq_Hz,psd_m2_per_Hz");
  ASSERT_EQ(run("sense --scan-power --scan-points 21 --points 11 --config " + cfg("silica50.cfg") +
                " --out " + out.string()),
            0);
  EXPECT_EQ(header(out / "sense.csv"), "omega_rad_s,S_T_N2_per_Hz,S_F_N2_per_Hz,S_S_N2_per_Hz,total_N2_per_Hz");
  EXPECT_EQ(header(out / "sql_scan.csv"),
            "power_W,sensitivity_N_per_rtHz,S_T_N2_per_Hz,S_F_N2_per_Hz,S_S_N2_per_Hz");
}

TEST(Cli, SimulatePsdFitPipeline) {
  const auto out = scratch("pipeline");
  const std::string common = " --config " + cfg("ringdown.cfg") + " --out " + out.string();
  ASSERT_EQ(run("simulate" + common), 0);
  ASSERT_EQ(run("psd --segments 16" + common), 0);
  EXPECT_TRUE(fs::exists(out / "fit.json"));
  EXPECT_TRUE(fs::exists(out / "sense.csv"));
  ASSERT_EQ(run("fit --segments 16 --fmin 25e3 --fmax 50e3" + common), 0);
  EXPECT_NE(slurp(out / "fit.json").find("\"log_bias\""), std::string::npos);
}

TEST(Cli, ThreadCountDoesNotChangeOutput) {
  const auto a = scratch("thr1"), b = scratch("thr4");
  for (const auto &[dir, threads] : {std::pair{a, 1}, std::pair{b, 4}}) {
    const std::string common = " --config " + cfg("ringdown.cfg") + " --out " + dir.string() +
                               " --threads " + std::to_string(threads);
    ASSERT_EQ(run("sweep --points 21" + common), 0);
    ASSERT_EQ(run("simulate --duration 1ms --trajectories 4" + common), 0);
  }
  for (const char *f : {"sweep.csv", "traj.csv", "ensemble.csv"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Cli, SeedSelectsTrajectory) {
  const auto a = scratch("seed_a"), b = scratch("seed_b");
  const std::string base = "simulate --duration 1ms --config " + cfg("ringdown.cfg");
  ASSERT_EQ(run(base + " --seed 1 --out " + a.string()), 0);
  ASSERT_EQ(run(base + " --seed 2 --out " + b.string()), 0);
  EXPECT_NE(slurp(a / "traj.csv"), slurp(b / "traj.csv"));
}

TEST(Cli, EnvironmentOverridesOut) {
  const auto env = scratch("env"), flag = scratch("flag");
  ASSERT_EQ(run("rates --config " + cfg("silica50.cfg") + " --out " + flag.string(),
                "LEVICOOL_OUT=" + env.string()),
            0);
  EXPECT_TRUE(fs::exists(env / "rates.json"));
  EXPECT_FALSE(fs::exists(flag / "rates.json"));
}

TEST(Cli, ExitCodes) {
  const auto out = scratch("exit");
  const auto bad = out / "bad.cfg";
  std::ofstream(bad) << "[gas]\ntemperature_K = 300\nflux_capacitor = 1\n";
  EXPECT_EQ(run("rates --config " + bad.string() + " --out " + out.string()), 1);
  EXPECT_EQ(run("rates --config /nonexistent.cfg --out " + out.string()), 3);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("cool --config " + cfg("silica50.cfg") + " --points 0 --out " + out.string()), 1);

  auto heating = slurp(configs / "silica50.cfg");
  heating.replace(heating.find("gain = 0.1111111111111111"), 25, "gain = 0.5");
  std::ofstream(out / "heating.cfg") << heating;
  EXPECT_EQ(run("cool --config " + (out / "heating.cfg").string() + " --out " + out.string()), 2);
}

TEST(Cli, FailedCommandRemovesPartialOutput) {
  const auto out = scratch("rollback");
  // White noise has no peak: spectrum.csv is written, then the fit fails.
  std::ofstream csv(out / "noise.csv");
  csv << "t_s,q_m\n";
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1e-9);
  for (int i = 0; i < 4096; ++i)
    csv << i * 1e-6 << "," << g(rng) << "\n";
  csv.close();
  EXPECT_EQ(run("psd --input " + (out / "noise.csv").string() + " --fmin 1e3 --fmax 2e5 --out " +
                (out / "res").string()),
            2);
  EXPECT_FALSE(fs::exists(out / "res" / "spectrum.csv"));
  EXPECT_FALSE(fs::exists(out / "res" / "manifest.json"));
}
