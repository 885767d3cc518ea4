// levicool: command-line front end.

#include <cstdlib>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "levicool/levicool.hpp"

namespace {

using namespace levicool;

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  unsigned threads = default_threads();
  bool plot = false;
};

void add_common(CLI::App *sub, Common &c) {
  sub->add_option("--config", c.config, "experiment config (INI or JSON)");
  sub->add_option("--out", c.out, "output directory (LEVICOOL_OUT overrides)");
  sub->add_option("--seed", c.seed, "master seed (default: [simulation] seed, else 20160527)");
  sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  sub->add_flag("--plot", c.plot, "also write SVG plots");
}

double quantity(const std::string &text, Dim dim) { return parse_quantity(text, dim); }

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Feedback cooling and force sensing of a levitated nanoparticle"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("levicool ") + tool_version);
  Common common;

  auto *rates = app.add_subcommand("rates", "derive all rates and write rates.json");
  auto *cool = app.add_subcommand("cool", "phonon cooling curve (cooling.csv)");
  auto *sweep = app.add_subcommand("sweep", "steady state vs pressure (sweep.csv)");
  auto *simulate = app.add_subcommand("simulate", "stochastic trajectory (traj.csv)");
  auto *psd = app.add_subcommand("psd", "spectrum of a trajectory or external CSV, with fit");
  auto *fit = app.add_subcommand("fit", "Lorentzian fit of spectrum.csv (fit.json)");
  auto *sense = app.add_subcommand("sense", "force-noise budget and quantum limit");
  auto *oracle = app.add_subcommand("oracle", "Fock-space master-equation check");
  auto *validate = app.add_subcommand("validate", "run the acceptance suite");
  for (auto *s : {rates, cool, sweep, simulate, psd, fit, sense, oracle, validate})
    add_common(s, common);

  std::string tmax;
  CoolOptions cool_opt;
  cool->add_option("--tmax", tmax, "horizon, e.g. 10s or 500ms");
  cool->add_option("--points", cool_opt.points, "time samples");
  cool->add_flag("--ode", cool_opt.ode, "add a numerically integrated column");

  std::string pmin, pmax;
  std::optional<std::size_t> sweep_points;
  SweepOptions sweep_opt;
  sweep->add_option("--pmin", pmin, "lowest pressure, e.g. 1e-9mbar");
  sweep->add_option("--pmax", pmax, "highest pressure");
  sweep->add_option("--points", sweep_points, "grid points (log spaced)");
  sweep->add_option("--policy", sweep_opt.policy, "fixed-gain | fixed-modulation | optimal-capped");
  sweep->add_option("--value", sweep_opt.value, "G for fixed-gain, M cap otherwise");

  std::string duration, dt;
  SimulateOptions sim_opt;
  simulate->add_option("--duration", duration, "simulated time, e.g. 20ms");
  simulate->add_option("--dt", dt, "time step, e.g. 100ns");
  simulate->add_option("--decimate", sim_opt.decimate, "keep every k-th sample");
  simulate->add_option("--trajectories", sim_opt.trajectories, "ensemble size (ensemble.csv when > 1)");

  PsdOptions psd_opt;
  std::optional<double> psd_fmin, psd_fmax;
  bool psd_no_fit = false;
  psd->add_option("--input", psd_opt.input, "CSV with a t_<unit> column (default <out>/traj.csv)");
  psd->add_option("--column", psd_opt.column, "signal column (default q_m)");
  psd->add_option("--calibration", psd_opt.calibration, "metres per signal unit for columns without a length unit");
  psd->add_option("--segments", psd_opt.segments, "Welch segments");
  psd->add_option("--window", psd_opt.window, "hann | rectangular");
  psd->add_option("--fmin", psd_fmin, "fit band lower edge [Hz]");
  psd->add_option("--fmax", psd_fmax, "fit band upper edge [Hz]");
  psd->add_flag("--no-fit", psd_no_fit, "spectrum only");

  FitOptions fit_opt;
  fit->add_option("--input", fit_opt.input, "spectrum CSV (default <out>/spectrum.csv)");
  fit->add_option("--fmin", fit_opt.fmin, "band lower edge [Hz]");
  fit->add_option("--fmax", fit_opt.fmax, "band upper edge [Hz]");
  fit->add_option("--segments", fit_opt.segments, "segments averaged in the spectrum (log-bias correction)");

  SenseOptions sense_opt;
  sense->add_flag("--scan-power", sense_opt.scan_power, "write the probe-power scan (sql_scan.csv)");
  sense->add_option("--points", sense_opt.points, "frequency samples in sense.csv");
  sense->add_option("--scan-points", sense_opt.scan_points, "power scan samples");

  OracleOptions oracle_opt;
  oracle->add_option("--qsd", oracle_opt.qsd_trajectories, "also run N QSD trajectories");

  SuiteOptions suite;
  validate->add_flag("--quick", suite.quick, "fast subset (criteria 1 2 3 7 8 9)");
  validate->add_option("--criterion", suite.only, "run only these criteria");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::validation);
  }

  std::string command_line;
  for (int i = 0; i < argc; ++i)
    command_line += (i ? " " : "") + std::string(argv[i]);

  try {
    RunContext ctx;
    ctx.threads = common.threads;
    ctx.plot = common.plot;
    ctx.command_line = command_line;
    if (!common.config.empty())
      ctx.config = load_config(common.config);
    if (common.seed)
      ctx.seed = *common.seed;
    else if (ctx.config && ctx.config->has("simulation.seed"))
      ctx.seed = static_cast<std::uint64_t>(ctx.config->number("simulation.seed"));

    std::string out_dir = common.out;
    if (const char *env = std::getenv("LEVICOOL_OUT"); env && *env)
      out_dir = env;

    if (validate->parsed()) {
      suite.threads = ctx.threads;
      const auto results = run_suite(suite);
      nlohmann::json doc = nlohmann::json::array();
      for (const auto &r : results) {
        std::cout << format_result(r) << "\n";
        doc.push_back({{"id", r.id}, {"name", r.name}, {"pass", r.pass},
                       {"expected_failure", r.expected_failure}, {"detail", r.detail}, {"seconds", r.seconds}});
      }
      OutputSet out(out_dir);
      run_command("validate", ctx, out, [&](OutputSet &o) {
        o.write_json("validation.json", doc);
        return CommandReport{};
      });
      return suite_ok(results) ? 0 : static_cast<int>(ExitCode::validation);
    }

    std::string name;
    std::function<CommandReport(OutputSet &)> body;
    if (rates->parsed()) {
      name = "rates";
      body = [&](OutputSet &o) { return cmd_rates(ctx, o); };
    } else if (cool->parsed()) {
      name = "cool";
      if (!tmax.empty())
        cool_opt.tmax = quantity(tmax, Dim::time);
      body = [&](OutputSet &o) { return cmd_cool(ctx, cool_opt, o); };
    } else if (sweep->parsed()) {
      name = "sweep";
      if (!pmin.empty())
        sweep_opt.pmin_mbar = quantity(pmin, Dim::pressure) / units::mbar;
      if (!pmax.empty())
        sweep_opt.pmax_mbar = quantity(pmax, Dim::pressure) / units::mbar;
      sweep_opt.points = sweep_points;
      body = [&](OutputSet &o) { return cmd_sweep(ctx, sweep_opt, o); };
    } else if (simulate->parsed()) {
      name = "simulate";
      if (!duration.empty())
        sim_opt.duration = quantity(duration, Dim::time);
      if (!dt.empty())
        sim_opt.dt = quantity(dt, Dim::time);
      body = [&](OutputSet &o) { return cmd_simulate(ctx, sim_opt, o); };
    } else if (psd->parsed()) {
      name = "psd";
      if (psd_opt.input.empty())
        psd_opt.input = (fs::path(out_dir) / "traj.csv").string();
      psd_opt.fmin = psd_fmin;
      psd_opt.fmax = psd_fmax;
      psd_opt.fit = !psd_no_fit;
      body = [&](OutputSet &o) { return cmd_psd(ctx, psd_opt, o); };
    } else if (fit->parsed()) {
      name = "fit";
      if (fit_opt.input.empty())
        fit_opt.input = (fs::path(out_dir) / "spectrum.csv").string();
      body = [&](OutputSet &o) { return cmd_fit(ctx, fit_opt, o); };
    } else if (sense->parsed()) {
      name = "sense";
      body = [&](OutputSet &o) { return cmd_sense(ctx, sense_opt, o); };
    } else {
      name = "oracle";
      body = [&](OutputSet &o) { return cmd_oracle(ctx, oracle_opt, o); };
    }

    OutputSet out(out_dir);
    const CommandReport rep = run_command(name, ctx, out, body);
    for (const auto &w : rep.warnings)
      std::cerr << "warning: " << w << "\n";
    std::cout << rep.summary;
    for (const auto &f : out.files())
      std::cout << "wrote " << (out.dir() / f).string() << "\n";
    return 0;
  } catch (const ValidationError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::validation);
  } catch (const NumericalError &e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return static_cast<int>(ExitCode::numerical);
  } catch (const IoError &e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::io);
  } catch (const std::exception &e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return static_cast<int>(ExitCode::numerical);
  }
}
