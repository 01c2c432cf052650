/**
 * cmpc: constrained contouring control for a flexible biaxial gantry.
 *
 *   cmpc rci-build  --config run.ini            build + cache invariant sets
 *   cmpc simulate   --config run.ini            closed-loop run + trace
 *   cmpc report     trace_A.csv trace_B.csv     side-by-side comparison
 *   cmpc sweep      --config run.ini --seeds 10 repeated runs over seeds
 *
 * Exit codes: 0 ok, 1 certified bound violated, 2 config error, 3 cache
 * missing or stale.
 */

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cmpc/cli.hpp"

namespace {

void add_common(CLI::App* cmd, cmpc::cli::CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path,
                  "Config file (sectioned key=value)");
  cmd->add_option("-s,--set", args.overrides,
                  "Override a config key, e.g. --set mpc.tuning=B");
  cmd->add_flag("--print-effective-config", args.print_effective,
                "Print the merged configuration and continue");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"constrained contouring control toolkit"};
  app.require_subcommand(1);

  cmpc::cli::CommonArgs build_args, sim_args, sweep_args, report_args;
  bool build_force = false, build_serial = false;
  CLI::App* build = app.add_subcommand(
      "rci-build", "Build and cache the invariant sets for a config");
  add_common(build, build_args);
  build->add_flag("--force", build_force, "Rebuild even on a cache hit");
  build->add_flag("--serial", build_serial,
                  "Build sets one at a time instead of in parallel");

  CLI::App* sim = app.add_subcommand(
      "simulate", "Run the closed loop against the cached sets");
  add_common(sim, sim_args);

  std::vector<std::string> report_paths;
  bool report_force = false;
  CLI::App* report =
      app.add_subcommand("report", "Summarize one or more trace files");
  add_common(report, report_args);
  report->add_option("traces", report_paths, "Trace CSV files")
      ->required()
      ->check(CLI::ExistingFile);
  report->add_flag("--force", report_force,
                   "Allow traces from different config hashes");

  int sweep_seeds = 10;
  CLI::App* sweep = app.add_subcommand(
      "sweep", "Run consecutive seeds of one config and summarize");
  add_common(sweep, sweep_args);
  sweep->add_option("--seeds", sweep_seeds, "Number of consecutive seeds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("rci-build")) {
      cmpc::RunConfig c = cmpc::cli::resolve_config(build_args);
      if (build_args.print_effective)
        std::cout << cmpc::effective_config_text(c);
      return cmpc::cli::cmd_rci_build(c, build_force, build_serial);
    }
    if (app.got_subcommand("simulate")) {
      cmpc::RunConfig c = cmpc::cli::resolve_config(sim_args);
      if (sim_args.print_effective)
        std::cout << cmpc::effective_config_text(c);
      return cmpc::cli::cmd_simulate(c);
    }
    if (app.got_subcommand("report")) {
      cmpc::ErrorBudget budget;
      if (!report_args.config_path.empty() || !report_args.overrides.empty()) {
        cmpc::RunConfig c = cmpc::cli::resolve_config(report_args);
        if (report_args.print_effective)
          std::cout << cmpc::effective_config_text(c);
        budget = c.budget();
      }
      return cmpc::cli::cmd_report(report_paths, report_force, std::cout,
                                   budget);
    }
    if (app.got_subcommand("sweep")) {
      cmpc::RunConfig c = cmpc::cli::resolve_config(sweep_args);
      if (sweep_args.print_effective)
        std::cout << cmpc::effective_config_text(c);
      return cmpc::cli::cmd_sweep(c, sweep_seeds);
    }
  } catch (const cmpc::CacheError& e) {
    std::cerr << "cache error: " << e.what() << "\n";
    return cmpc::cli::kExitCacheError;
  } catch (const cmpc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return cmpc::cli::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cmpc::cli::kExitConfigError;
  }
  return cmpc::cli::kExitConfigError;
}
