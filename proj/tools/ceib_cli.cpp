// Command-line driver for the cause-effect bottleneck experiments.
//
//   ceib generate --config cfg.json          per-seed dataset CSVs
//   ceib train    --config cfg.json          one checkpoint + trace per seed
//   ceib evaluate --config cfg.json          report.json, summary.csv, tables
//   ceib sweep    --config cfg.json          information-plane curve.csv
//   ceib report   --config cfg.json          pretty-print an existing report
//
// Outputs land in versioned run directories under the config's out_dir; a
// rerun with the same effective config reuses the latest matching run.
// Exit codes: 0 success, 1 configuration or usage error, 2 numerical failure.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ceib/config.hpp"
#include "ceib/errors.hpp"
#include "ceib/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"cause-effect information bottleneck experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string run_dir_flag;
  bool resume = false;
  int workers = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config JSON")
        ->required();
    sub->add_option("--set", overrides,
                    "override a config value, e.g. --set train.lambda=10");
    sub->add_option("--run-dir", run_dir_flag,
                    "use this run directory instead of resolving one");
  };

  CLI::App* cmd_generate =
      app.add_subcommand("generate", "write per-seed dataset CSVs");
  add_common(cmd_generate);

  CLI::App* cmd_train =
      app.add_subcommand("train", "train one model per seed");
  add_common(cmd_train);
  cmd_train->add_flag("--resume", resume,
                      "skip seeds whose checkpoint already exists");
  cmd_train->add_option("--workers", workers, "parallel workers across seeds")
      ->check(CLI::PositiveNumber);

  CLI::App* cmd_evaluate = app.add_subcommand(
      "evaluate", "score checkpoints and baselines, write the report");
  add_common(cmd_evaluate);

  CLI::App* cmd_sweep =
      app.add_subcommand("sweep", "train over the lambda/dimension grid");
  add_common(cmd_sweep);
  cmd_sweep->add_option("--workers", workers,
                        "parallel workers across grid cells")
      ->check(CLI::PositiveNumber);

  CLI::App* cmd_report =
      app.add_subcommand("report", "print an existing run's report");
  add_common(cmd_report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const ceib::LoadedConfig lc = ceib::load_config(config_path, overrides);
    const std::string run_dir =
        run_dir_flag.empty() ? ceib::resolve_run_dir(lc) : run_dir_flag;
    ceib::append_log(run_dir, "command: " + app.get_subcommands().front()->get_name());

    if (cmd_generate->parsed()) {
      ceib::run_generate(lc, run_dir, std::cout);
    } else if (cmd_train->parsed()) {
      ceib::run_train(lc, run_dir, resume, workers, std::cout);
    } else if (cmd_evaluate->parsed()) {
      ceib::run_evaluate(lc, run_dir, std::cout);
    } else if (cmd_sweep->parsed()) {
      ceib::run_sweep(lc, run_dir, workers, std::cout);
    } else if (cmd_report->parsed()) {
      ceib::print_report(run_dir, std::cout);
    }
    return 0;
  } catch (const ceib::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const ceib::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
