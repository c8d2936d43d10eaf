#ifndef CEIB_HARNESS_HPP
#define CEIB_HARNESS_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ceib/config.hpp"
#include "ceib/metrics.hpp"

namespace ceib {

// Per-seed random streams. Every seed in the experiment's list derives
// independent generator, split, and mask seeds from the respective base seeds;
// the experiment seed itself drives training.
struct SeedPlan {
  std::uint64_t gen = 0;
  std::uint64_t split = 0;
  std::uint64_t mask = 0;
  std::uint64_t train = 0;
};
SeedPlan seed_plan(const ExperimentConfig& cfg, std::uint64_t seed);

// Task dispatch: simulated tasks generate with the derived seed; the ihdp
// task loads replicate file `ihdp_npci_<seed+1>.csv` from the configured
// directory.
Dataset dataset_for_seed(const ExperimentConfig& cfg, std::uint64_t seed);

// Runs live in versioned subdirectories out_dir/run_NNN. A new invocation
// reuses the newest run whose stored config hash matches the effective
// config and creates the next number otherwise; the effective config (with
// overrides applied) is snapshotted as config.json on creation. Output files
// carry no timestamps; wall-clock lines go to the log.txt sidecar only.
std::string resolve_run_dir(const LoadedConfig& lc);
void append_log(const std::string& run_dir, const std::string& line);

std::string data_path(const std::string& run_dir, std::uint64_t seed);
std::string data_mask_path(const std::string& run_dir, std::uint64_t seed);
std::string checkpoint_path(const std::string& run_dir, std::uint64_t seed);
std::string trace_path(const std::string& run_dir, std::uint64_t seed);

// Writes per-seed dataset CSVs (plus observation masks) into the run
// directory and prints one summary line per seed.
void run_generate(const LoadedConfig& lc, const std::string& run_dir,
                  std::ostream& out);

struct TrainSeedSummary {
  std::uint64_t seed = 0;
  bool skipped = false;  // checkpoint already present and resume was set
  int best_epoch = -1;
  int epochs_run = 0;
  double best_val_total = 0.0;
};

// Trains one model per seed (checkpoint + trace per seed), optionally in
// parallel; seeds are independent, so results match the sequential run.
// Divergence of any seed surfaces as NumericalError after the remaining
// seeds finish.
std::vector<TrainSeedSummary> run_train(const LoadedConfig& lc,
                                        const std::string& run_dir, bool resume,
                                        int workers, std::ostream& out);

// One scored quantity. Within-sample rows carry split "train", held-out rows
// split "test"; the seed ties the number to its replicate.
struct ReportRow {
  std::string method;
  std::string metric;
  std::string split;
  std::uint64_t seed = 0;
  double value = 0.0;
  bool flagged = false;
};

struct RunReport {
  std::string config_hash;
  std::vector<ReportRow> rows;
  std::vector<ReplicateSummary> summaries;  // per (method, metric.split)
  std::vector<std::string> artifacts;       // files written, run-dir relative
};

// Scores the trained checkpoints: effect estimates and errors for the model
// (fully observed and with the configured fraction of test rows masked),
// the configured baselines (masked rows mean-imputed), and cluster
// composition tables per attribute. Refuses checkpoints whose stored config
// hash disagrees with the effective config. Writes report.json plus
// summary.csv and per-seed composition/cluster CSVs.
RunReport run_evaluate(const LoadedConfig& lc, const std::string& run_dir,
                       std::ostream& out);

// Information-plane sweep over the configured lambda/dimension grids on the
// first seed's dataset and split; writes curve.csv.
void run_sweep(const LoadedConfig& lc, const std::string& run_dir, int workers,
               std::ostream& out);

// Renders report.json (and curve.csv when present) as plain-text tables.
void print_report(const std::string& run_dir, std::ostream& out);

}  // namespace ceib

#endif
