#ifndef CEIB_CONFIG_HPP
#define CEIB_CONFIG_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ceib/generators.hpp"
#include "ceib/info.hpp"
#include "ceib/model.hpp"
#include "ceib/objective.hpp"

#include "json.hpp"

namespace ceib {

enum class Task { linear_gaussian, twins_sim, ihdp };
const char* task_name(Task t);
Task task_from_name(const std::string& name);

struct IhdpConfig {
  std::string dir;                    // holds ihdp_npci_<i>.csv replicates
  std::vector<int> x2_cols = {0, 1, 2};
};

struct MaskConfig {
  double fraction = 0.0;  // applied to the test split at evaluation
  std::uint64_t seed = 4242;
};

struct SweepSpec {
  std::vector<double> lambda_grid;
  std::vector<SweepGridPoint> dim_grid;
  std::vector<std::uint64_t> seeds;  // empty: reuse experiment seeds
};

// One experiment: a task, its data parameters, the model/train settings, and
// the evaluation protocol. Every random stream derives from the named seeds.
struct ExperimentConfig {
  Task task = Task::linear_gaussian;
  std::string out_dir = "out";
  std::vector<std::uint64_t> seeds = {0};
  SplitSpec split;
  MaskConfig mask;
  LinearGaussianConfig linear_gaussian;
  TwinsSimConfig twins_sim;
  IhdpConfig ihdp;
  ModelConfig model;
  TrainConfig train;
  std::vector<std::string> baselines = {"ols1", "ols2", "knn"};
  int knn_k = 5;
  SweepSpec sweep;

  void validate() const;
};

// Parse with strict key checking; unknown keys are config errors. Missing
// keys keep the struct defaults above.
ExperimentConfig config_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);

// Load a config file and apply dotted-path scalar overrides of the form
// "section.key=value" in order. Returns the effective config plus its
// canonical JSON (for snapshots and hashing).
struct LoadedConfig {
  ExperimentConfig config;
  nlohmann::ordered_json effective;
  std::vector<std::string> overrides;
};
LoadedConfig load_config(const std::string& path,
                         const std::vector<std::string>& overrides);
LoadedConfig load_config_text(const std::string& json_text,
                              const std::vector<std::string>& overrides);

void apply_override(nlohmann::ordered_json& j, const std::string& assignment);

// FNV-1a over the key-sorted dump of the JSON, as 16 hex digits.
std::string config_hash(const nlohmann::ordered_json& j);

}  // namespace ceib

#endif
