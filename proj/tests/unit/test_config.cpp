#include <cstdio>
#include <fstream>

#include "ceib/config.hpp"
#include "ceib/errors.hpp"
#include "doctest.h"
#include "json.hpp"

using ceib::config_from_json;
using ceib::ConfigError;
using ceib::ExperimentConfig;
using ceib::Task;
using Json = nlohmann::ordered_json;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/ceib_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("config round trips through json with defaults intact") {
  ExperimentConfig cfg;
  cfg.task = Task::twins_sim;
  cfg.seeds = {3, 1, 4};
  cfg.mask.fraction = 0.25;
  cfg.train.lambda = 12.5;
  cfg.model.outcome = ceib::OutcomeFamily::bernoulli;
  cfg.baselines = {"ols2", "lr"};
  cfg.sweep.lambda_grid = {0.1, 1.0};
  cfg.sweep.dim_grid = {{1, 2, 3, 4}};

  const Json j = config_to_json(cfg);
  const ExperimentConfig back = config_from_json(j);
  CHECK(back.task == Task::twins_sim);
  CHECK(back.seeds == cfg.seeds);
  CHECK(back.mask.fraction == 0.25);
  CHECK(back.train.lambda == 12.5);
  CHECK(back.model.outcome == ceib::OutcomeFamily::bernoulli);
  CHECK(back.baselines == cfg.baselines);
  CHECK(back.sweep.lambda_grid == cfg.sweep.lambda_grid);
  REQUIRE(back.sweep.dim_grid.size() == 1);
  CHECK(back.sweep.dim_grid[0].d1 == 1);
  CHECK(back.sweep.dim_grid[0].k2 == 4);
  // A second round trip is byte-stable.
  CHECK(config_to_json(back).dump() == j.dump());
}

TEST_CASE("eigen-valued generator fields parse from arrays") {
  Json j;
  j["linear_gaussian"] = {{"w", {1.5, -2.0}},
                          {"dz", 2},
                          {"a1", {{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}}}};
  const ExperimentConfig cfg = config_from_json(j);
  REQUIRE(cfg.linear_gaussian.w.size() == 2);
  CHECK(cfg.linear_gaussian.w(1) == -2.0);
  REQUIRE(cfg.linear_gaussian.a1.rows() == 3);
  CHECK(cfg.linear_gaussian.a1(2, 1) == 1.0);

  Json ragged;
  ragged["linear_gaussian"] = {{"a1", {{1.0, 0.0}, {0.0}}}};
  CHECK_THROWS_AS(config_from_json(ragged), ConfigError);
}

TEST_CASE("unknown keys are rejected at every level") {
  Json top;
  top["tasks"] = "linear_gaussian";
  CHECK_THROWS_AS(config_from_json(top), ConfigError);

  Json nested;
  nested["train"] = {{"lambdas", 3.0}};
  CHECK_THROWS_AS(config_from_json(nested), ConfigError);

  Json wrong_type;
  wrong_type["train"] = {{"lambda", "three"}};
  CHECK_THROWS_AS(config_from_json(wrong_type), ConfigError);
}

TEST_CASE("validation rejects bad experiment settings") {
  Json empty_seeds;
  empty_seeds["seeds"] = Json::array();
  CHECK_THROWS_AS(config_from_json(empty_seeds), ConfigError);

  Json bad_baseline;
  bad_baseline["baselines"] = {"ols3"};
  CHECK_THROWS_AS(config_from_json(bad_baseline), ConfigError);

  Json bad_mask;
  bad_mask["mask"] = {{"fraction", 1.5}};
  CHECK_THROWS_AS(config_from_json(bad_mask), ConfigError);

  Json bad_task;
  bad_task["task"] = "nonlinear";
  CHECK_THROWS_AS(config_from_json(bad_task), ConfigError);

  Json ihdp_no_dir;
  ihdp_no_dir["task"] = "ihdp";
  CHECK_THROWS_AS(config_from_json(ihdp_no_dir), ConfigError);
}

TEST_CASE("overrides rewrite dotted paths and parse json values") {
  Json j;
  j["train"] = {{"lambda", 1.0}};
  ceib::apply_override(j, "train.lambda=30");
  CHECK(j["train"]["lambda"] == 30);
  ceib::apply_override(j, "model.outcome=bernoulli");
  CHECK(j["model"]["outcome"] == "bernoulli");
  ceib::apply_override(j, "sweep.lambda_grid=[0.5,5]");
  CHECK(j["sweep"]["lambda_grid"].size() == 2);
  ceib::apply_override(j, "mask.fraction=0.5");
  CHECK(j["mask"]["fraction"] == 0.5);

  CHECK_THROWS_AS(ceib::apply_override(j, "no_equals_sign"), ConfigError);
  CHECK_THROWS_AS(ceib::apply_override(j, "=5"), ConfigError);
  CHECK_THROWS_AS(ceib::apply_override(j, "train..lambda=1"), ConfigError);
  // Descending through a scalar is an error.
  CHECK_THROWS_AS(ceib::apply_override(j, "train.lambda.x=1"), ConfigError);
}

TEST_CASE("config hash ignores key order and tracks values") {
  Json a = Json::parse(R"({"train": {"lambda": 3, "epochs": 10}})");
  Json b = Json::parse(R"({"train": {"epochs": 10, "lambda": 3}})");
  CHECK(ceib::config_hash(a) == ceib::config_hash(b));

  Json c = Json::parse(R"({"train": {"epochs": 10, "lambda": 4}})");
  CHECK(ceib::config_hash(a) != ceib::config_hash(c));
  CHECK(ceib::config_hash(a).size() == 16);
}

TEST_CASE("load_config applies overrides and reports effective values") {
  TempFile f("load_config.json");
  {
    std::ofstream out(f.path);
    out << R"({"task": "linear_gaussian", "train": {"lambda": 2}})";
  }
  const ceib::LoadedConfig lc = ceib::load_config(f.path, {"train.lambda=7"});
  CHECK(lc.config.train.lambda == 7.0);
  CHECK(lc.overrides == std::vector<std::string>{"train.lambda=7"});
  // The effective snapshot carries defaults for fields the file omitted.
  CHECK(lc.effective["model"]["k1"] == 5);

  CHECK_THROWS_AS(ceib::load_config("/nonexistent/cfg.json", {}), ConfigError);

  TempFile bad("bad_config.json");
  {
    std::ofstream out(bad.path);
    out << "{not json";
  }
  CHECK_THROWS_AS(ceib::load_config(bad.path, {}), ConfigError);
}

TEST_CASE("task names round trip") {
  for (const Task t :
       {Task::linear_gaussian, Task::twins_sim, Task::ihdp}) {
    CHECK(ceib::task_from_name(ceib::task_name(t)) == t);
  }
  CHECK_THROWS_AS(ceib::task_from_name("unknown"), ConfigError);
}
