#include <cstdio>
#include <fstream>
#include <memory>

#include "ceib/checkpoint.hpp"
#include "ceib/errors.hpp"
#include "ceib/model.hpp"
#include "ceib/rng.hpp"
#include "doctest.h"
#include "json.hpp"

using ceib::CEIBModel;
using ceib::Checkpoint;
using ceib::ConfigError;
using ceib::load_checkpoint;
using ceib::ModelConfig;
using ceib::Rng;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/ceib_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.k1 = 2;
  cfg.k2 = 3;
  cfg.d1 = 1;
  cfg.d2 = 2;
  cfg.enc_hidden = {6};
  cfg.dec_hidden = {5};
  return cfg;
}

std::unique_ptr<CEIBModel> perturbed_model(const ModelConfig& cfg) {
  auto model = std::make_unique<CEIBModel>(cfg, 3, 2);
  Rng rng(99);
  model->init(rng);
  auto& v = model->params().values();
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += 0.37 * rng.normal();
  return model;
}

}  // namespace

TEST_CASE("checkpoint round trips parameters bit-exactly") {
  const ModelConfig cfg = small_config();
  auto model = perturbed_model(cfg);
  model->set_y_transform(1.25, 3.5);

  TempFile f("ckpt_roundtrip.json");
  save_checkpoint(f.path, *model, 42, "deadbeefdeadbeef");
  const Checkpoint back = load_checkpoint(f.path);

  CHECK(back.train_seed == 42);
  CHECK(back.config_hash == "deadbeefdeadbeef");
  CHECK(back.model->config() == cfg);
  CHECK(back.model->p1() == 3);
  CHECK(back.model->p2() == 2);
  CHECK(back.model->y_shift() == 1.25);
  CHECK(back.model->y_scale() == 3.5);
  REQUIRE(back.model->params().size() == model->params().size());
  CHECK((back.model->params().values() == model->params().values()));

  // Loaded and original models agree exactly on a forward pass.
  Eigen::MatrixXd x1 = Eigen::MatrixXd::Random(4, 3);
  Eigen::MatrixXd x2 = Eigen::MatrixXd::Random(4, 2);
  const auto q1a = model->encode1(x1);
  const auto q1b = back.model->encode1(x1);
  CHECK((q1a.logits == q1b.logits));
  const auto q2a = model->encode2(x2);
  const auto q2b = back.model->encode2(x2);
  CHECK((q2a.means == q2b.means));
}

TEST_CASE("checkpoint rejects version, shape, and tensor tampering") {
  const ModelConfig cfg = small_config();
  auto model = perturbed_model(cfg);
  TempFile f("ckpt_tamper.json");
  save_checkpoint(f.path, *model, 7, "hash");

  auto load_json = [&] {
    std::ifstream in(f.path);
    return nlohmann::ordered_json::parse(in);
  };
  auto store_json = [&](const nlohmann::ordered_json& j) {
    std::ofstream out(f.path);
    out << j.dump();
  };

  auto j = load_json();
  j["format_version"] = 99;
  store_json(j);
  CHECK_THROWS_AS(load_checkpoint(f.path), ConfigError);

  j = load_json();
  j["format_version"] = ceib::kCheckpointFormatVersion;
  j["params"].erase("enc1.logit.w");
  store_json(j);
  CHECK_THROWS_AS(load_checkpoint(f.path), ConfigError);

  save_checkpoint(f.path, *model, 7, "hash");
  j = load_json();
  j["params"]["enc1.logit.w"]["shape"] = {1, 1};
  store_json(j);
  CHECK_THROWS_AS(load_checkpoint(f.path), ConfigError);

  save_checkpoint(f.path, *model, 7, "hash");
  j = load_json();
  j["params"]["enc1.logit.w"]["data"].push_back(0.0);
  store_json(j);
  CHECK_THROWS_AS(load_checkpoint(f.path), ConfigError);

  save_checkpoint(f.path, *model, 7, "hash");
  j = load_json();
  j["params"]["not.a.tensor"] = {{"shape", {1, 1}}, {"data", {0.0}}};
  store_json(j);
  CHECK_THROWS_AS(load_checkpoint(f.path), ConfigError);
}

TEST_CASE("checkpoint io failures raise config errors") {
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.json"), ConfigError);

  TempFile f("ckpt_invalid.json");
  {
    std::ofstream out(f.path);
    out << "{broken";
  }
  CHECK_THROWS_AS(load_checkpoint(f.path), ConfigError);

  const ModelConfig cfg = small_config();
  auto model = perturbed_model(cfg);
  CHECK_THROWS_AS(save_checkpoint("/nonexistent/dir/ckpt.json", *model, 0, "h"),
                  ConfigError);
}
