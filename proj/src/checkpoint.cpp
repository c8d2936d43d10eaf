#include "ceib/checkpoint.hpp"

#include <fstream>

#include "ceib/errors.hpp"
#include "json.hpp"

namespace ceib {
namespace {

using Json = nlohmann::ordered_json;

Json model_config_json(const ModelConfig& cfg) {
  Json j;
  j["k1"] = cfg.k1;
  j["k2"] = cfg.k2;
  j["d1"] = cfg.d1;
  j["d2"] = cfg.d2;
  j["enc_hidden"] = std::vector<long long>(cfg.enc_hidden.begin(), cfg.enc_hidden.end());
  j["dec_hidden"] = std::vector<long long>(cfg.dec_hidden.begin(), cfg.dec_hidden.end());
  j["outcome"] = outcome_family_name(cfg.outcome);
  return j;
}

ModelConfig model_config_from_json(const Json& j) {
  ModelConfig cfg;
  cfg.k1 = j.at("k1").get<int>();
  cfg.k2 = j.at("k2").get<int>();
  cfg.d1 = j.at("d1").get<int>();
  cfg.d2 = j.at("d2").get<int>();
  cfg.enc_hidden.clear();
  for (const auto& v : j.at("enc_hidden")) {
    cfg.enc_hidden.push_back(v.get<Eigen::Index>());
  }
  cfg.dec_hidden.clear();
  for (const auto& v : j.at("dec_hidden")) {
    cfg.dec_hidden.push_back(v.get<Eigen::Index>());
  }
  cfg.outcome = outcome_family_from_name(j.at("outcome").get<std::string>());
  return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const CEIBModel& model,
                     std::uint64_t train_seed, const std::string& config_hash) {
  Json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["model"] = model_config_json(model.config());
  j["p1"] = static_cast<long long>(model.p1());
  j["p2"] = static_cast<long long>(model.p2());
  j["y_shift"] = model.y_shift();
  j["y_scale"] = model.y_scale();
  j["train_seed"] = train_seed;
  j["config_hash"] = config_hash;

  Json params = Json::object();
  const ParamStore& store = model.params();
  for (const TensorShape& ts : store.tensors()) {
    const auto m = store.value(ts.name);
    Json data = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    }
    params[ts.name] = {{"shape", {ts.rows, ts.cols}}, {"data", std::move(data)}};
  }
  j["params"] = std::move(params);

  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  out << j.dump(1) << "\n";
  if (!out) throw ConfigError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw ConfigError("checkpoint '" + path + "' is not valid JSON");
  }

  try {
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw ConfigError("checkpoint '" + path + "': format version " +
                        std::to_string(version) + " unsupported (expected " +
                        std::to_string(kCheckpointFormatVersion) + ")");
    }
    const ModelConfig mcfg = model_config_from_json(j.at("model"));
    mcfg.validate();
    const auto p1 = j.at("p1").get<Eigen::Index>();
    const auto p2 = j.at("p2").get<Eigen::Index>();

    Checkpoint ckpt;
    ckpt.model = std::make_unique<CEIBModel>(mcfg, p1, p2);
    ckpt.model->set_y_transform(j.at("y_shift").get<double>(),
                                j.at("y_scale").get<double>());
    ckpt.train_seed = j.at("train_seed").get<std::uint64_t>();
    ckpt.config_hash = j.at("config_hash").get<std::string>();

    ParamStore& store = ckpt.model->params();
    const Json& params = j.at("params");
    for (const TensorShape& ts : store.tensors()) {
      auto it = params.find(ts.name);
      if (it == params.end()) {
        throw ConfigError("checkpoint '" + path + "': missing tensor '" +
                          ts.name + "'");
      }
      const Json& shape = it->at("shape");
      if (shape.size() != 2 || shape[0].get<Eigen::Index>() != ts.rows ||
          shape[1].get<Eigen::Index>() != ts.cols) {
        throw ConfigError("checkpoint '" + path + "': tensor '" + ts.name +
                          "' shape mismatch");
      }
      const Json& data = it->at("data");
      if (static_cast<Eigen::Index>(data.size()) != ts.size()) {
        throw ConfigError("checkpoint '" + path + "': tensor '" + ts.name +
                          "' has " + std::to_string(data.size()) +
                          " values, expected " + std::to_string(ts.size()));
      }
      auto m = store.value(ts.name);
      std::size_t i = 0;
      for (Eigen::Index r = 0; r < ts.rows; ++r) {
        for (Eigen::Index c = 0; c < ts.cols; ++c) {
          m(r, c) = data[i++].get<double>();
        }
      }
    }
    for (const auto& [name, _] : params.items()) {
      if (!store.has(name)) {
        throw ConfigError("checkpoint '" + path + "': unexpected tensor '" +
                          name + "'");
      }
    }
    return ckpt;
  } catch (const Json::exception& e) {
    throw ConfigError("checkpoint '" + path + "': " + e.what());
  }
}

}  // namespace ceib
