#include "ceib/config.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "ceib/errors.hpp"

namespace ceib {
namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void bad(const std::string& msg) { throw ConfigError(msg); }

// Strict object reader: every key must be consumed, so typos fail loudly
// instead of silently keeping a default.
class Fields {
 public:
  Fields(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) bad(where_ + ": expected an object");
  }

  const Json* get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const std::string& where() const { return where_; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        bad(where_ + ": unknown key '" + it.key() + "'");
      }
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

double as_double(const Json& v, const std::string& where) {
  if (!v.is_number()) bad(where + ": expected a number");
  return v.get<double>();
}

int as_int(const Json& v, const std::string& where) {
  if (!v.is_number_integer()) bad(where + ": expected an integer");
  return v.get<int>();
}

std::uint64_t as_seed(const Json& v, const std::string& where) {
  if (!v.is_number_unsigned() && !v.is_number_integer()) {
    bad(where + ": expected a non-negative integer");
  }
  if (v.is_number_integer() && v.get<long long>() < 0) {
    bad(where + ": expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

bool as_bool(const Json& v, const std::string& where) {
  if (!v.is_boolean()) bad(where + ": expected a boolean");
  return v.get<bool>();
}

std::string as_string(const Json& v, const std::string& where) {
  if (!v.is_string()) bad(where + ": expected a string");
  return v.get<std::string>();
}

template <typename T, typename F>
std::vector<T> as_vector(const Json& v, const std::string& where, F&& conv) {
  if (!v.is_array()) bad(where + ": expected an array");
  std::vector<T> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(conv(v[i], where + "[" + std::to_string(i) + "]"));
  }
  return out;
}

Eigen::VectorXd as_eigen_vector(const Json& v, const std::string& where) {
  const auto vals = as_vector<double>(v, where, as_double);
  return Eigen::Map<const Eigen::VectorXd>(vals.data(),
                                           static_cast<Eigen::Index>(vals.size()));
}

Eigen::MatrixXd as_eigen_matrix(const Json& v, const std::string& where) {
  if (!v.is_array()) bad(where + ": expected an array of rows");
  Eigen::MatrixXd m;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto row = as_eigen_vector(v[i], where + "[" + std::to_string(i) + "]");
    if (i == 0) {
      m.resize(static_cast<Eigen::Index>(v.size()), row.size());
    } else if (row.size() != m.cols()) {
      bad(where + ": ragged rows");
    }
    m.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return m;
}

Json eigen_to_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json eigen_to_json(const Eigen::MatrixXd& m) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(std::move(row));
  }
  return a;
}

SplitSpec parse_split(const Json& j) {
  SplitSpec s;
  Fields f(j, "split");
  if (const Json* v = f.get("train_frac")) s.train_frac = as_double(*v, "split.train_frac");
  if (const Json* v = f.get("val_frac")) s.val_frac = as_double(*v, "split.val_frac");
  if (const Json* v = f.get("test_frac")) s.test_frac = as_double(*v, "split.test_frac");
  if (const Json* v = f.get("seed")) s.seed = as_seed(*v, "split.seed");
  f.finish();
  return s;
}

MaskConfig parse_mask(const Json& j) {
  MaskConfig m;
  Fields f(j, "mask");
  if (const Json* v = f.get("fraction")) m.fraction = as_double(*v, "mask.fraction");
  if (const Json* v = f.get("seed")) m.seed = as_seed(*v, "mask.seed");
  f.finish();
  return m;
}

LinearGaussianConfig parse_linear_gaussian(const Json& j) {
  LinearGaussianConfig g;
  Fields f(j, "linear_gaussian");
  if (const Json* v = f.get("n")) g.n = as_int(*v, "linear_gaussian.n");
  if (const Json* v = f.get("dz")) g.dz = as_int(*v, "linear_gaussian.dz");
  if (const Json* v = f.get("p1")) g.p1 = as_int(*v, "linear_gaussian.p1");
  if (const Json* v = f.get("p2")) g.p2 = as_int(*v, "linear_gaussian.p2");
  if (const Json* v = f.get("a1")) g.a1 = as_eigen_matrix(*v, "linear_gaussian.a1");
  if (const Json* v = f.get("a2")) g.a2 = as_eigen_matrix(*v, "linear_gaussian.a2");
  if (const Json* v = f.get("w")) g.w = as_eigen_vector(*v, "linear_gaussian.w");
  if (const Json* v = f.get("b")) g.b = as_double(*v, "linear_gaussian.b");
  if (const Json* v = f.get("beta0")) g.beta0 = as_eigen_vector(*v, "linear_gaussian.beta0");
  if (const Json* v = f.get("beta1")) g.beta1 = as_eigen_vector(*v, "linear_gaussian.beta1");
  if (const Json* v = f.get("intercept0")) g.intercept0 = as_double(*v, "linear_gaussian.intercept0");
  if (const Json* v = f.get("intercept1")) g.intercept1 = as_double(*v, "linear_gaussian.intercept1");
  if (const Json* v = f.get("outcome_noise_sd")) g.outcome_noise_sd = as_double(*v, "linear_gaussian.outcome_noise_sd");
  if (const Json* v = f.get("covariate_noise_sd")) g.covariate_noise_sd = as_double(*v, "linear_gaussian.covariate_noise_sd");
  if (const Json* v = f.get("regime")) g.regime = regime_from_name(as_string(*v, "linear_gaussian.regime"));
  if (const Json* v = f.get("seed")) g.seed = as_seed(*v, "linear_gaussian.seed");
  if (const Json* v = f.get("severity_attribute")) g.severity_attribute = as_bool(*v, "linear_gaussian.severity_attribute");
  if (const Json* v = f.get("group_attribute")) g.group_attribute = as_bool(*v, "linear_gaussian.group_attribute");
  f.finish();
  return g;
}

TwinsSimConfig parse_twins(const Json& j) {
  TwinsSimConfig g;
  Fields f(j, "twins_sim");
  if (const Json* v = f.get("n")) g.n = as_int(*v, "twins_sim.n");
  if (const Json* v = f.get("p_extra")) g.p_extra = as_int(*v, "twins_sim.p_extra");
  if (const Json* v = f.get("replicates")) g.replicates = as_int(*v, "twins_sim.replicates");
  if (const Json* v = f.get("flip_prob")) g.flip_prob = as_double(*v, "twins_sim.flip_prob");
  if (const Json* v = f.get("a")) g.a = as_double(*v, "twins_sim.a");
  if (const Json* v = f.get("b")) g.b = as_double(*v, "twins_sim.b");
  if (const Json* v = f.get("c")) g.c = as_double(*v, "twins_sim.c");
  if (const Json* v = f.get("x2_cols")) g.x2_cols = as_vector<int>(*v, "twins_sim.x2_cols", as_int);
  if (const Json* v = f.get("seed")) g.seed = as_seed(*v, "twins_sim.seed");
  f.finish();
  return g;
}

IhdpConfig parse_ihdp(const Json& j) {
  IhdpConfig g;
  Fields f(j, "ihdp");
  if (const Json* v = f.get("dir")) g.dir = as_string(*v, "ihdp.dir");
  if (const Json* v = f.get("x2_cols")) g.x2_cols = as_vector<int>(*v, "ihdp.x2_cols", as_int);
  f.finish();
  return g;
}

ModelConfig parse_model(const Json& j) {
  ModelConfig m;
  Fields f(j, "model");
  if (const Json* v = f.get("k1")) m.k1 = as_int(*v, "model.k1");
  if (const Json* v = f.get("k2")) m.k2 = as_int(*v, "model.k2");
  if (const Json* v = f.get("d1")) m.d1 = as_int(*v, "model.d1");
  if (const Json* v = f.get("d2")) m.d2 = as_int(*v, "model.d2");
  auto as_hidden = [](const Json& v, const std::string& where) {
    return static_cast<Eigen::Index>(as_int(v, where));
  };
  if (const Json* v = f.get("enc_hidden")) {
    m.enc_hidden = as_vector<Eigen::Index>(*v, "model.enc_hidden", as_hidden);
  }
  if (const Json* v = f.get("dec_hidden")) {
    m.dec_hidden = as_vector<Eigen::Index>(*v, "model.dec_hidden", as_hidden);
  }
  if (const Json* v = f.get("outcome")) {
    m.outcome = outcome_family_from_name(as_string(*v, "model.outcome"));
  }
  f.finish();
  return m;
}

TrainConfig parse_train(const Json& j) {
  TrainConfig t;
  Fields f(j, "train");
  if (const Json* v = f.get("lambda")) t.lambda = as_double(*v, "train.lambda");
  if (const Json* v = f.get("epochs")) t.epochs = as_int(*v, "train.epochs");
  if (const Json* v = f.get("batch")) t.batch = as_int(*v, "train.batch");
  if (const Json* v = f.get("lr")) t.lr = as_double(*v, "train.lr");
  if (const Json* v = f.get("tau_start")) t.tau_start = as_double(*v, "train.tau_start");
  if (const Json* v = f.get("tau_end")) t.tau_end = as_double(*v, "train.tau_end");
  if (const Json* v = f.get("patience")) t.patience = as_int(*v, "train.patience");
  f.finish();
  return t;
}

SweepSpec parse_sweep(const Json& j) {
  SweepSpec s;
  Fields f(j, "sweep");
  if (const Json* v = f.get("lambda_grid")) {
    s.lambda_grid = as_vector<double>(*v, "sweep.lambda_grid", as_double);
  }
  if (const Json* v = f.get("dim_grid")) {
    s.dim_grid = as_vector<SweepGridPoint>(
        *v, "sweep.dim_grid", [](const Json& p, const std::string& where) {
          const auto q = as_vector<int>(p, where, as_int);
          if (q.size() != 4) bad(where + ": expected [d1, d2, k1, k2]");
          return SweepGridPoint{q[0], q[1], q[2], q[3]};
        });
  }
  if (const Json* v = f.get("seeds")) {
    s.seeds = as_vector<std::uint64_t>(*v, "sweep.seeds", as_seed);
  }
  f.finish();
  return s;
}

const std::set<std::string> kKnownBaselines = {"ols1", "ols2", "knn", "lr"};

}  // namespace

const char* task_name(Task t) {
  switch (t) {
    case Task::linear_gaussian: return "linear_gaussian";
    case Task::twins_sim: return "twins_sim";
    case Task::ihdp: return "ihdp";
  }
  throw ConfigError("task_name: unreachable");
}

Task task_from_name(const std::string& name) {
  if (name == "linear_gaussian") return Task::linear_gaussian;
  if (name == "twins_sim") return Task::twins_sim;
  if (name == "ihdp") return Task::ihdp;
  throw ConfigError("unknown task '" + name +
                    "' (expected linear_gaussian, twins_sim, or ihdp)");
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("config: seed list must be non-empty");
  split.validate();
  if (mask.fraction < 0.0 || mask.fraction > 1.0) {
    throw ConfigError("config: mask.fraction must lie in [0, 1]");
  }
  switch (task) {
    case Task::linear_gaussian: linear_gaussian.validate(); break;
    case Task::twins_sim: twins_sim.validate(); break;
    case Task::ihdp:
      if (ihdp.dir.empty()) throw ConfigError("config: ihdp.dir must be set");
      if (ihdp.x2_cols.empty()) throw ConfigError("config: ihdp.x2_cols must be non-empty");
      break;
  }
  model.validate();
  train.validate();
  for (const auto& b : baselines) {
    if (!kKnownBaselines.count(b)) {
      throw ConfigError("config: unknown baseline '" + b +
                        "' (expected ols1, ols2, knn, or lr)");
    }
  }
  if (knn_k < 1) throw ConfigError("config: knn_k must be positive");
  for (const double l : sweep.lambda_grid) {
    if (l < 0.0) throw ConfigError("config: sweep.lambda_grid entries must be >= 0");
  }
}

ExperimentConfig config_from_json(const nlohmann::ordered_json& j) {
  ExperimentConfig cfg;
  Fields f(j, "config");
  if (const Json* v = f.get("task")) cfg.task = task_from_name(as_string(*v, "task"));
  if (const Json* v = f.get("out_dir")) cfg.out_dir = as_string(*v, "out_dir");
  if (const Json* v = f.get("seeds")) cfg.seeds = as_vector<std::uint64_t>(*v, "seeds", as_seed);
  if (const Json* v = f.get("split")) cfg.split = parse_split(*v);
  if (const Json* v = f.get("mask")) cfg.mask = parse_mask(*v);
  if (const Json* v = f.get("linear_gaussian")) cfg.linear_gaussian = parse_linear_gaussian(*v);
  if (const Json* v = f.get("twins_sim")) cfg.twins_sim = parse_twins(*v);
  if (const Json* v = f.get("ihdp")) cfg.ihdp = parse_ihdp(*v);
  if (const Json* v = f.get("model")) cfg.model = parse_model(*v);
  if (const Json* v = f.get("train")) cfg.train = parse_train(*v);
  if (const Json* v = f.get("baselines")) {
    cfg.baselines = as_vector<std::string>(*v, "baselines", as_string);
  }
  if (const Json* v = f.get("knn_k")) cfg.knn_k = as_int(*v, "knn_k");
  if (const Json* v = f.get("sweep")) cfg.sweep = parse_sweep(*v);
  f.finish();
  cfg.validate();
  return cfg;
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg) {
  Json j;
  j["task"] = task_name(cfg.task);
  j["out_dir"] = cfg.out_dir;
  j["seeds"] = cfg.seeds;
  j["split"] = {{"train_frac", cfg.split.train_frac},
                {"val_frac", cfg.split.val_frac},
                {"test_frac", cfg.split.test_frac},
                {"seed", cfg.split.seed}};
  j["mask"] = {{"fraction", cfg.mask.fraction}, {"seed", cfg.mask.seed}};
  {
    const auto& g = cfg.linear_gaussian;
    Json lg;
    lg["n"] = g.n;
    lg["dz"] = g.dz;
    lg["p1"] = g.p1;
    lg["p2"] = g.p2;
    if (g.a1.size() > 0) lg["a1"] = eigen_to_json(g.a1);
    if (g.a2.size() > 0) lg["a2"] = eigen_to_json(g.a2);
    if (g.w.size() > 0) lg["w"] = eigen_to_json(g.w);
    lg["b"] = g.b;
    if (g.beta0.size() > 0) lg["beta0"] = eigen_to_json(g.beta0);
    if (g.beta1.size() > 0) lg["beta1"] = eigen_to_json(g.beta1);
    lg["intercept0"] = g.intercept0;
    lg["intercept1"] = g.intercept1;
    lg["outcome_noise_sd"] = g.outcome_noise_sd;
    lg["covariate_noise_sd"] = g.covariate_noise_sd;
    lg["regime"] = regime_name(g.regime);
    lg["seed"] = g.seed;
    lg["severity_attribute"] = g.severity_attribute;
    lg["group_attribute"] = g.group_attribute;
    j["linear_gaussian"] = std::move(lg);
  }
  {
    const auto& g = cfg.twins_sim;
    Json tw;
    tw["n"] = g.n;
    tw["p_extra"] = g.p_extra;
    tw["replicates"] = g.replicates;
    tw["flip_prob"] = g.flip_prob;
    tw["a"] = g.a;
    tw["b"] = g.b;
    tw["c"] = g.c;
    if (!g.x2_cols.empty()) tw["x2_cols"] = g.x2_cols;
    tw["seed"] = g.seed;
    j["twins_sim"] = std::move(tw);
  }
  {
    Json ih;
    ih["dir"] = cfg.ihdp.dir;
    ih["x2_cols"] = cfg.ihdp.x2_cols;
    j["ihdp"] = std::move(ih);
  }
  {
    const auto& m = cfg.model;
    Json mj;
    mj["k1"] = m.k1;
    mj["k2"] = m.k2;
    mj["d1"] = m.d1;
    mj["d2"] = m.d2;
    mj["enc_hidden"] = std::vector<long long>(m.enc_hidden.begin(), m.enc_hidden.end());
    mj["dec_hidden"] = std::vector<long long>(m.dec_hidden.begin(), m.dec_hidden.end());
    mj["outcome"] = outcome_family_name(m.outcome);
    j["model"] = std::move(mj);
  }
  {
    const auto& t = cfg.train;
    j["train"] = {{"lambda", t.lambda},   {"epochs", t.epochs},
                  {"batch", t.batch},     {"lr", t.lr},
                  {"tau_start", t.tau_start}, {"tau_end", t.tau_end},
                  {"patience", t.patience}};
  }
  j["baselines"] = cfg.baselines;
  j["knn_k"] = cfg.knn_k;
  {
    Json sw;
    sw["lambda_grid"] = cfg.sweep.lambda_grid;
    Json dims = Json::array();
    for (const auto& p : cfg.sweep.dim_grid) {
      dims.push_back({p.d1, p.d2, p.k1, p.k2});
    }
    sw["dim_grid"] = std::move(dims);
    sw["seeds"] = cfg.sweep.seeds;
    j["sweep"] = std::move(sw);
  }
  return j;
}

void apply_override(nlohmann::ordered_json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    bad("override '" + assignment + "': expected key.path=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  // Values parse as JSON when they can (numbers, booleans, arrays) and fall
  // back to plain strings, so --set model.outcome=bernoulli needs no quotes.
  Json value = Json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  Json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) bad("override '" + assignment + "': empty path segment");
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    if (!node->contains(key)) (*node)[key] = Json::object();
    node = &(*node)[key];
    if (!node->is_object()) {
      bad("override '" + assignment + "': '" + key + "' is not an object");
    }
    start = dot + 1;
  }
}

namespace {

LoadedConfig finish_load(Json j, const std::vector<std::string>& overrides) {
  for (const auto& ov : overrides) apply_override(j, ov);
  LoadedConfig out;
  out.config = config_from_json(j);
  // Round-trip through the struct so the snapshot carries every field with
  // defaults filled in, independent of which keys the file spelled out.
  out.effective = config_to_json(out.config);
  out.overrides = overrides;
  return out;
}

}  // namespace

LoadedConfig load_config(const std::string& path,
                         const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) bad("cannot open config file '" + path + "'");
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) bad("config file '" + path + "' is not valid JSON");
  return finish_load(std::move(j), overrides);
}

LoadedConfig load_config_text(const std::string& json_text,
                              const std::vector<std::string>& overrides) {
  Json j = Json::parse(json_text, nullptr, false);
  if (j.is_discarded()) bad("config text is not valid JSON");
  return finish_load(std::move(j), overrides);
}

std::string config_hash(const nlohmann::ordered_json& j) {
  // Key order must not affect the hash, so canonicalize through the sorting
  // json type before dumping.
  const std::string canon = nlohmann::json::parse(j.dump()).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace ceib
