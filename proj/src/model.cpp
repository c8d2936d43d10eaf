#include "ceib/model.hpp"

#include <cmath>
#include <stdexcept>

#include "ceib/errors.hpp"

namespace ceib {

std::string outcome_family_name(OutcomeFamily f) {
  return f == OutcomeFamily::gaussian ? "gaussian" : "bernoulli";
}

OutcomeFamily outcome_family_from_name(const std::string& s) {
  if (s == "gaussian") return OutcomeFamily::gaussian;
  if (s == "bernoulli") return OutcomeFamily::bernoulli;
  throw ConfigError("unknown outcome family: " + s);
}

void ModelConfig::validate() const {
  if (k1 < 1 || k2 < 1) throw ConfigError("model: k1 and k2 must be positive");
  if (d1 < 1 || d2 < 1) throw ConfigError("model: d1 and d2 must be positive");
  for (const auto h : enc_hidden) {
    if (h < 1) throw ConfigError("model: encoder hidden sizes must be positive");
  }
  for (const auto h : dec_hidden) {
    if (h < 1) throw ConfigError("model: decoder hidden sizes must be positive");
  }
}

Eigen::MatrixXd MixturePosterior::posterior_mean() const {
  const Eigen::MatrixXd r = responsibilities();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n(), d);
  for (int c = 0; c < k; ++c) {
    out.array() +=
        means.middleCols(c * d, d).array().colwise() * r.col(c).array();
  }
  return out;
}

namespace {

std::vector<Linear> make_trunk(ParamStore& store, const std::string& prefix,
                               Eigen::Index in,
                               const std::vector<Eigen::Index>& hidden) {
  std::vector<Linear> layers;
  Eigen::Index prev = in;
  for (std::size_t h = 0; h < hidden.size(); ++h) {
    layers.emplace_back(store, prefix + ".h" + std::to_string(h), prev,
                        hidden[h]);
    prev = hidden[h];
  }
  return layers;
}

}  // namespace

MixtureEncoder::MixtureEncoder(ParamStore& store, const std::string& prefix,
                               Eigen::Index in,
                               const std::vector<Eigen::Index>& hidden, int k,
                               int d)
    : hidden_(make_trunk(store, prefix, in, hidden)),
      head_logit_(store, prefix + ".logit", hidden.empty() ? in : hidden.back(),
                  k),
      head_mean_(store, prefix + ".mean", hidden.empty() ? in : hidden.back(),
                 static_cast<Eigen::Index>(k) * d),
      head_logvar_(store, prefix + ".logvar",
                   hidden.empty() ? in : hidden.back(),
                   static_cast<Eigen::Index>(k) * d),
      k_(k),
      d_(d) {}

void MixtureEncoder::init(Rng& rng) {
  for (auto& layer : hidden_) {
    layer.init_normal(rng, std::sqrt(2.0 / static_cast<double>(layer.in())));
  }
  head_logit_.init_zero();
  head_mean_.init_zero();
  head_logvar_.init_zero();
}

MixturePosterior MixtureEncoder::forward(const Eigen::MatrixXd& x,
                                         Cache* cache) const {
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Eigen::MatrixXd h = x;
  for (const Linear& layer : hidden_) {
    if (cache) cache->inputs.push_back(h);
    Eigen::MatrixXd pre = layer.forward(h);
    if (cache) cache->pre.push_back(pre);
    h = silu(pre.array()).matrix();
  }
  if (cache) cache->feat = h;
  MixturePosterior q;
  q.k = k_;
  q.d = d_;
  q.logits = head_logit_.forward(h);
  q.means = head_mean_.forward(h);
  q.logvars = head_logvar_.forward(h);
  return q;
}

Eigen::MatrixXd MixtureEncoder::backward(const Cache& cache,
                                         const Eigen::MatrixXd& dlogits,
                                         const Eigen::MatrixXd& dmeans,
                                         const Eigen::MatrixXd& dlogvars) {
  Eigen::MatrixXd d = head_logit_.backward(cache.feat, dlogits);
  d += head_mean_.backward(cache.feat, dmeans);
  d += head_logvar_.backward(cache.feat, dlogvars);
  for (std::size_t l = hidden_.size(); l-- > 0;) {
    d = (d.array() * silu_grad(cache.pre[l].array())).matrix();
    d = hidden_[l].backward(cache.inputs[l], d);
  }
  return d;
}

MixturePrior::MixturePrior(ParamStore& store, const std::string& prefix, int k,
                           int d)
    : logits_name_(prefix + ".logits"),
      means_name_(prefix + ".means"),
      logvars_name_(prefix + ".logvars"),
      k_(k),
      d_(d) {
  store.add(logits_name_, k, 1);
  store.add(means_name_, k, d);
  store.add(logvars_name_, k, d);
}

void MixturePrior::init(ParamStore& store, Rng& rng) {
  store.value(logits_name_).setZero();
  store.value(logvars_name_).setZero();
  auto means = store.value(means_name_);
  for (int c = 0; c < k_; ++c) {
    Eigen::VectorXd v(d_);
    for (int j = 0; j < d_; ++j) v(j) = rng.normal();
    const double norm = v.norm();
    if (norm < 1e-12) {
      means.row(c).setZero();
      means(c, 0) = 1.0;
    } else {
      means.row(c) = (v / norm).transpose();
    }
  }
}

LatentNoise draw_latent_noise(Eigen::Index n, int k, int d, Rng& rng) {
  LatentNoise noise;
  noise.gumbel.resize(n, k);
  noise.eps.resize(n, static_cast<Eigen::Index>(k) * d);
  // Fixed draw order: per unit, k gumbels then k*d normals.
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) noise.gumbel(i, c) = rng.gumbel();
    for (Eigen::Index j = 0; j < noise.eps.cols(); ++j) {
      noise.eps(i, j) = rng.normal();
    }
  }
  return noise;
}

SampledLatent sample_latent(const MixturePosterior& q, double temperature,
                            const LatentNoise& noise) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("sample_latent: temperature must be positive");
  }
  if (noise.gumbel.rows() != q.n() || noise.gumbel.cols() != q.k ||
      noise.eps.cols() != q.means.cols()) {
    throw std::invalid_argument("sample_latent: noise shape mismatch");
  }
  SampledLatent out;
  out.soft_assign = softmax_rows((q.logits + noise.gumbel) / temperature);
  out.v = Eigen::MatrixXd::Zero(q.n(), q.d);
  for (int c = 0; c < q.k; ++c) {
    const auto m = q.means.middleCols(c * q.d, q.d).array();
    const auto lv = q.logvars.middleCols(c * q.d, q.d).array();
    const auto eps = noise.eps.middleCols(c * q.d, q.d).array();
    out.v.array() += (m + (lv / 2.0).exp() * eps).colwise() *
                     out.soft_assign.col(c).array();
  }
  return out;
}

SampledLatent sample_latent(const MixturePosterior& q, double temperature,
                            Rng& rng) {
  return sample_latent(q, temperature, draw_latent_noise(q.n(), q.k, q.d, rng));
}

Eigen::MatrixXd concat_latent(const Eigen::MatrixXd& v1,
                              const Eigen::MatrixXd& v2) {
  if (v1.cols() == 0) return v2;
  if (v2.cols() == 0) return v1;
  if (v1.rows() != v2.rows()) {
    throw std::invalid_argument("concat_latent: row mismatch");
  }
  Eigen::MatrixXd z(v1.rows(), v1.cols() + v2.cols());
  z << v1, v2;
  return z;
}

namespace {

ModelConfig validated(const ModelConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

CEIBModel::CEIBModel(const ModelConfig& cfg, Eigen::Index p1, Eigen::Index p2)
    : cfg_(validated(cfg)),
      p1_(p1),
      p2_(p2),
      store_(),
      enc1_(store_, "enc1", p1, cfg_.enc_hidden, cfg_.k1, cfg_.d1),
      enc2_(store_, "enc2", p2, cfg_.enc_hidden, cfg_.k2, cfg_.d2),
      prior1_(store_, "prior1", cfg_.k1, cfg_.d1),
      prior2_(store_, "prior2", cfg_.k2, cfg_.d2),
      f1_(store_, "f1", latent_dim(), cfg_.dec_hidden, 1),
      f2_(store_, "f2", latent_dim(), cfg_.dec_hidden, 1),
      f3_(store_, "f3", latent_dim(), cfg_.dec_hidden, 1) {
  if (p1_ < 1 || p2_ < 1) {
    throw ConfigError("model: covariate blocks must be non-empty");
  }
  if (cfg_.outcome == OutcomeFamily::gaussian) {
    store_.add("dec.ylogvar", 1, 1);
  }
  store_.finalize();
}

void CEIBModel::init(Rng& rng) {
  enc1_.init(rng);
  enc2_.init(rng);
  prior1_.init(store_, rng);
  prior2_.init(store_, rng);
  f1_.init(rng);
  f2_.init(rng);
  f3_.init(rng);
  if (cfg_.outcome == OutcomeFamily::gaussian) {
    store_.value("dec.ylogvar").setZero();
  }
}

MixturePosterior CEIBModel::encode1(const Eigen::MatrixXd& x1,
                                    MixtureEncoder::Cache* cache) const {
  if (x1.cols() != p1_) throw std::invalid_argument("encode1: width mismatch");
  return enc1_.forward(x1, cache);
}

MixturePosterior CEIBModel::encode2(const Eigen::MatrixXd& x2,
                                    MixtureEncoder::Cache* cache) const {
  if (x2.cols() != p2_) throw std::invalid_argument("encode2: width mismatch");
  return enc2_.forward(x2, cache);
}

Eigen::VectorXd CEIBModel::treatment_prob(const Eigen::MatrixXd& z) const {
  return sigmoid(f1_.forward(z).col(0).array()).matrix();
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> CEIBModel::predict_both_arms(
    const Eigen::MatrixXd& z) const {
  Eigen::VectorXd mu1 = f2_.forward(z).col(0);
  Eigen::VectorXd mu0 = f3_.forward(z).col(0);
  if (cfg_.outcome == OutcomeFamily::bernoulli) {
    mu1 = sigmoid(mu1.array()).matrix();
    mu0 = sigmoid(mu0.array()).matrix();
  }
  return {mu0, mu1};
}

CEIBModel::Outcome CEIBModel::outcome_params(const Eigen::MatrixXd& z,
                                             const Eigen::VectorXd& t) const {
  if (z.rows() != t.size()) {
    throw std::invalid_argument("outcome_params: batch size mismatch");
  }
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    if (t(i) != 0.0 && t(i) != 1.0) {
      throw std::invalid_argument("outcome_params: treatment must be 0 or 1");
    }
  }
  const Eigen::VectorXd o2 = f2_.forward(z).col(0);
  const Eigen::VectorXd o3 = f3_.forward(z).col(0);
  Outcome out;
  out.mean.resize(t.size());
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    out.mean(i) = t(i) > 0.5 ? o2(i) : o3(i);
  }
  if (cfg_.outcome == OutcomeFamily::bernoulli) {
    out.mean = sigmoid(out.mean.array()).matrix();
  } else {
    out.variance = std::exp(outcome_logvar());
  }
  return out;
}

MixtureParams CEIBModel::prior1_params() const {
  MixtureParams p;
  p.logits = store_.value(prior1_.logits_name()).col(0);
  p.means = store_.value(prior1_.means_name());
  p.logvars = store_.value(prior1_.logvars_name());
  return p;
}

MixtureParams CEIBModel::prior2_params() const {
  MixtureParams p;
  p.logits = store_.value(prior2_.logits_name()).col(0);
  p.means = store_.value(prior2_.means_name());
  p.logvars = store_.value(prior2_.logvars_name());
  return p;
}

double CEIBModel::outcome_logvar() const {
  if (cfg_.outcome != OutcomeFamily::gaussian) {
    throw std::logic_error("outcome_logvar: bernoulli family has none");
  }
  return store_.value("dec.ylogvar")(0, 0);
}

void CEIBModel::set_y_transform(double shift, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale) || !std::isfinite(shift)) {
    throw ConfigError("set_y_transform: invalid factors");
  }
  y_shift_ = shift;
  y_scale_ = scale;
}

}  // namespace ceib
