#include "ceib/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace ceib {

std::size_t ParamStore::add(const std::string& name, Eigen::Index rows,
                            Eigen::Index cols) {
  if (finalized_) {
    throw std::logic_error("ParamStore: add after finalize: " + name);
  }
  if (rows < 1 || cols < 1) {
    throw std::logic_error("ParamStore: empty tensor: " + name);
  }
  if (!by_name_.emplace(name, refs_.size()).second) {
    throw std::logic_error("ParamStore: duplicate tensor name: " + name);
  }
  refs_.push_back(TensorShape{name, total_, rows, cols});
  total_ += rows * cols;
  return refs_.size() - 1;
}

void ParamStore::finalize() {
  if (finalized_) throw std::logic_error("ParamStore: finalize twice");
  values_ = Eigen::VectorXd::Zero(total_);
  grads_ = Eigen::VectorXd::Zero(total_);
  finalized_ = true;
}

void ParamStore::check_finalized() const {
  if (!finalized_) throw std::logic_error("ParamStore: not finalized");
}

const TensorShape& ParamStore::shape(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) {
    throw std::logic_error("ParamStore: unknown tensor: " + name);
  }
  return refs_[it->second];
}

Eigen::Map<Eigen::MatrixXd> ParamStore::value(std::size_t ref) {
  check_finalized();
  const TensorShape& s = refs_.at(ref);
  return {values_.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<Eigen::MatrixXd> ParamStore::value(const std::string& name) {
  return value(by_name_.at(name));
}

Eigen::Map<const Eigen::MatrixXd> ParamStore::value(const std::string& name) const {
  check_finalized();
  const TensorShape& s = refs_.at(by_name_.at(name));
  return {values_.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<Eigen::MatrixXd> ParamStore::grad(std::size_t ref) {
  check_finalized();
  const TensorShape& s = refs_.at(ref);
  return {grads_.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<Eigen::MatrixXd> ParamStore::grad(const std::string& name) {
  return grad(by_name_.at(name));
}

Eigen::ArrayXXd silu(const Eigen::ArrayXXd& x) {
  return x / (1.0 + (-x).exp());
}

Eigen::ArrayXXd silu_grad(const Eigen::ArrayXXd& x) {
  const Eigen::ArrayXXd s = 1.0 / (1.0 + (-x).exp());
  return s * (1.0 + x * (1.0 - s));
}

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& a) {
  Eigen::ArrayXd out(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out(i) = sigmoid(a(i));
  return out;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Eigen::ArrayXd shifted =
        logits.row(i).transpose().array() - logits.row(i).maxCoeff();
    const Eigen::ArrayXd e = shifted.exp();
    out.row(i) = (e / e.sum()).transpose();
  }
  return out;
}

Eigen::VectorXd logsumexp_rows(const Eigen::MatrixXd& logits) {
  Eigen::VectorXd out(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out(i) = m + std::log((logits.row(i).array() - m).exp().sum());
  }
  return out;
}

Linear::Linear(ParamStore& store, const std::string& prefix, Eigen::Index in,
               Eigen::Index out)
    : store_(&store), in_(in), out_(out) {
  w_ref_ = store.add(prefix + ".w", out, in);
  b_ref_ = store.add(prefix + ".b", out, 1);
}

void Linear::init_normal(Rng& rng, double sd) {
  auto w = store_->value(w_ref_);
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      w(i, j) = sd * rng.normal();
    }
  }
  store_->value(b_ref_).setZero();
}

void Linear::init_zero() {
  store_->value(w_ref_).setZero();
  store_->value(b_ref_).setZero();
}

Eigen::MatrixXd Linear::forward(const Eigen::MatrixXd& x) const {
  const auto w = store_->value(w_ref_);
  const auto b = store_->value(b_ref_);
  return (x * w.transpose()).rowwise() + b.col(0).transpose();
}

Eigen::MatrixXd Linear::backward(const Eigen::MatrixXd& x,
                                 const Eigen::MatrixXd& dout) {
  store_->grad(w_ref_) += dout.transpose() * x;
  store_->grad(b_ref_).col(0) += dout.colwise().sum().transpose();
  return dout * store_->value(w_ref_);
}

Mlp::Mlp(ParamStore& store, const std::string& prefix, Eigen::Index in,
         const std::vector<Eigen::Index>& hidden, Eigen::Index out)
    : in_(in), out_(out) {
  Eigen::Index prev = in;
  for (std::size_t h = 0; h < hidden.size(); ++h) {
    layers_.emplace_back(store, prefix + ".h" + std::to_string(h), prev, hidden[h]);
    prev = hidden[h];
  }
  layers_.emplace_back(store, prefix + ".out", prev, out);
}

void Mlp::init(Rng& rng) {
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    layers_[l].init_normal(rng, std::sqrt(2.0 / static_cast<double>(layers_[l].in())));
  }
  layers_.back().init_zero();
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache* cache) const {
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
    cache->inputs.reserve(layers_.size());
    cache->pre.reserve(layers_.size());
  }
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (cache) cache->inputs.push_back(h);
    h = layers_[l].forward(h);
    if (l + 1 < layers_.size()) {
      if (cache) cache->pre.push_back(h);
      h = silu(h.array()).matrix();
    }
  }
  return h;
}

Eigen::MatrixXd Mlp::backward(const Cache& cache, const Eigen::MatrixXd& dout) {
  if (cache.inputs.size() != layers_.size()) {
    throw std::logic_error("Mlp::backward: stale cache");
  }
  Eigen::MatrixXd d = dout;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    if (l + 1 < layers_.size()) {
      // d arrived post-activation; fold in the SiLU derivative at the cached
      // pre-activation.
      d = (d.array() * silu_grad(cache.pre[l].array())).matrix();
    }
    d = layers_[l].backward(cache.inputs[l], d);
  }
  return d;
}

Adam::Adam(ParamStore& store, const Config& cfg) : store_(&store), cfg_(cfg) {
  m_ = Eigen::VectorXd::Zero(store.size());
  v_ = Eigen::VectorXd::Zero(store.size());
}

void Adam::step() {
  ++t_;
  const Eigen::VectorXd& g = store_->grads();
  m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * g;
  v_ = (cfg_.beta2 * v_.array() + (1.0 - cfg_.beta2) * g.array().square()).matrix();
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  store_->values().array() -=
      cfg_.lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + cfg_.eps);
}

}  // namespace ceib
