#ifndef CEIB_NN_HPP_
#define CEIB_NN_HPP_

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ceib/rng.hpp"

namespace ceib {

// All trainable parameters live in one flat vector with a parallel gradient
// vector. Named views keep layer code readable while the optimizer, parameter
// snapshots, and finite-difference checks operate on the flat storage.
struct TensorShape {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index size() const { return rows * cols; }
};

class ParamStore {
 public:
  // Registration happens during model construction; finalize() allocates.
  std::size_t add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  void finalize();
  bool finalized() const { return finalized_; }

  Eigen::Index size() const { return total_; }
  const std::vector<TensorShape>& tensors() const { return refs_; }
  const TensorShape& shape(const std::string& name) const;
  bool has(const std::string& name) const { return by_name_.count(name) > 0; }

  // Matrix views into the flat storage (column-major over rows x cols).
  Eigen::Map<Eigen::MatrixXd> value(std::size_t ref);
  Eigen::Map<Eigen::MatrixXd> value(const std::string& name);
  Eigen::Map<const Eigen::MatrixXd> value(const std::string& name) const;
  Eigen::Map<Eigen::MatrixXd> grad(std::size_t ref);
  Eigen::Map<Eigen::MatrixXd> grad(const std::string& name);

  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& grads() { return grads_; }
  const Eigen::VectorXd& grads() const { return grads_; }

  void zero_grad() { grads_.setZero(); }

 private:
  void check_finalized() const;
  std::vector<TensorShape> refs_;
  std::map<std::string, std::size_t> by_name_;
  Eigen::VectorXd values_;
  Eigen::VectorXd grads_;
  Eigen::Index total_ = 0;
  bool finalized_ = false;
};

// x * sigmoid(x); smooth everywhere, so finite-difference gradient checks are
// not limited by activation kinks.
Eigen::ArrayXXd silu(const Eigen::ArrayXXd& x);
Eigen::ArrayXXd silu_grad(const Eigen::ArrayXXd& x);

// Row-wise numerically stable softmax / log-sum-exp.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);
Eigen::VectorXd logsumexp_rows(const Eigen::MatrixXd& logits);

double sigmoid(double a);
Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& a);

// Dense layer over row-batches: forward(x) = x * W^T + b with x of shape
// (batch, in). Layers are stateless; callers keep forward inputs for backward.
class Linear {
 public:
  Linear(ParamStore& store, const std::string& prefix, Eigen::Index in,
         Eigen::Index out);

  Eigen::Index in() const { return in_; }
  Eigen::Index out() const { return out_; }

  void init_normal(Rng& rng, double sd);
  void init_zero();

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  // Accumulates parameter gradients and returns the gradient wrt x.
  Eigen::MatrixXd backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& dout);

 private:
  ParamStore* store_;
  std::size_t w_ref_, b_ref_;
  Eigen::Index in_, out_;
};

// Stack of Linear layers with SiLU between them (none after the last).
class Mlp {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;  // input to each layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each hidden layer
  };

  Mlp(ParamStore& store, const std::string& prefix, Eigen::Index in,
      const std::vector<Eigen::Index>& hidden, Eigen::Index out);

  Eigen::Index in() const { return in_; }
  Eigen::Index out() const { return out_; }

  // Hidden layers get scaled-normal weights; the output layer starts at zero
  // so freshly built heads emit exactly zero.
  void init(Rng& rng);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const;
  Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& dout);

 private:
  std::vector<Linear> layers_;
  Eigen::Index in_, out_;
};

// Adam over the flat parameter vector.
class Adam {
 public:
  struct Config {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(ParamStore& store, const Config& cfg);
  void step();
  int steps_taken() const { return t_; }

 private:
  ParamStore* store_;
  Config cfg_;
  Eigen::VectorXd m_, v_;
  int t_ = 0;
};

}  // namespace ceib

#endif  // CEIB_NN_HPP_
