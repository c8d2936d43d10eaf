#ifndef CEIB_MODEL_HPP_
#define CEIB_MODEL_HPP_

#include <Eigen/Core>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ceib/nn.hpp"
#include "ceib/rng.hpp"

namespace ceib {

enum class OutcomeFamily { gaussian, bernoulli };

std::string outcome_family_name(OutcomeFamily f);
OutcomeFamily outcome_family_from_name(const std::string& s);

struct ModelConfig {
  int k1 = 5;  // mixture components for the x1 latent
  int k2 = 5;
  int d1 = 2;  // latent dimensions per block
  int d2 = 2;
  std::vector<Eigen::Index> enc_hidden = {64, 64};
  std::vector<Eigen::Index> dec_hidden = {64, 64};
  OutcomeFamily outcome = OutcomeFamily::gaussian;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Plain-value mixture parameters (used for priors pulled out of the store).
struct MixtureParams {
  Eigen::VectorXd logits;   // k
  Eigen::MatrixXd means;    // k x d
  Eigen::MatrixXd logvars;  // k x d
  int k() const { return static_cast<int>(logits.size()); }
  int d() const { return static_cast<int>(means.cols()); }
};

// Per-unit variational posterior over one latent block: a categorical over k
// components plus diagonal-Gaussian parameters per component. Component c's
// parameters occupy flattened columns [c*d, (c+1)*d).
struct MixturePosterior {
  int k = 0;
  int d = 0;
  Eigen::MatrixXd logits;   // n x k
  Eigen::MatrixXd means;    // n x k*d
  Eigen::MatrixXd logvars;  // n x k*d

  Eigen::Index n() const { return logits.rows(); }
  Eigen::MatrixXd responsibilities() const { return softmax_rows(logits); }
  // Responsibility-weighted mean, the deterministic latent used at inference.
  Eigen::MatrixXd posterior_mean() const;
};

// Encoder trunk with three linear heads emitting MixturePosterior fields.
class MixtureEncoder {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;  // input to each hidden layer
    std::vector<Eigen::MatrixXd> pre;     // hidden pre-activations
    Eigen::MatrixXd feat;                 // trunk output fed to the heads
  };

  MixtureEncoder(ParamStore& store, const std::string& prefix, Eigen::Index in,
                 const std::vector<Eigen::Index>& hidden, int k, int d);

  int k() const { return k_; }
  int d() const { return d_; }

  // Hidden layers scaled-normal, heads zero: a fresh encoder emits uniform
  // responsibilities, zero means, unit variances for every unit.
  void init(Rng& rng);

  MixturePosterior forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const;
  // Pushes head gradients back through the trunk; returns the gradient wrt x.
  Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& dlogits,
                           const Eigen::MatrixXd& dmeans,
                           const Eigen::MatrixXd& dlogvars);

 private:
  std::vector<Linear> hidden_;
  Linear head_logit_, head_mean_, head_logvar_;
  int k_, d_;
};

// Learned mixture prior for one latent block; parameters live in the store.
class MixturePrior {
 public:
  MixturePrior(ParamStore& store, const std::string& prefix, int k, int d);

  // Uniform weights, unit variances, component means spread on the unit
  // sphere to break symmetry between components.
  void init(ParamStore& store, Rng& rng);

  const std::string& logits_name() const { return logits_name_; }
  const std::string& means_name() const { return means_name_; }
  const std::string& logvars_name() const { return logvars_name_; }
  int k() const { return k_; }
  int d() const { return d_; }

 private:
  std::string logits_name_, means_name_, logvars_name_;
  int k_, d_;
};

// Pre-drawn noise for sampling one latent block, so a loss evaluation is a
// deterministic function of the parameters (finite-difference checks rely on
// this).
struct LatentNoise {
  Eigen::MatrixXd gumbel;  // n x k
  Eigen::MatrixXd eps;     // n x k*d, component layout as in MixturePosterior
};

LatentNoise draw_latent_noise(Eigen::Index n, int k, int d, Rng& rng);

struct SampledLatent {
  Eigen::MatrixXd v;            // n x d
  Eigen::MatrixXd soft_assign;  // n x k, relaxed-categorical weights
};

// Relaxed-categorical mixture sample: soft_assign = softmax((logits+g)/tau),
// v = sum_c soft_assign_c * (mean_c + exp(logvar_c/2) * eps_c).
SampledLatent sample_latent(const MixturePosterior& q, double temperature,
                            const LatentNoise& noise);
SampledLatent sample_latent(const MixturePosterior& q, double temperature,
                            Rng& rng);

// [v1 v2] per row; either side may have zero columns.
Eigen::MatrixXd concat_latent(const Eigen::MatrixXd& v1,
                              const Eigen::MatrixXd& v2);

// Encoders q(v1|x1), q(v2|x2) with mixture priors, and a decoder with a
// treatment head plus one outcome head per arm on the concatenated latent.
class CEIBModel {
 public:
  CEIBModel(const ModelConfig& cfg, Eigen::Index p1, Eigen::Index p2);
  CEIBModel(const CEIBModel&) = delete;
  CEIBModel& operator=(const CEIBModel&) = delete;

  void init(Rng& rng);

  const ModelConfig& config() const { return cfg_; }
  Eigen::Index p1() const { return p1_; }
  Eigen::Index p2() const { return p2_; }
  Eigen::Index latent_dim() const { return cfg_.d1 + cfg_.d2; }

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  MixtureEncoder& enc1() { return enc1_; }
  MixtureEncoder& enc2() { return enc2_; }
  const MixturePrior& prior1() const { return prior1_; }
  const MixturePrior& prior2() const { return prior2_; }
  MixtureParams prior1_params() const;
  MixtureParams prior2_params() const;
  Mlp& treatment_head() { return f1_; }
  Mlp& outcome_head_treated() { return f2_; }
  Mlp& outcome_head_control() { return f3_; }
  const Mlp& treatment_head() const { return f1_; }
  const Mlp& outcome_head_treated() const { return f2_; }
  const Mlp& outcome_head_control() const { return f3_; }

  MixturePosterior encode1(const Eigen::MatrixXd& x1,
                           MixtureEncoder::Cache* cache = nullptr) const;
  MixturePosterior encode2(const Eigen::MatrixXd& x2,
                           MixtureEncoder::Cache* cache = nullptr) const;

  // Deterministic inference path on the concatenated latent.
  Eigen::VectorXd treatment_prob(const Eigen::MatrixXd& z) const;
  // Arm predictions; Gaussian family returns means, Bernoulli returns
  // probabilities. First element of the pair is the control arm.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> predict_both_arms(
      const Eigen::MatrixXd& z) const;
  // Factual-arm outcome model: row i follows arm t(i). Gaussian family fills
  // `variance` with exp of the learned scalar log-variance.
  struct Outcome {
    Eigen::VectorXd mean;
    std::optional<double> variance;
  };
  Outcome outcome_params(const Eigen::MatrixXd& z, const Eigen::VectorXd& t) const;

  // Learned scalar log-variance of the Gaussian outcome model.
  double outcome_logvar() const;

  // Factors mapping model-scale outcomes back to the original scale; stamped
  // by training, identity until then.
  double y_shift() const { return y_shift_; }
  double y_scale() const { return y_scale_; }
  void set_y_transform(double shift, double scale);

 private:
  ModelConfig cfg_;
  Eigen::Index p1_, p2_;
  ParamStore store_;
  MixtureEncoder enc1_, enc2_;
  MixturePrior prior1_, prior2_;
  Mlp f1_, f2_, f3_;  // treatment, treated-arm outcome, control-arm outcome
  double y_shift_ = 0.0;
  double y_scale_ = 1.0;
};

}  // namespace ceib

#endif  // CEIB_MODEL_HPP_
