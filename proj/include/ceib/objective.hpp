#ifndef CEIB_OBJECTIVE_HPP_
#define CEIB_OBJECTIVE_HPP_

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ceib/dataset.hpp"
#include "ceib/model.hpp"
#include "ceib/rng.hpp"

namespace ceib {

// The minimized objective is total = kl1 + kl2 + lambda * (nll_y + nll_t),
// all terms batch means in nats. kl1/kl2 upper-bound the latent-covariate
// information; h(y) - nll_y lower-bounds the outcome information but h(y) is
// constant in the parameters, so it is reported separately (entropy_of_y).
struct LossBreakdown {
  double kl1 = 0.0;
  double kl2 = 0.0;
  double nll_y = 0.0;
  double nll_t = 0.0;
  double total = 0.0;
};

struct TrainConfig {
  double lambda = 1.0;
  int epochs = 300;
  int batch = 128;
  double lr = 1e-3;
  double tau_start = 1.0;  // relaxed-categorical temperature, annealed
  double tau_end = 0.3;    // linearly over the configured epochs
  int patience = 20;       // early stopping on validation total
  std::uint64_t seed = 0;

  void validate() const;
};

// Upper bound on the mixture KL: KL between the categoricals plus the
// responsibility-weighted closed-form diagonal-Gaussian KLs per component.
// Batch mean over the posterior's units.
double kl_mixture(const MixturePosterior& q, const MixtureParams& prior);
Eigen::VectorXd kl_mixture_per_unit(const MixturePosterior& q,
                                    const MixtureParams& prior);

// Pre-drawn sampling noise for both latent blocks; with a fixed bundle the
// loss is a deterministic function of the parameters.
struct NoiseBundle {
  LatentNoise n1, n2;
};

NoiseBundle draw_noise(const CEIBModel& model, Eigen::Index n, Rng& rng);

// Single-sample reparameterized loss over one fully observed batch. With
// compute_grads, parameter gradients for every term are written into the
// model's store (grads are zeroed first).
LossBreakdown loss_batch(CEIBModel& model, const Eigen::MatrixXd& x1,
                         const Eigen::MatrixXd& x2, const Eigen::VectorXd& t,
                         const Eigen::VectorXd& y, double lambda,
                         double temperature, const NoiseBundle& noise,
                         bool compute_grads);

// Convenience wrapper over loss_batch drawing fresh noise from rng.
LossBreakdown loss(CEIBModel& model, const Dataset& batch, double lambda,
                   Rng& rng, double temperature = 1.0);

// Noise-free evaluation with posterior-mean latents; the KL terms coincide
// with the training ones, the nll terms drop the sampling variance. Used for
// validation rows, early stopping, and information estimates.
LossBreakdown evaluate_deterministic(const CEIBModel& model, const Dataset& ds,
                                     double lambda);

struct TraceRow {
  int epoch = 0;
  std::string split;  // "train" or "val"
  LossBreakdown loss;
};

// epoch, split, kl1, kl2, nll_y, nll_t, total
void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);

struct TrainResult {
  std::unique_ptr<CEIBModel> model;  // parameters of the best validation epoch
  std::vector<TraceRow> trace;
  int best_epoch = -1;
  double best_val_total = 0.0;
  int epochs_run = 0;
};

// Minibatch training with temperature annealing and early stopping. Inputs
// must be standardized and fully observed. Deterministic given the seed.
// Divergence (non-finite loss) aborts with a diagnostic carrying the last
// finite breakdown.
TrainResult train(const Dataset& train_ds, const Dataset& val_ds,
                  const ModelConfig& mcfg, const TrainConfig& tcfg);

// Entropy of the outcome in nats: Bernoulli entropy of the empirical rate for
// binary y, Gaussian differential entropy 0.5*log(2*pi*e*var) otherwise.
// Errors on degenerate outcomes (rate 0/1, zero variance).
double entropy_of_y(const Dataset& ds);

}  // namespace ceib

#endif  // CEIB_OBJECTIVE_HPP_
