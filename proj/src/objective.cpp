#include "ceib/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "ceib/csv.hpp"
#include "ceib/errors.hpp"

namespace ceib {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

constexpr std::uint64_t kInitTag = 0x1417;
constexpr std::uint64_t kShuffleTag = 0x5AFF;
constexpr std::uint64_t kNoiseTag = 0x4E01;

Eigen::ArrayXd softplus(const Eigen::ArrayXd& x) {
  return x.max(0.0) + (-x.abs()).exp().log1p();
}

// Per-unit categorical KL plus responsibility-weighted component KLs, kept
// with the intermediates the backward pass reuses.
struct KlPieces {
  Eigen::MatrixXd r;       // n x k responsibilities
  Eigen::MatrixXd f;       // n x k: (log r - log pi) + component KL
  Eigen::VectorXd per_unit;
  Eigen::VectorXd pi;      // prior weights
};

KlPieces kl_pieces(const MixturePosterior& q, const MixtureParams& prior) {
  if (q.k != prior.k() || q.d != prior.d()) {
    throw std::invalid_argument("kl_mixture: (k, d) mismatch");
  }
  const int k = q.k, d = q.d;

  KlPieces p;
  p.r = softmax_rows(q.logits);
  Eigen::MatrixXd log_r = q.logits;
  log_r.colwise() -= logsumexp_rows(q.logits);
  const double p_lse =
      logsumexp_rows(prior.logits.transpose())(0);
  const Eigen::VectorXd log_pi = prior.logits.array() - p_lse;
  p.pi = log_pi.array().exp();

  p.f = log_r;
  p.f.rowwise() -= log_pi.transpose();
  for (int c = 0; c < k; ++c) {
    const auto qm = q.means.middleCols(c * d, d).array();
    const auto qlv = q.logvars.middleCols(c * d, d).array();
    const auto pm = prior.means.row(c).array();
    const auto plv = prior.logvars.row(c).array();
    // Closed-form KL(N(qm, e^qlv) || N(pm, e^plv)) per dimension.
    const Eigen::ArrayXXd dm = qm.rowwise() - pm;
    const Eigen::ArrayXXd dlv = qlv.rowwise() - plv;
    const Eigen::ArrayXXd kl_dim =
        0.5 * (-dlv + dlv.exp() + dm.square().rowwise() * (-plv).exp() - 1.0);
    p.f.col(c) += kl_dim.rowwise().sum().matrix();
  }
  p.per_unit = (p.r.array() * p.f.array()).rowwise().sum();
  return p;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<int>& idx,
                          std::size_t lo, std::size_t hi) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(hi - lo), m.cols());
  for (std::size_t r = lo; r < hi; ++r) out.row(r - lo) = m.row(idx[r]);
  return out;
}

Eigen::VectorXd take_rows(const Eigen::VectorXd& v, const std::vector<int>& idx,
                          std::size_t lo, std::size_t hi) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(hi - lo));
  for (std::size_t r = lo; r < hi; ++r) out(r - lo) = v(idx[r]);
  return out;
}

std::string breakdown_str(const LossBreakdown& bd) {
  std::ostringstream os;
  os << "kl1=" << bd.kl1 << " kl2=" << bd.kl2 << " nll_y=" << bd.nll_y
     << " nll_t=" << bd.nll_t << " total=" << bd.total;
  return os.str();
}

}  // namespace

void TrainConfig::validate() const {
  if (lambda < 0.0) throw ConfigError("train: lambda must be non-negative");
  if (epochs < 1) throw ConfigError("train: epochs must be positive");
  if (batch < 1) throw ConfigError("train: batch size must be positive");
  if (!(lr > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (!(tau_start > 0.0) || !(tau_end > 0.0)) {
    throw ConfigError("train: temperatures must be positive");
  }
  if (patience < 1) throw ConfigError("train: patience must be positive");
}

Eigen::VectorXd kl_mixture_per_unit(const MixturePosterior& q,
                                    const MixtureParams& prior) {
  return kl_pieces(q, prior).per_unit;
}

double kl_mixture(const MixturePosterior& q, const MixtureParams& prior) {
  return kl_mixture_per_unit(q, prior).mean();
}

NoiseBundle draw_noise(const CEIBModel& model, Eigen::Index n, Rng& rng) {
  NoiseBundle b;
  b.n1 = draw_latent_noise(n, model.config().k1, model.config().d1, rng);
  b.n2 = draw_latent_noise(n, model.config().k2, model.config().d2, rng);
  return b;
}

namespace {

// Everything the sampling path of one latent block produced in the forward
// pass and needs again in the backward pass.
struct BlockForward {
  MixturePosterior q;
  MixtureEncoder::Cache cache;
  KlPieces kl;
  Eigen::MatrixXd s;     // n x k relaxed assignment
  Eigen::MatrixXd samp;  // n x k*d per-component Gaussian samples
  Eigen::MatrixXd v;     // n x d mixed sample
};

BlockForward block_forward(const CEIBModel& model, bool first,
                           const Eigen::MatrixXd& x, const LatentNoise& noise,
                           double tau) {
  BlockForward bf;
  bf.q = first ? model.encode1(x, &bf.cache) : model.encode2(x, &bf.cache);
  bf.kl = kl_pieces(bf.q, first ? model.prior1_params() : model.prior2_params());
  bf.s = softmax_rows((bf.q.logits + noise.gumbel) / tau);
  const int k = bf.q.k, d = bf.q.d;
  bf.samp.resize(bf.q.n(), static_cast<Eigen::Index>(k) * d);
  bf.v = Eigen::MatrixXd::Zero(bf.q.n(), d);
  for (int c = 0; c < k; ++c) {
    const auto m = bf.q.means.middleCols(c * d, d).array();
    const auto lv = bf.q.logvars.middleCols(c * d, d).array();
    const auto eps = noise.eps.middleCols(c * d, d).array();
    bf.samp.middleCols(c * d, d) = (m + (lv / 2.0).exp() * eps).matrix();
    bf.v.array() += bf.samp.middleCols(c * d, d).array().colwise() *
                    bf.s.col(c).array();
  }
  return bf;
}

// Gradient of (mean kl + whatever dv carries) for one block: pushes encoder
// head gradients through the trunk and accumulates prior gradients.
void block_backward(CEIBModel& model, bool first, BlockForward& bf,
                    const Eigen::MatrixXd& dv, double tau, double inv_n) {
  const int k = bf.q.k, d = bf.q.d;
  const Eigen::Index n = bf.q.n();
  const MixtureParams prior =
      first ? model.prior1_params() : model.prior2_params();

  // Sampling path: v = sum_c s_c * samp_c.
  Eigen::MatrixXd dmeans(n, static_cast<Eigen::Index>(k) * d);
  Eigen::MatrixXd dlogvars(n, static_cast<Eigen::Index>(k) * d);
  Eigen::MatrixXd gs(n, k);  // dL/ds_c
  for (int c = 0; c < k; ++c) {
    const auto samp = bf.samp.middleCols(c * d, d).array();
    const auto qm = bf.q.means.middleCols(c * d, d).array();
    const Eigen::ArrayXXd dsamp = dv.array().colwise() * bf.s.col(c).array();
    dmeans.middleCols(c * d, d) = dsamp.matrix();
    // d samp / d logvar = 0.5 * exp(lv/2) * eps = 0.5 * (samp - mean)
    dlogvars.middleCols(c * d, d) = (dsamp * 0.5 * (samp - qm)).matrix();
    gs.col(c) = (dv.array() * samp).rowwise().sum().matrix();
  }
  const Eigen::ArrayXd sg = (bf.s.array() * gs.array()).rowwise().sum();
  Eigen::MatrixXd dlogits =
      (bf.s.array() * (gs.array().colwise() - sg) / tau).matrix();

  // KL path, scaled by inv_n because the loss takes the batch mean.
  dlogits.array() +=
      inv_n * bf.kl.r.array() *
      (bf.kl.f.array().colwise() - bf.kl.per_unit.array());
  for (int c = 0; c < k; ++c) {
    const auto qm = bf.q.means.middleCols(c * d, d).array();
    const auto qlv = bf.q.logvars.middleCols(c * d, d).array();
    const auto pm = prior.means.row(c).array();
    const auto plv = prior.logvars.row(c).array();
    const Eigen::ArrayXd rc = bf.kl.r.col(c).array();

    const Eigen::ArrayXXd dm = qm.rowwise() - pm;
    const Eigen::ArrayXXd e_dlv = (qlv.rowwise() - plv).exp();
    const Eigen::ArrayXXd e_npv =
        Eigen::ArrayXXd::Zero(n, d).rowwise() + (-plv).exp();

    const Eigen::ArrayXXd dqm = inv_n * ((dm * e_npv).colwise() * rc);
    const Eigen::ArrayXXd dqlv = inv_n * ((0.5 * (e_dlv - 1.0)).colwise() * rc);
    dmeans.middleCols(c * d, d) += dqm.matrix();
    dlogvars.middleCols(c * d, d) += dqlv.matrix();

    const std::string& means_name =
        first ? model.prior1().means_name() : model.prior2().means_name();
    const std::string& logvars_name =
        first ? model.prior1().logvars_name() : model.prior2().logvars_name();
    model.params().grad(means_name).row(c) -= dqm.colwise().sum().matrix();
    model.params().grad(logvars_name).row(c) +=
        (inv_n *
         ((0.5 * (1.0 - e_dlv - dm.square() * e_npv)).colwise() * rc)
             .colwise()
             .sum())
            .matrix();
  }
  const std::string& logits_name =
      first ? model.prior1().logits_name() : model.prior2().logits_name();
  model.params().grad(logits_name).col(0) +=
      inv_n * (static_cast<double>(n) * bf.kl.pi - bf.kl.r.colwise().sum().transpose());

  MixtureEncoder& enc = first ? model.enc1() : model.enc2();
  enc.backward(bf.cache, dlogits, dmeans, dlogvars);
}

}  // namespace

LossBreakdown loss_batch(CEIBModel& model, const Eigen::MatrixXd& x1,
                         const Eigen::MatrixXd& x2, const Eigen::VectorXd& t,
                         const Eigen::VectorXd& y, double lambda,
                         double temperature, const NoiseBundle& noise,
                         bool compute_grads) {
  const Eigen::Index n = x1.rows();
  if (n == 0) throw std::invalid_argument("loss: empty batch");
  if (x2.rows() != n || t.size() != n || y.size() != n) {
    throw std::invalid_argument("loss: batch size mismatch");
  }
  if (!x1.allFinite() || !x2.allFinite()) {
    throw std::invalid_argument("loss: NaN covariates (masked rows in batch?)");
  }
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("loss: temperature must be positive");
  }
  if (lambda < 0.0) {
    throw std::invalid_argument("loss: lambda must be non-negative");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (t(i) != 0.0 && t(i) != 1.0) {
      throw std::invalid_argument("loss: treatment must be 0 or 1");
    }
  }

  const bool gaussian = model.config().outcome == OutcomeFamily::gaussian;

  BlockForward b1 = block_forward(model, true, x1, noise.n1, temperature);
  BlockForward b2 = block_forward(model, false, x2, noise.n2, temperature);
  const Eigen::MatrixXd z = concat_latent(b1.v, b2.v);

  Mlp::Cache cf1, cf2, cf3;
  const Eigen::ArrayXd a =
      model.treatment_head().forward(z, &cf1).col(0).array();
  const Eigen::ArrayXd o2 =
      model.outcome_head_treated().forward(z, &cf2).col(0).array();
  const Eigen::ArrayXd o3 =
      model.outcome_head_control().forward(z, &cf3).col(0).array();
  const Eigen::ArrayXd ta = t.array();
  const Eigen::ArrayXd ya = y.array();

  LossBreakdown bd;
  bd.kl1 = b1.kl.per_unit.mean();
  bd.kl2 = b2.kl.per_unit.mean();
  bd.nll_t = (softplus(a) - ta * a).mean();

  const Eigen::ArrayXd fact = ta * o2 + (1.0 - ta) * o3;
  double ylv = 0.0;
  if (gaussian) {
    ylv = model.outcome_logvar();
    bd.nll_y =
        (0.5 * (kLog2Pi + ylv + (ya - fact).square() * std::exp(-ylv))).mean();
  } else {
    bd.nll_y = (softplus(fact) - ya * fact).mean();
  }
  bd.total = bd.kl1 + bd.kl2 + lambda * (bd.nll_y + bd.nll_t);

  if (!compute_grads) return bd;

  model.params().zero_grad();
  const double ln = lambda / static_cast<double>(n);

  const Eigen::MatrixXd da = (ln * (sigmoid(a) - ta)).matrix();
  Eigen::MatrixXd dz = model.treatment_head().backward(cf1, da);

  Eigen::ArrayXd dfact(n);
  if (gaussian) {
    dfact = ln * (fact - ya) * std::exp(-ylv);
    model.params().grad("dec.ylogvar")(0, 0) +=
        ln * (0.5 * (1.0 - (ya - fact).square() * std::exp(-ylv))).sum();
  } else {
    dfact = ln * (sigmoid(fact) - ya);
  }
  dz += model.outcome_head_treated().backward(cf2, (dfact * ta).matrix());
  dz += model.outcome_head_control().backward(cf3, (dfact * (1.0 - ta)).matrix());

  const int d1 = model.config().d1;
  block_backward(model, true, b1, dz.leftCols(d1), temperature,
                 1.0 / static_cast<double>(n));
  block_backward(model, false, b2, dz.rightCols(model.config().d2), temperature,
                 1.0 / static_cast<double>(n));
  return bd;
}

LossBreakdown loss(CEIBModel& model, const Dataset& batch, double lambda,
                   Rng& rng, double temperature) {
  if (!batch.fully_observed()) {
    throw ConfigError("loss: batch contains masked rows");
  }
  const NoiseBundle noise = draw_noise(model, batch.n(), rng);
  return loss_batch(model, batch.x1, batch.x2, batch.t, batch.y, lambda,
                    temperature, noise, /*compute_grads=*/false);
}

LossBreakdown evaluate_deterministic(const CEIBModel& model, const Dataset& ds,
                                     double lambda) {
  if (!ds.fully_observed()) {
    throw ConfigError("evaluate: dataset contains masked rows");
  }
  if (ds.n() == 0) throw std::invalid_argument("evaluate: empty dataset");

  const MixturePosterior q1 = model.encode1(ds.x1);
  const MixturePosterior q2 = model.encode2(ds.x2);
  LossBreakdown bd;
  bd.kl1 = kl_mixture(q1, model.prior1_params());
  bd.kl2 = kl_mixture(q2, model.prior2_params());

  const Eigen::MatrixXd z =
      concat_latent(q1.posterior_mean(), q2.posterior_mean());
  const Eigen::ArrayXd a = model.treatment_head().forward(z).col(0).array();
  const Eigen::ArrayXd o2 =
      model.outcome_head_treated().forward(z).col(0).array();
  const Eigen::ArrayXd o3 =
      model.outcome_head_control().forward(z).col(0).array();
  const Eigen::ArrayXd ta = ds.t.array();
  const Eigen::ArrayXd ya = ds.y.array();
  const Eigen::ArrayXd fact = ta * o2 + (1.0 - ta) * o3;

  bd.nll_t = (softplus(a) - ta * a).mean();
  if (model.config().outcome == OutcomeFamily::gaussian) {
    const double ylv = model.outcome_logvar();
    bd.nll_y =
        (0.5 * (kLog2Pi + ylv + (ya - fact).square() * std::exp(-ylv))).mean();
  } else {
    bd.nll_y = (softplus(fact) - ya * fact).mean();
  }
  bd.total = bd.kl1 + bd.kl2 + lambda * (bd.nll_y + bd.nll_t);
  return bd;
}

void write_trace_csv(const std::vector<TraceRow>& trace,
                     const std::string& path) {
  CsvWriter w(path);
  w.row({"epoch", "split", "kl1", "kl2", "nll_y", "nll_t", "total"});
  for (const TraceRow& r : trace) {
    w.row({std::to_string(r.epoch), r.split, format_double(r.loss.kl1),
           format_double(r.loss.kl2), format_double(r.loss.nll_y),
           format_double(r.loss.nll_t), format_double(r.loss.total)});
  }
}

TrainResult train(const Dataset& train_ds, const Dataset& val_ds,
                  const ModelConfig& mcfg, const TrainConfig& tcfg) {
  mcfg.validate();
  tcfg.validate();
  if (train_ds.n() == 0 || val_ds.n() == 0) {
    throw ConfigError("train: empty split");
  }
  if (!train_ds.fully_observed() || !val_ds.fully_observed()) {
    throw ConfigError("train: splits must be fully observed");
  }
  if (train_ds.p1() != val_ds.p1() || train_ds.p2() != val_ds.p2()) {
    throw ConfigError("train: split widths disagree");
  }

  TrainResult res;
  res.model = std::make_unique<CEIBModel>(mcfg, train_ds.p1(), train_ds.p2());
  CEIBModel& model = *res.model;
  Rng init_rng(derive_seed(tcfg.seed, kInitTag));
  model.init(init_rng);
  Rng shuffle_rng(derive_seed(tcfg.seed, kShuffleTag));
  Rng noise_rng(derive_seed(tcfg.seed, kNoiseTag));

  Adam::Config acfg;
  acfg.lr = tcfg.lr;
  Adam opt(model.params(), acfg);

  const Eigen::Index ntr = train_ds.n();
  std::vector<int> order(static_cast<std::size_t>(ntr));
  std::iota(order.begin(), order.end(), 0);

  Eigen::VectorXd best_params;
  res.best_val_total = std::numeric_limits<double>::infinity();
  int patience_left = tcfg.patience;
  LossBreakdown last_finite;

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const double frac =
        tcfg.epochs > 1 ? static_cast<double>(epoch) / (tcfg.epochs - 1) : 1.0;
    const double tau = tcfg.tau_start + (tcfg.tau_end - tcfg.tau_start) * frac;

    shuffle_rng.shuffle(order);
    LossBreakdown epoch_sum;
    for (std::size_t lo = 0; lo < order.size();
         lo += static_cast<std::size_t>(tcfg.batch)) {
      const std::size_t hi =
          std::min(order.size(), lo + static_cast<std::size_t>(tcfg.batch));
      const Eigen::MatrixXd x1 = take_rows(train_ds.x1, order, lo, hi);
      const Eigen::MatrixXd x2 = take_rows(train_ds.x2, order, lo, hi);
      const Eigen::VectorXd t = take_rows(train_ds.t, order, lo, hi);
      const Eigen::VectorXd y = take_rows(train_ds.y, order, lo, hi);
      const NoiseBundle noise =
          draw_noise(model, static_cast<Eigen::Index>(hi - lo), noise_rng);
      const LossBreakdown bd = loss_batch(model, x1, x2, t, y, tcfg.lambda, tau,
                                          noise, /*compute_grads=*/true);
      if (!std::isfinite(bd.total)) {
        throw NumericalError("training diverged at epoch " +
                             std::to_string(epoch) +
                             "; last finite breakdown: " +
                             breakdown_str(last_finite));
      }
      last_finite = bd;
      opt.step();
      const double wb = static_cast<double>(hi - lo);
      epoch_sum.kl1 += wb * bd.kl1;
      epoch_sum.kl2 += wb * bd.kl2;
      epoch_sum.nll_y += wb * bd.nll_y;
      epoch_sum.nll_t += wb * bd.nll_t;
      epoch_sum.total += wb * bd.total;
    }
    const double inv = 1.0 / static_cast<double>(ntr);
    LossBreakdown train_row{epoch_sum.kl1 * inv, epoch_sum.kl2 * inv,
                            epoch_sum.nll_y * inv, epoch_sum.nll_t * inv,
                            epoch_sum.total * inv};
    const LossBreakdown val_row =
        evaluate_deterministic(model, val_ds, tcfg.lambda);
    if (!std::isfinite(val_row.total)) {
      throw NumericalError("validation loss diverged at epoch " +
                           std::to_string(epoch) +
                           "; last finite breakdown: " +
                           breakdown_str(last_finite));
    }
    res.trace.push_back(TraceRow{epoch, "train", train_row});
    res.trace.push_back(TraceRow{epoch, "val", val_row});
    res.epochs_run = epoch + 1;

    if (val_row.total < res.best_val_total) {
      res.best_val_total = val_row.total;
      res.best_epoch = epoch;
      best_params = model.params().values();
      patience_left = tcfg.patience;
    } else if (--patience_left == 0) {
      break;
    }
  }

  if (best_params.size() > 0) model.params().values() = best_params;
  return res;
}

double entropy_of_y(const Dataset& ds) {
  const Eigen::Index n = ds.n();
  if (n == 0) throw std::invalid_argument("entropy_of_y: empty dataset");
  bool binary = true;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (ds.y(i) != 0.0 && ds.y(i) != 1.0) {
      binary = false;
      break;
    }
  }
  if (binary) {
    const double rate = ds.y.mean();
    if (rate <= 0.0 || rate >= 1.0) {
      throw ConfigError("entropy_of_y: degenerate outcome (rate 0 or 1)");
    }
    return -(rate * std::log(rate) + (1.0 - rate) * std::log(1.0 - rate));
  }
  const double mean = ds.y.mean();
  const double var =
      (ds.y.array() - mean).square().sum() / static_cast<double>(n);
  if (var < 1e-12) {
    throw ConfigError("entropy_of_y: degenerate outcome (zero variance)");
  }
  return 0.5 * std::log(2.0 * M_PI * M_E * var);
}

}  // namespace ceib
