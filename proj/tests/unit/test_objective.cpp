#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "ceib/csv.hpp"
#include "ceib/dataset.hpp"
#include "ceib/errors.hpp"
#include "ceib/generators.hpp"
#include "ceib/model.hpp"
#include "ceib/objective.hpp"
#include "ceib/rng.hpp"
#include "doctest.h"
#include "support/gradcheck.hpp"

using ceib::CEIBModel;
using ceib::Dataset;
using ceib::LossBreakdown;
using ceib::MixtureParams;
using ceib::MixturePosterior;
using ceib::ModelConfig;
using ceib::NoiseBundle;
using ceib::Regime;
using ceib::Rng;
using ceib::TrainConfig;

namespace {

// Simpson integration of KL(N(m1, e^lv1) || N(m2, e^lv2)) over m1 +- 12 sd.
double gauss_kl_quad(double m1, double lv1, double m2, double lv2) {
  const double sd1 = std::exp(lv1 / 2.0);
  const int steps = 20000;  // even
  const double lo = m1 - 12.0 * sd1, hi = m1 + 12.0 * sd1;
  const double h = (hi - lo) / steps;
  auto log_pdf = [](double x, double m, double lv) {
    const double d = x - m;
    return -0.5 * (std::log(2.0 * M_PI) + lv + d * d * std::exp(-lv));
  };
  auto f = [&](double x) {
    const double lp1 = log_pdf(x, m1, lv1);
    return std::exp(lp1) * (lp1 - log_pdf(x, m2, lv2));
  };
  double acc = f(lo) + f(hi);
  for (int i = 1; i < steps; ++i) acc += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

MixturePosterior rand_posterior(int n, int k, int d, Rng& rng) {
  MixturePosterior q;
  q.k = k;
  q.d = d;
  q.logits.resize(n, k);
  q.means.resize(n, k * d);
  q.logvars.resize(n, k * d);
  for (Eigen::Index i = 0; i < q.logits.size(); ++i) {
    q.logits.data()[i] = rng.normal();
  }
  for (Eigen::Index i = 0; i < q.means.size(); ++i) {
    q.means.data()[i] = 2.0 * rng.normal();
    q.logvars.data()[i] = 0.8 * rng.normal();
  }
  return q;
}

MixtureParams rand_prior(int k, int d, Rng& rng) {
  MixtureParams p;
  p.logits.resize(k);
  p.means.resize(k, d);
  p.logvars.resize(k, d);
  for (int c = 0; c < k; ++c) {
    p.logits(c) = rng.normal();
    for (int j = 0; j < d; ++j) {
      p.means(c, j) = 2.0 * rng.normal();
      p.logvars(c, j) = 0.8 * rng.normal();
    }
  }
  return p;
}

using gradcheck::tiny_dataset;
using gradcheck::tiny_model_config;
using gradcheck::worst_grad_rel_err;

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/ceib_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("kl of identical mixtures is zero") {
  Rng rng(1);
  MixtureParams p = rand_prior(3, 2, rng);
  MixturePosterior q;
  q.k = 3;
  q.d = 2;
  const int n = 4;
  q.logits = p.logits.transpose().replicate(n, 1);
  q.means.resize(n, 6);
  q.logvars.resize(n, 6);
  for (int c = 0; c < 3; ++c) {
    for (int j = 0; j < 2; ++j) {
      q.means.col(c * 2 + j).setConstant(p.means(c, j));
      q.logvars.col(c * 2 + j).setConstant(p.logvars(c, j));
    }
  }
  CHECK(ceib::kl_mixture(q, p) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("single-component kl reduces to the gaussian formula") {
  MixtureParams p;
  p.logits = Eigen::VectorXd::Zero(1);
  p.means = Eigen::MatrixXd::Constant(1, 1, 1.0);
  p.logvars = Eigen::MatrixXd::Zero(1, 1);
  MixturePosterior q;
  q.k = 1;
  q.d = 1;
  q.logits = Eigen::MatrixXd::Zero(1, 1);
  q.means = Eigen::MatrixXd::Zero(1, 1);
  q.logvars = Eigen::MatrixXd::Zero(1, 1);
  CHECK(ceib::kl_mixture(q, p) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("kl matches quadrature on the decomposed expression") {
  Rng rng(7);
  const int n = 3, k = 2, d = 2;
  const MixturePosterior q = rand_posterior(n, k, d, rng);
  const MixtureParams p = rand_prior(k, d, rng);

  const Eigen::VectorXd got = ceib::kl_mixture_per_unit(q, p);

  // Independent composition: categorical KL plus responsibility-weighted
  // per-component KLs, each component KL integrated numerically per dim.
  const Eigen::VectorXd log_pi =
      (p.logits.array() - std::log(p.logits.array().exp().sum())).matrix();
  for (int i = 0; i < n; ++i) {
    Eigen::ArrayXd logit_row = q.logits.row(i).transpose().array();
    const Eigen::ArrayXd e = (logit_row - logit_row.maxCoeff()).exp();
    const Eigen::ArrayXd r = e / e.sum();
    double want = 0.0;
    for (int c = 0; c < k; ++c) {
      want += r(c) * (std::log(r(c)) - log_pi(c));
      for (int j = 0; j < d; ++j) {
        want += r(c) * gauss_kl_quad(q.means(i, c * d + j),
                                     q.logvars(i, c * d + j), p.means(c, j),
                                     p.logvars(c, j));
      }
    }
    CHECK(got(i) == doctest::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("kl stays non-negative over random parameters") {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(4));
    const int d = 1 + static_cast<int>(rng.below(3));
    const MixturePosterior q = rand_posterior(2, k, d, rng);
    const MixtureParams p = rand_prior(k, d, rng);
    const Eigen::VectorXd v = ceib::kl_mixture_per_unit(q, p);
    CHECK(v.minCoeff() >= -1e-6);
  }
}

TEST_CASE("kl rejects mismatched shapes") {
  Rng rng(2);
  const MixturePosterior q = rand_posterior(2, 2, 2, rng);
  const MixtureParams p = rand_prior(3, 2, rng);
  CHECK_THROWS_AS(ceib::kl_mixture(q, p), std::invalid_argument);
}

TEST_CASE("near-hard assignment with frozen variance returns the component mean") {
  MixturePosterior q;
  q.k = 2;
  q.d = 2;
  q.logits.resize(1, 2);
  q.logits << 30.0, -30.0;
  q.means.resize(1, 4);
  q.means << 1.5, -2.5, 9.0, 9.0;
  q.logvars = Eigen::MatrixXd::Constant(1, 4, -1000.0);  // zero variance
  Rng rng(3);
  const ceib::SampledLatent s = ceib::sample_latent(q, 0.05, rng);
  CHECK(s.soft_assign(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(s.v(0, 0) == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(s.v(0, 1) == doctest::Approx(-2.5).epsilon(1e-9));
}

TEST_CASE("symmetric posterior samples average to zero") {
  MixturePosterior q;
  q.k = 2;
  q.d = 1;
  const int n = 10000;
  q.logits = Eigen::MatrixXd::Zero(n, 2);
  q.means.resize(n, 2);
  q.means.col(0).setConstant(2.0);
  q.means.col(1).setConstant(-2.0);
  q.logvars = Eigen::MatrixXd::Zero(n, 2);
  Rng rng(9);
  const ceib::SampledLatent s = ceib::sample_latent(q, 0.5, rng);
  const double mean = s.v.col(0).mean();
  const double var =
      (s.v.col(0).array() - mean).square().sum() / static_cast<double>(n);
  CHECK(std::abs(mean) <= 3.0 * std::sqrt(var / n));
}

TEST_CASE("sample gradient wrt posterior means is the soft assignment") {
  Rng rng(4);
  MixturePosterior q = rand_posterior(5, 3, 2, rng);
  Rng noise_rng(8);
  const ceib::LatentNoise noise = ceib::draw_latent_noise(5, 3, 2, noise_rng);
  const ceib::SampledLatent base = ceib::sample_latent(q, 0.7, noise);
  const double h = 1e-6;
  for (int i = 0; i < 5; ++i) {
    for (int c = 0; c < 3; ++c) {
      const int col = c * 2 + 1;  // dimension j = 1 of component c
      MixturePosterior qp = q;
      qp.means(i, col) += h;
      const double up = ceib::sample_latent(qp, 0.7, noise).v(i, 1);
      qp.means(i, col) -= 2 * h;
      const double dn = ceib::sample_latent(qp, 0.7, noise).v(i, 1);
      const double fd = (up - dn) / (2 * h);
      CHECK(fd == doctest::Approx(base.soft_assign(i, c)).epsilon(1e-4));
    }
  }
}

TEST_CASE("sample_latent validates temperature") {
  Rng rng(5);
  const MixturePosterior q = rand_posterior(2, 2, 1, rng);
  CHECK_THROWS_AS(ceib::sample_latent(q, 0.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(ceib::sample_latent(q, -1.0, rng), std::invalid_argument);
}

TEST_CASE("loss gradients match finite differences, gaussian family") {
  CHECK(worst_grad_rel_err(ceib::OutcomeFamily::gaussian) < 1e-4);
}

TEST_CASE("loss gradients match finite differences, bernoulli family") {
  CHECK(worst_grad_rel_err(ceib::OutcomeFamily::bernoulli) < 1e-4);
}

TEST_CASE("loss breakdown satisfies its own total identity") {
  const Dataset ds = tiny_dataset(16, false, 6);
  CEIBModel model(tiny_model_config(ceib::OutcomeFamily::gaussian), 2, 2);
  Rng init(1);
  model.init(init);
  Rng rng(2);
  const double lambda = 2.5;
  const LossBreakdown bd = ceib::loss(model, ds, lambda, rng);
  CHECK(bd.total ==
        doctest::Approx(bd.kl1 + bd.kl2 + lambda * (bd.nll_y + bd.nll_t))
            .epsilon(1e-12));
}

TEST_CASE("lambda zero drops the likelihood terms and their gradients") {
  const Dataset ds = tiny_dataset(8, false, 6);
  CEIBModel model(tiny_model_config(ceib::OutcomeFamily::gaussian), 2, 2);
  Rng init(1);
  model.init(init);
  for (Eigen::Index i = 0; i < model.params().size(); ++i) {
    model.params().values()(i) += 0.2 * init.normal();
  }
  Rng noise_rng(3);
  const NoiseBundle noise = ceib::draw_noise(model, ds.n(), noise_rng);
  const LossBreakdown bd =
      ceib::loss_batch(model, ds.x1, ds.x2, ds.t, ds.y, 0.0, 1.0, noise, true);
  CHECK(bd.total == doctest::Approx(bd.kl1 + bd.kl2).epsilon(1e-12));
  // Decoder parameters receive no gradient at lambda = 0.
  for (const auto& shape : model.params().tensors()) {
    if (shape.name.rfind("f1.", 0) == 0 || shape.name.rfind("f2.", 0) == 0 ||
        shape.name.rfind("f3.", 0) == 0 || shape.name == "dec.ylogvar") {
      CHECK(model.params().grad(shape.name).norm() == 0.0);
    }
  }
}

TEST_CASE("a perfect treatment head scores zero treatment nll") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, 2);
  Eigen::VectorXd t = Eigen::VectorXd::Ones(6);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(6);
  const Dataset ds = ceib::make_dataset(x, x, t, y, Regime::observational);
  CEIBModel model(tiny_model_config(ceib::OutcomeFamily::gaussian), 2, 2);
  Rng init(1);
  model.init(init);
  model.params().value("f1.out.b")(0, 0) = 40.0;  // prob -> 1 for every unit
  Rng rng(2);
  const LossBreakdown bd = ceib::loss(model, ds, 1.0, rng);
  CHECK(bd.nll_t == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("loss is invariant to batch order") {
  const Dataset ds = tiny_dataset(10, false, 8);
  CEIBModel model(tiny_model_config(ceib::OutcomeFamily::gaussian), 2, 2);
  Rng init(4);
  model.init(init);
  for (Eigen::Index i = 0; i < model.params().size(); ++i) {
    model.params().values()(i) += 0.2 * init.normal();
  }
  Rng noise_rng(5);
  NoiseBundle noise = ceib::draw_noise(model, 10, noise_rng);
  const LossBreakdown a =
      ceib::loss_batch(model, ds.x1, ds.x2, ds.t, ds.y, 1.3, 0.9, noise, false);

  std::vector<int> perm = {7, 3, 9, 0, 5, 1, 8, 2, 6, 4};
  const Dataset pd = ds.subset(perm);
  NoiseBundle pn = noise;
  for (int r = 0; r < 10; ++r) {
    pn.n1.gumbel.row(r) = noise.n1.gumbel.row(perm[r]);
    pn.n1.eps.row(r) = noise.n1.eps.row(perm[r]);
    pn.n2.gumbel.row(r) = noise.n2.gumbel.row(perm[r]);
    pn.n2.eps.row(r) = noise.n2.eps.row(perm[r]);
  }
  const LossBreakdown b =
      ceib::loss_batch(model, pd.x1, pd.x2, pd.t, pd.y, 1.3, 0.9, pn, false);
  CHECK(a.total == doctest::Approx(b.total).epsilon(1e-12));
  CHECK(a.kl1 == doctest::Approx(b.kl1).epsilon(1e-12));
}

TEST_CASE("loss refuses masked batches and NaN covariates") {
  Dataset ds = ceib::mask_x2(tiny_dataset(10, false, 8), 0.3, 1);
  CEIBModel model(tiny_model_config(ceib::OutcomeFamily::gaussian), 2, 2);
  Rng init(4);
  model.init(init);
  Rng rng(5);
  CHECK_THROWS_AS(ceib::loss(model, ds, 1.0, rng), ceib::ConfigError);
  NoiseBundle noise = ceib::draw_noise(model, ds.n(), rng);
  CHECK_THROWS_AS(ceib::loss_batch(model, ds.x1, ds.x2, ds.t, ds.y, 1.0, 1.0,
                                   noise, false),
                  std::invalid_argument);
}

TEST_CASE("deterministic evaluation shares the kl terms with the sampled loss") {
  const Dataset ds = tiny_dataset(12, false, 9);
  CEIBModel model(tiny_model_config(ceib::OutcomeFamily::gaussian), 2, 2);
  Rng init(6);
  model.init(init);
  for (Eigen::Index i = 0; i < model.params().size(); ++i) {
    model.params().values()(i) += 0.2 * init.normal();
  }
  Rng rng(7);
  const LossBreakdown sampled = ceib::loss(model, ds, 1.0, rng);
  const LossBreakdown det = ceib::evaluate_deterministic(model, ds, 1.0);
  CHECK(sampled.kl1 == doctest::Approx(det.kl1).epsilon(1e-12));
  CHECK(sampled.kl2 == doctest::Approx(det.kl2).epsilon(1e-12));
  const LossBreakdown det2 = ceib::evaluate_deterministic(model, ds, 1.0);
  CHECK(det.total == det2.total);
}

TEST_CASE("training with lambda zero collapses the posterior onto the prior") {
  ceib::LinearGaussianConfig gcfg;
  gcfg.n = 260;
  gcfg.seed = 31;
  const Dataset ds = ceib::gen_linear_gaussian(gcfg);
  ceib::SplitSpec split;
  split.seed = 1;
  const ceib::Splits s = ceib::split_dataset(ds, split);
  const ceib::Standardized st = ceib::standardize(s.train, {&s.val}, true);

  ModelConfig mc = tiny_model_config(ceib::OutcomeFamily::gaussian);
  mc.k1 = 3;
  mc.k2 = 3;
  mc.enc_hidden = {16};
  mc.dec_hidden = {8};
  TrainConfig tc;
  tc.lambda = 0.0;
  tc.epochs = 200;
  tc.batch = 32;
  tc.seed = 5;
  const ceib::TrainResult res = ceib::train(st.train, st.others[0], mc, tc);
  const LossBreakdown final_val =
      ceib::evaluate_deterministic(*res.model, st.others[0], 0.0);
  CHECK(final_val.kl1 + final_val.kl2 <= 0.01);
}

TEST_CASE("treatment nll cannot beat the coin-flip floor on randomized data") {
  ceib::LinearGaussianConfig gcfg;
  gcfg.n = 500;
  gcfg.seed = 33;
  gcfg.regime = Regime::randomized;
  const Dataset ds = ceib::gen_linear_gaussian(gcfg);
  ceib::SplitSpec split;
  split.seed = 2;
  const ceib::Splits s = ceib::split_dataset(ds, split);
  const ceib::Standardized st = ceib::standardize(s.train, {&s.val}, true);

  ModelConfig mc;
  mc.k1 = 3;
  mc.k2 = 3;
  mc.d1 = 1;
  mc.d2 = 1;
  mc.enc_hidden = {16};
  mc.dec_hidden = {8};
  TrainConfig tc;
  tc.epochs = 120;
  tc.batch = 64;
  tc.seed = 6;
  const ceib::TrainResult res = ceib::train(st.train, st.others[0], mc, tc);
  const LossBreakdown final_val =
      ceib::evaluate_deterministic(*res.model, st.others[0], 1.0);
  CHECK(final_val.nll_t >= std::log(2.0) - 0.05);
}

TEST_CASE("training is deterministic in the seed") {
  const Dataset full = tiny_dataset(80, false, 17);
  ceib::SplitSpec split;
  const ceib::Splits s = ceib::split_dataset(full, split);
  const ceib::Standardized st = ceib::standardize(s.train, {&s.val}, true);
  ModelConfig mc = tiny_model_config(ceib::OutcomeFamily::gaussian);
  TrainConfig tc;
  tc.epochs = 15;
  tc.batch = 16;
  tc.seed = 9;

  const ceib::TrainResult a = ceib::train(st.train, st.others[0], mc, tc);
  const ceib::TrainResult b = ceib::train(st.train, st.others[0], mc, tc);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].loss.total == b.trace[i].loss.total);
  }
  CHECK(a.model->params().values() == b.model->params().values());

  tc.seed = 10;
  const ceib::TrainResult c = ceib::train(st.train, st.others[0], mc, tc);
  CHECK(a.trace.back().loss.total != c.trace.back().loss.total);
}

TEST_CASE("early stopping restores the best validation parameters") {
  const Dataset full = tiny_dataset(60, false, 19);
  ceib::SplitSpec split;
  const ceib::Splits s = ceib::split_dataset(full, split);
  const ceib::Standardized st = ceib::standardize(s.train, {&s.val}, true);
  ModelConfig mc = tiny_model_config(ceib::OutcomeFamily::gaussian);
  TrainConfig tc;
  tc.epochs = 400;
  tc.batch = 16;
  tc.patience = 5;
  tc.seed = 21;
  const ceib::TrainResult res = ceib::train(st.train, st.others[0], mc, tc);
  CHECK(res.epochs_run < 400);  // noise-only outcome: patience must trigger
  CHECK(res.trace.size() == 2 * static_cast<std::size_t>(res.epochs_run));

  double best = std::numeric_limits<double>::infinity();
  for (const auto& row : res.trace) {
    if (row.split == "val") best = std::min(best, row.loss.total);
  }
  CHECK(res.best_val_total == doctest::Approx(best).epsilon(1e-12));
  // Returned parameters reproduce the best validation loss.
  const LossBreakdown again =
      ceib::evaluate_deterministic(*res.model, st.others[0], tc.lambda);
  CHECK(again.total == doctest::Approx(res.best_val_total).epsilon(1e-9));
}

TEST_CASE("divergent training aborts with a numerical error") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(40, 2);
  Eigen::VectorXd t(40), y(40);
  for (int i = 0; i < 40; ++i) {
    t(i) = i % 2 ? 1.0 : 0.0;
    y(i) = 1e200;  // squared residual overflows immediately
  }
  const Dataset ds = ceib::make_dataset(x, x, t, y, Regime::observational);
  ModelConfig mc = tiny_model_config(ceib::OutcomeFamily::gaussian);
  TrainConfig tc;
  tc.epochs = 5;
  tc.seed = 1;
  CHECK_THROWS_AS(ceib::train(ds, ds, mc, tc), ceib::NumericalError);
}

TEST_CASE("trace csv round-trips through the csv reader") {
  TempFile f("trace.csv");
  std::vector<ceib::TraceRow> trace;
  trace.push_back({0, "train", {0.1, 0.2, 0.3, 0.4, 1.0}});
  trace.push_back({0, "val", {0.5, 0.6, 0.7, 0.8, 2.6}});
  ceib::write_trace_csv(trace, f.path);
  const auto rows = ceib::read_csv(f.path);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0][0] == "epoch");
  CHECK(rows[1][1] == "train");
  CHECK(ceib::parse_double(rows[2][6]) == 2.6);
}

TEST_CASE("entropy of y follows the family formulas") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(4, 1);
  Eigen::VectorXd t = Eigen::VectorXd::Zero(4);

  Eigen::VectorXd yb(4);
  yb << 0, 1, 0, 1;
  const Dataset b = ceib::make_dataset(x, x, t, yb, Regime::observational);
  CHECK(ceib::entropy_of_y(b) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Eigen::VectorXd yc(4);
  yc << -1.0, 1.0, -1.0, 1.0;  // population variance exactly 1
  const Dataset c = ceib::make_dataset(x, x, t, yc, Regime::observational);
  CHECK(ceib::entropy_of_y(c) ==
        doctest::Approx(0.5 * std::log(2.0 * M_PI * M_E)).epsilon(1e-12));

  Eigen::VectorXd y0 = Eigen::VectorXd::Zero(4);
  const Dataset z = ceib::make_dataset(x, x, t, y0, Regime::observational);
  CHECK_THROWS_AS(ceib::entropy_of_y(z), ceib::ConfigError);

  Eigen::VectorXd yflat = Eigen::VectorXd::Constant(4, 2.5);
  const Dataset f = ceib::make_dataset(x, x, t, yflat, Regime::observational);
  CHECK_THROWS_AS(ceib::entropy_of_y(f), ceib::ConfigError);
}
