// Python module exposing the main operations: data generation, splitting and
// masking, model training with effect estimation (full and partial
// covariates), the classical baselines, and the experiment harness.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <sstream>
#include <stdexcept>

#include "ceib/baselines.hpp"
#include "ceib/checkpoint.hpp"
#include "ceib/config.hpp"
#include "ceib/dataset.hpp"
#include "ceib/errors.hpp"
#include "ceib/estimation.hpp"
#include "ceib/generators.hpp"
#include "ceib/harness.hpp"
#include "ceib/info.hpp"
#include "ceib/model.hpp"
#include "ceib/objective.hpp"

namespace py = pybind11;

namespace {

// A trained model bundled with the preprocessing it was trained under, so
// effect estimates on raw-scale data need no side information.
struct Estimator {
  std::shared_ptr<ceib::CEIBModel> model;
  ceib::Scaler scaler;
  ceib::ClusterTable clusters;
  std::uint64_t train_seed = 0;
  int best_epoch = -1;
  double best_val_total = 0.0;

  double ace(const ceib::Dataset& ds) const {
    return ceib::ace(*model, scaler.apply(ds));
  }
  double ace_partial(const ceib::Dataset& ds) const {
    return ceib::ace_partial(*model, clusters, scaler.apply(ds));
  }
  void save(const std::string& path, const std::string& config_hash) const {
    ceib::save_checkpoint(path, *model, train_seed, config_hash);
  }
};

Estimator train_estimator(const ceib::Dataset& train_ds,
                          const ceib::Dataset& val_ds,
                          const ceib::ModelConfig& mcfg,
                          const ceib::TrainConfig& tcfg) {
  const bool std_y = mcfg.outcome == ceib::OutcomeFamily::gaussian;
  const ceib::Standardized st = ceib::standardize(train_ds, {&val_ds}, std_y);
  ceib::TrainResult res = ceib::train(st.train, st.others[0], mcfg, tcfg);
  res.model->set_y_transform(st.scaler.y_shift, st.scaler.y_scale);

  Estimator est;
  est.model = std::shared_ptr<ceib::CEIBModel>(res.model.release());
  est.scaler = st.scaler;
  est.clusters = ceib::fit_equivalence_classes(*est.model, st.train);
  est.train_seed = tcfg.seed;
  est.best_epoch = res.best_epoch;
  est.best_val_total = res.best_val_total;
  return est;
}

py::dict baseline_estimate_dict(const ceib::BaselineEstimate& est) {
  py::dict d;
  d["method"] = est.method;
  d["ace"] = est.ace;
  d["diagnostic"] = est.diagnostic;
  d["flagged"] = est.flagged;
  return d;
}

py::dict baseline_ace(const std::string& name, const ceib::Dataset& train,
                      const ceib::Dataset& eval, int knn_k) {
  if (name == "ols1") return baseline_estimate_dict(ceib::ols1(train, eval));
  if (name == "ols2") return baseline_estimate_dict(ceib::ols2(train, eval));
  if (name == "knn") {
    return baseline_estimate_dict(ceib::knn_ace(train, eval, knn_k));
  }
  if (name == "lr") return baseline_estimate_dict(ceib::logistic_ace(train, eval));
  throw ceib::ConfigError("unknown baseline '" + name +
                          "' (expected ols1, ols2, knn, or lr)");
}

std::string run_experiment(const std::string& config_json,
                           const std::string& command,
                           const std::vector<std::string>& overrides,
                           int workers, bool resume) {
  const ceib::LoadedConfig lc = ceib::load_config_text(config_json, overrides);
  const std::string run_dir = ceib::resolve_run_dir(lc);
  std::ostringstream sink;
  if (command == "generate") {
    ceib::run_generate(lc, run_dir, sink);
  } else if (command == "train") {
    ceib::run_train(lc, run_dir, resume, workers, sink);
  } else if (command == "evaluate") {
    ceib::run_evaluate(lc, run_dir, sink);
  } else if (command == "sweep") {
    ceib::run_sweep(lc, run_dir, workers, sink);
  } else {
    throw ceib::ConfigError("unknown command '" + command +
                            "' (expected generate, train, evaluate, or sweep)");
  }
  return run_dir;
}

}  // namespace

PYBIND11_MODULE(_ceib, m) {
  m.doc() = "cause-effect information bottleneck: generators, training, "
            "effect estimation, baselines, and the experiment harness";

  py::register_exception<ceib::ConfigError>(m, "ConfigError",
                                            PyExc_ValueError);
  py::register_exception<ceib::NumericalError>(m, "NumericalError",
                                               PyExc_ArithmeticError);

  py::class_<ceib::Dataset>(m, "Dataset")
      .def_property_readonly("x1",
                             [](const ceib::Dataset& d) { return d.x1; })
      .def_property_readonly("x2",
                             [](const ceib::Dataset& d) { return d.x2; })
      .def_property_readonly("t", [](const ceib::Dataset& d) { return d.t; })
      .def_property_readonly("y", [](const ceib::Dataset& d) { return d.y; })
      .def_property_readonly(
          "x2_observed",
          [](const ceib::Dataset& d) {
            return std::vector<bool>(d.x2_observed.begin(), d.x2_observed.end());
          })
      .def_property_readonly("n", &ceib::Dataset::n)
      .def_property_readonly("p1", &ceib::Dataset::p1)
      .def_property_readonly("p2", &ceib::Dataset::p2)
      .def("fully_observed", &ceib::Dataset::fully_observed)
      .def("true_ace", [](const ceib::Dataset& d) { return ceib::true_ace(d); },
           "ground-truth effect, mean(mu1 - mu0); raises when absent")
      .def("__repr__", [](const ceib::Dataset& d) {
        return "<Dataset n=" + std::to_string(d.n()) +
               " p1=" + std::to_string(d.p1()) +
               " p2=" + std::to_string(d.p2()) + ">";
      });

  py::class_<ceib::ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("k1", &ceib::ModelConfig::k1)
      .def_readwrite("k2", &ceib::ModelConfig::k2)
      .def_readwrite("d1", &ceib::ModelConfig::d1)
      .def_readwrite("d2", &ceib::ModelConfig::d2)
      .def_readwrite("enc_hidden", &ceib::ModelConfig::enc_hidden)
      .def_readwrite("dec_hidden", &ceib::ModelConfig::dec_hidden)
      .def_property(
          "outcome",
          [](const ceib::ModelConfig& c) {
            return ceib::outcome_family_name(c.outcome);
          },
          [](ceib::ModelConfig& c, const std::string& name) {
            c.outcome = ceib::outcome_family_from_name(name);
          });

  py::class_<ceib::TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("lambda_", &ceib::TrainConfig::lambda)
      .def_readwrite("epochs", &ceib::TrainConfig::epochs)
      .def_readwrite("batch", &ceib::TrainConfig::batch)
      .def_readwrite("lr", &ceib::TrainConfig::lr)
      .def_readwrite("tau_start", &ceib::TrainConfig::tau_start)
      .def_readwrite("tau_end", &ceib::TrainConfig::tau_end)
      .def_readwrite("patience", &ceib::TrainConfig::patience)
      .def_readwrite("seed", &ceib::TrainConfig::seed);

  py::class_<Estimator>(m, "Estimator")
      .def("ace", &Estimator::ace, py::arg("dataset"),
           "average effect on fully observed data, original outcome scale")
      .def("ace_partial", &Estimator::ace_partial, py::arg("dataset"),
           "average effect with masked second blocks routed through the "
           "training clusters")
      .def("save", &Estimator::save, py::arg("path"),
           py::arg("config_hash") = "",
           "write the model checkpoint (parameters, config, outcome scale)")
      .def_readonly("best_epoch", &Estimator::best_epoch)
      .def_readonly("best_val_total", &Estimator::best_val_total);

  m.def(
      "generate_linear_gaussian",
      [](int n, int dz, int p1, int p2, double intercept0, double intercept1,
         double outcome_noise_sd, double covariate_noise_sd,
         const std::string& regime, std::uint64_t seed,
         bool severity_attribute, bool group_attribute) {
        ceib::LinearGaussianConfig cfg;
        cfg.n = n;
        cfg.dz = dz;
        cfg.p1 = p1;
        cfg.p2 = p2;
        cfg.intercept0 = intercept0;
        cfg.intercept1 = intercept1;
        cfg.outcome_noise_sd = outcome_noise_sd;
        cfg.covariate_noise_sd = covariate_noise_sd;
        cfg.regime = ceib::regime_from_name(regime);
        cfg.seed = seed;
        cfg.severity_attribute = severity_attribute;
        cfg.group_attribute = group_attribute;
        return ceib::gen_linear_gaussian(cfg);
      },
      py::arg("n") = 2000, py::arg("dz") = 2, py::arg("p1") = 3,
      py::arg("p2") = 3, py::arg("intercept0") = 0.0,
      py::arg("intercept1") = 2.0, py::arg("outcome_noise_sd") = 0.5,
      py::arg("covariate_noise_sd") = 0.2,
      py::arg("regime") = "observational", py::arg("seed") = 0,
      py::arg("severity_attribute") = false, py::arg("group_attribute") = false,
      "confounded linear-gaussian data with known ground truth");

  m.def(
      "generate_twins",
      [](int n, int p_extra, int replicates, double flip_prob, double a,
         double b, double c, const std::vector<int>& x2_cols,
         std::uint64_t seed) {
        ceib::TwinsSimConfig cfg;
        cfg.n = n;
        cfg.p_extra = p_extra;
        cfg.replicates = replicates;
        cfg.flip_prob = flip_prob;
        cfg.a = a;
        cfg.b = b;
        cfg.c = c;
        cfg.x2_cols = x2_cols;
        cfg.seed = seed;
        return ceib::gen_twins_style(cfg);
      },
      py::arg("n") = 3000, py::arg("p_extra") = 5, py::arg("replicates") = 3,
      py::arg("flip_prob") = 0.1, py::arg("a") = 2.0, py::arg("b") = 1.0,
      py::arg("c") = -2.0, py::arg("x2_cols") = std::vector<int>{},
      py::arg("seed") = 0,
      "binary-outcome task with noisy proxies of a hidden category");

  m.def("load_ihdp", &ceib::load_ihdp, py::arg("path"), py::arg("x2_cols"),
        "load one replicate CSV (treatment, factual/counterfactual outcomes, "
        "ground-truth means, covariates)");

  m.def(
      "split_dataset",
      [](const ceib::Dataset& ds, double train_frac, double val_frac,
         double test_frac, std::uint64_t seed) {
        const ceib::Splits s = ceib::split_dataset(
            ds, ceib::SplitSpec{train_frac, val_frac, test_frac, seed});
        return py::make_tuple(s.train, s.val, s.test);
      },
      py::arg("dataset"), py::arg("train_frac") = 0.6,
      py::arg("val_frac") = 0.2, py::arg("test_frac") = 0.2,
      py::arg("seed") = 0, "deterministic (train, val, test) partition");

  m.def("mask_x2", &ceib::mask_x2, py::arg("dataset"), py::arg("fraction"),
        py::arg("seed"),
        "mark a uniform fraction of units as missing their second block");

  m.def("train_estimator", &train_estimator, py::arg("train"), py::arg("val"),
        py::arg("model") = ceib::ModelConfig{},
        py::arg("train_config") = ceib::TrainConfig{},
        "standardize, train, and package an effect estimator");

  m.def("baseline_ace", &baseline_ace, py::arg("name"), py::arg("train"),
        py::arg("eval"), py::arg("knn_k") = 5,
        "classical estimate: ols1, ols2, knn, or lr");

  m.def("impute_x2_train_mean", &ceib::impute_x2_train_mean, py::arg("train"),
        py::arg("dataset"),
        "replace masked second blocks by per-column training means");

  m.def("run_experiment", &run_experiment, py::arg("config_json"),
        py::arg("command"), py::arg("overrides") = std::vector<std::string>{},
        py::arg("workers") = 1, py::arg("resume") = false,
        "run one harness command (generate/train/evaluate/sweep) from a JSON "
        "config string; returns the run directory");
}
