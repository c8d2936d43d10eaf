#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "ceib/csv.hpp"
#include "ceib/dataset.hpp"
#include "ceib/errors.hpp"
#include "ceib/estimation.hpp"
#include "ceib/model.hpp"
#include "ceib/rng.hpp"
#include "doctest.h"

using ceib::CEIBModel;
using ceib::ClusterTable;
using ceib::Dataset;
using ceib::ModelConfig;
using ceib::Regime;
using ceib::Rng;

namespace {

ModelConfig small_config(int k1, int k2) {
  ModelConfig mc;
  mc.k1 = k1;
  mc.k2 = k2;
  mc.d1 = 1;
  mc.d2 = 1;
  mc.enc_hidden = {4};
  mc.dec_hidden = {4};
  return mc;
}

Dataset random_dataset(int n, std::uint64_t seed, bool with_attr = true) {
  Rng rng(seed);
  Eigen::MatrixXd x1(n, 2), x2(n, 2);
  Eigen::VectorXd t(n), y(n);
  for (int i = 0; i < n; ++i) {
    x1(i, 0) = rng.normal();
    x1(i, 1) = rng.normal();
    x2(i, 0) = rng.normal();
    x2(i, 1) = rng.normal();
    t(i) = i % 2 ? 1.0 : 0.0;
    y(i) = rng.normal();
  }
  Dataset ds = ceib::make_dataset(x1, x2, t, y, Regime::observational);
  if (with_attr) {
    std::vector<std::string> parity;
    for (int i = 0; i < n; ++i) parity.push_back(i % 3 ? "odd" : "third");
    ds.attributes.push_back({"parity", parity});
  }
  return ds;
}

// Fresh init leaves every output layer zero, so arm predictions equal the arm
// biases; this pins them to given constants.
std::unique_ptr<CEIBModel> make_constant_arm_model(const ModelConfig& mc,
                                                   double mu0, double mu1,
                                                   std::uint64_t seed = 1) {
  auto model = std::make_unique<CEIBModel>(mc, 2, 2);
  Rng rng(seed);
  model->init(rng);
  model->params().value("f2.out.b")(0, 0) = mu1;
  model->params().value("f3.out.b")(0, 0) = mu0;
  return model;
}

// Spread the encoder logits so most units get confident responsibilities.
void sharpen_encoders(CEIBModel& model, std::uint64_t seed) {
  Rng rng(seed);
  for (const char* name : {"enc1.logit.w", "enc2.logit.w"}) {
    auto w = model.params().value(name);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = 8.0 * rng.normal();
  }
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/ceib_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("sce is zero for identical arms and constant for shifted arms") {
  ModelConfig mc = small_config(2, 2);
  CEIBModel model(mc, 2, 2);
  Rng rng(3);
  model.init(rng);
  // Make both arms the same nontrivial function.
  auto w2 = model.params().value("f2.out.w");
  for (Eigen::Index i = 0; i < w2.size(); ++i) w2.data()[i] = 0.5 * (double)i - 1.0;
  for (const std::string s : {".h0.w", ".h0.b", ".out.w", ".out.b"}) {
    model.params().value("f3" + s) = model.params().value("f2" + s);
  }
  const Eigen::MatrixXd z = Eigen::MatrixXd::Random(7, 2);
  CHECK(ceib::sce(model, z).cwiseAbs().maxCoeff() == 0.0);

  model.params().value("f2.out.b")(0, 0) += 2.0;
  const Eigen::VectorXd shifted = ceib::sce(model, z);
  for (int i = 0; i < 7; ++i) CHECK(shifted(i) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("sce equals the arm prediction difference") {
  ModelConfig mc = small_config(2, 2);
  CEIBModel model(mc, 2, 2);
  Rng rng(5);
  model.init(rng);
  for (Eigen::Index i = 0; i < model.params().size(); ++i) {
    model.params().values()(i) += 0.3 * rng.normal();
  }
  const Eigen::MatrixXd z = Eigen::MatrixXd::Random(5, 2);
  const auto [mu0, mu1] = model.predict_both_arms(z);
  const Eigen::VectorXd s = ceib::sce(model, z);
  CHECK((s - (mu1 - mu0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sce is affine in z when the arms are linear") {
  ModelConfig mc = small_config(2, 2);
  mc.dec_hidden = {};  // arm heads reduce to single linear layers
  CEIBModel model(mc, 2, 2);
  Rng rng(7);
  model.init(rng);
  for (Eigen::Index i = 0; i < model.params().size(); ++i) {
    model.params().values()(i) += 0.5 * rng.normal();
  }
  Eigen::MatrixXd z0 = Eigen::MatrixXd::Random(1, 2);
  Eigen::MatrixXd d = Eigen::MatrixXd::Random(1, 2);
  const double s0 = ceib::sce(model, z0)(0);
  const double s1 = ceib::sce(model, z0 + d)(0);
  const double s2 = ceib::sce(model, z0 + 2.0 * d)(0);
  CHECK(s2 - s1 == doctest::Approx(s1 - s0).epsilon(1e-9));
}

TEST_CASE("ace of a constant-effect model is the constant on the y scale") {
  const Dataset ds = random_dataset(20, 11);
  const auto model = make_constant_arm_model(small_config(2, 2), 1.0, 3.0);
  CHECK(ceib::ace(*model, ds) == doctest::Approx(2.0).epsilon(1e-12));

  model->set_y_transform(5.0, 1.7);  // shift cancels in the difference
  CHECK(ceib::ace(*model, ds) == doctest::Approx(2.0 * 1.7).epsilon(1e-12));
}

TEST_CASE("ace of a single unit equals sce at that unit's latent") {
  const Dataset ds = random_dataset(1, 13);
  ModelConfig mc = small_config(2, 2);
  CEIBModel model(mc, 2, 2);
  Rng rng(17);
  model.init(rng);
  for (Eigen::Index i = 0; i < model.params().size(); ++i) {
    model.params().values()(i) += 0.3 * rng.normal();
  }
  const ceib::LatentCodes codes = ceib::encode_deterministic(model, ds.x1, ds.x2);
  Eigen::MatrixXd z(1, 2);
  z << codes.v1, codes.v2;
  CHECK(ceib::ace(model, ds) == doctest::Approx(ceib::sce(model, z)(0)).epsilon(1e-12));
}

TEST_CASE("ace refuses masked rows") {
  const Dataset ds = ceib::mask_x2(random_dataset(10, 19), 0.5, 2);
  const auto model = make_constant_arm_model(small_config(2, 2), 0.0, 2.0);
  CHECK_THROWS_AS(ceib::ace(*model, ds), ceib::ConfigError);
}

TEST_CASE("equivalence classes partition the training data") {
  const Dataset ds = random_dataset(60, 23);
  ModelConfig mc = small_config(2, 3);
  CEIBModel model(mc, 2, 2);
  Rng rng(29);
  model.init(rng);
  sharpen_encoders(model, 31);
  const ClusterTable table = ceib::fit_equivalence_classes(model, ds);

  CHECK(table.n_clusters() == 6);
  int total = 0;
  for (int c : table.counts) total += c;
  CHECK(total == 60);
  CHECK(table.assignment.size() == 60);

  const ceib::LatentCodes codes = ceib::encode_deterministic(model, ds.x1, ds.x2);
  for (int i = 0; i < 60; ++i) {
    Eigen::Index c1 = 0, c2 = 0;
    codes.r1.row(i).maxCoeff(&c1);
    codes.r2.row(i).maxCoeff(&c2);
    CHECK(table.assignment[i] == static_cast<int>(c1) * 3 + static_cast<int>(c2));
  }

  // Empty clusters carry NaN centroids; nonempty centroids average members.
  for (int id = 0; id < 6; ++id) {
    if (table.counts[id] == 0) {
      CHECK(std::isnan(table.v2_centroids(id, 0)));
    } else {
      double acc = 0.0;
      for (int i = 0; i < 60; ++i) {
        if (table.assignment[i] == id) acc += codes.v2(i, 0);
      }
      CHECK(table.v2_centroids(id, 0) ==
            doctest::Approx(acc / table.counts[id]).epsilon(1e-12));
    }
  }

  // Composition proportions of nonempty clusters sum to one.
  REQUIRE(table.compositions.size() == 1);
  const auto& comp = table.compositions[0];
  CHECK(comp.attribute == "parity");
  for (int id = 0; id < 6; ++id) {
    if (table.counts[id] > 0) {
      CHECK(comp.proportions.row(id).sum() == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
  CHECK(comp.marginal.sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("single joint cluster holds every unit and mirrors the marginal") {
  const Dataset ds = random_dataset(30, 37);
  ModelConfig mc = small_config(1, 1);
  CEIBModel model(mc, 2, 2);
  Rng rng(41);
  model.init(rng);
  const ClusterTable table = ceib::fit_equivalence_classes(model, ds);
  CHECK(table.n_clusters() == 1);
  CHECK(table.counts[0] == 30);

  const ceib::CompositionReport report =
      ceib::cluster_composition_report(table, "parity");
  CHECK(report.row_labels.back() == "marginal");
  CHECK((report.proportions.row(0) - report.proportions.row(1))
            .cwiseAbs()
            .maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(ceib::cluster_composition_report(table, "nope"),
                  ceib::ConfigError);
}

TEST_CASE("partial assignment with one v2 component uses the global mean") {
  const Dataset ds = random_dataset(40, 43);
  ModelConfig mc = small_config(2, 1);
  CEIBModel model(mc, 2, 2);
  Rng rng(47);
  model.init(rng);
  sharpen_encoders(model, 53);
  const ClusterTable table = ceib::fit_equivalence_classes(model, ds);
  const ceib::LatentCodes codes = ceib::encode_deterministic(model, ds.x1, ds.x2);

  const ceib::PartialAssignment pa =
      ceib::assign_partial(model, table, ds.x1.row(0));
  CHECK_FALSE(pa.fallback);
  // Both clusters share the single global v2 centroid value per c1 row; the
  // imputed v2 must be the mean over that cluster's members, and with k2 = 1
  // every row's match is its own c1 cluster.
  CHECK(pa.z(1) == table.v2_centroids(pa.cluster, 0));
  CHECK(pa.z(0) == doctest::Approx(codes.v1(0, 0)).epsilon(1e-12));
}

TEST_CASE("confident units keep their v1 component under partial assignment") {
  const Dataset ds = random_dataset(80, 59);
  ModelConfig mc = small_config(3, 2);
  CEIBModel model(mc, 2, 2);
  Rng rng(61);
  model.init(rng);
  sharpen_encoders(model, 67);
  const ClusterTable table = ceib::fit_equivalence_classes(model, ds);
  const ceib::LatentCodes codes = ceib::encode_deterministic(model, ds.x1, ds.x2);

  int checked = 0;
  for (int i = 0; i < 80; ++i) {
    Eigen::Index c1 = 0;
    if (codes.r1.row(i).maxCoeff(&c1) < 0.9) continue;
    ++checked;
    const ceib::PartialAssignment pa =
        ceib::assign_partial(model, table, ds.x1.row(i));
    CHECK(pa.cluster / table.k2 == table.assignment[i] / table.k2);
  }
  CHECK(checked > 0);  // the sharpened encoder must make some units confident
}

TEST_CASE("partial assignment falls back to the largest cluster") {
  const Dataset ds = random_dataset(40, 71);
  ModelConfig mc = small_config(2, 2);
  CEIBModel model(mc, 2, 2);
  Rng rng(73);
  model.init(rng);
  sharpen_encoders(model, 79);
  ClusterTable table = ceib::fit_equivalence_classes(model, ds);

  const ceib::PartialAssignment before =
      ceib::assign_partial(model, table, ds.x1.row(0));
  // Empty out the matched component row to force the fallback.
  const int c1 = before.cluster / table.k2;
  for (int c2 = 0; c2 < table.k2; ++c2) table.counts[c1 * table.k2 + c2] = 0;
  const ceib::PartialAssignment after =
      ceib::assign_partial(model, table, ds.x1.row(0));
  CHECK(after.fallback);
  int largest = 0;
  for (int id = 1; id < table.n_clusters(); ++id) {
    if (table.counts[id] > table.counts[largest]) largest = id;
  }
  CHECK(after.cluster == largest);
}

TEST_CASE("ace_partial without masking equals ace exactly") {
  const Dataset ds = random_dataset(50, 83);
  ModelConfig mc = small_config(2, 2);
  CEIBModel model(mc, 2, 2);
  Rng rng(89);
  model.init(rng);
  for (Eigen::Index i = 0; i < model.params().size(); ++i) {
    model.params().values()(i) += 0.3 * rng.normal();
  }
  const ClusterTable table = ceib::fit_equivalence_classes(model, ds);
  CHECK(ceib::ace_partial(model, table, ds) == ceib::ace(model, ds));
}

TEST_CASE("fully masked degenerate model freezes v2 at the global centroid") {
  const Dataset train = random_dataset(30, 97);
  ModelConfig mc = small_config(1, 1);
  CEIBModel model(mc, 2, 2);
  Rng rng(101);
  model.init(rng);
  for (Eigen::Index i = 0; i < model.params().size(); ++i) {
    model.params().values()(i) += 0.3 * rng.normal();
  }
  const ClusterTable table = ceib::fit_equivalence_classes(model, train);
  Dataset test = ceib::mask_x2(random_dataset(20, 103), 1.0, 5);
  const double got = ceib::ace_partial(model, table, test);

  // Oracle: same units with v2 pinned to the lone centroid.
  const Eigen::MatrixXd v1 = model.encode1(test.x1).posterior_mean();
  Eigen::MatrixXd z(20, 2);
  z.col(0) = v1;
  z.col(1).setConstant(table.v2_centroids(0, 0));
  CHECK(got == doctest::Approx(ceib::sce(model, z).mean()).epsilon(1e-12));
}

TEST_CASE("mixed masking averages the observed and imputed paths") {
  const Dataset train = random_dataset(60, 107);
  ModelConfig mc = small_config(2, 2);
  CEIBModel model(mc, 2, 2);
  Rng rng(109);
  model.init(rng);
  sharpen_encoders(model, 113);
  const ClusterTable table = ceib::fit_equivalence_classes(model, train);
  const Dataset test = ceib::mask_x2(random_dataset(40, 127), 0.5, 7);

  const double got = ceib::ace_partial(model, table, test);
  // Oracle: average per-row sce with each row routed by its own mask bit.
  double acc = 0.0;
  for (int i = 0; i < 40; ++i) {
    Eigen::MatrixXd z(1, 2);
    if (test.x2_observed[i]) {
      z << model.encode1(test.x1.row(i)).posterior_mean(),
          model.encode2(test.x2.row(i)).posterior_mean();
    } else {
      z.row(0) = ceib::assign_partial(model, table, test.x1.row(i)).z.transpose();
    }
    acc += ceib::sce(model, z)(0);
  }
  CHECK(got == doctest::Approx(acc / 40.0).epsilon(1e-10));
}

TEST_CASE("cluster table csv round-trips with stable ids") {
  const Dataset ds = random_dataset(50, 131);
  ModelConfig mc = small_config(2, 3);
  CEIBModel model(mc, 2, 2);
  Rng rng(137);
  model.init(rng);
  sharpen_encoders(model, 139);
  const ClusterTable table = ceib::fit_equivalence_classes(model, ds);

  TempFile f("clusters.csv");
  ceib::write_cluster_table_csv(table, f.path);
  const ClusterTable back = ceib::read_cluster_table_csv(f.path);
  CHECK(back.k1 == table.k1);
  CHECK(back.k2 == table.k2);
  CHECK(back.d1 == table.d1);
  CHECK(back.d2 == table.d2);
  CHECK(back.n_train == table.n_train);
  CHECK(back.counts == table.counts);
  for (int id = 0; id < table.n_clusters(); ++id) {
    for (int j = 0; j < table.d2; ++j) {
      if (std::isnan(table.v2_centroids(id, j))) {
        CHECK(std::isnan(back.v2_centroids(id, j)));
      } else {
        CHECK(back.v2_centroids(id, j) == table.v2_centroids(id, j));
      }
    }
  }

  // Partial assignment behaves identically through the round trip.
  const ceib::PartialAssignment a = ceib::assign_partial(model, table, ds.x1.row(3));
  const ceib::PartialAssignment b = ceib::assign_partial(model, back, ds.x1.row(3));
  CHECK(a.cluster == b.cluster);
  CHECK(a.z == b.z);
}

TEST_CASE("composition csv lists clusters then the marginal") {
  const Dataset ds = random_dataset(30, 149);
  ModelConfig mc = small_config(2, 2);
  CEIBModel model(mc, 2, 2);
  Rng rng(151);
  model.init(rng);
  const ClusterTable table = ceib::fit_equivalence_classes(model, ds);
  const ceib::CompositionReport report =
      ceib::cluster_composition_report(table, "parity");

  TempFile f("composition.csv");
  ceib::write_composition_csv(report, f.path);
  const auto rows = ceib::read_csv(f.path);
  REQUIRE(rows.size() == 1 + 4 + 1);  // header, 4 clusters, marginal
  CHECK(rows[0][0] == "cluster");
  CHECK(rows[0][1] == "odd");
  CHECK(rows[0][2] == "third");
  CHECK(rows.back()[0] == "marginal");
  CHECK(ceib::parse_double(rows.back()[2]) == doctest::Approx(10.0 / 30.0));
}
