#ifndef CEIB_ESTIMATION_HPP
#define CEIB_ESTIMATION_HPP

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

#include "ceib/dataset.hpp"
#include "ceib/model.hpp"

namespace ceib {

// Deterministic per-unit latents: responsibility-weighted component means
// (no sampling), plus the responsibilities they came from.
struct LatentCodes {
  Eigen::MatrixXd v1, v2;  // n x d1, n x d2
  Eigen::MatrixXd r1, r2;  // n x k1, n x k2
};

// Requires fully observed covariates in both blocks.
LatentCodes encode_deterministic(const CEIBModel& model,
                                 const Eigen::MatrixXd& x1,
                                 const Eigen::MatrixXd& x2);

// Per-row treated-minus-control prediction on the model's outcome scale.
// Bernoulli family: a risk difference.
Eigen::VectorXd sce(const CEIBModel& model, const Eigen::MatrixXd& z);

// Hard partition of training units over the joint mixture components.
// Joint cluster id = c1 * k2 + c2. Empty clusters keep count 0 and NaN
// centroids.
struct ClusterTable {
  int k1 = 0, k2 = 0;
  int d1 = 0, d2 = 0;
  int n_train = 0;
  std::vector<int> counts;        // size k1*k2
  Eigen::MatrixXd v1_centroids;   // (k1*k2) x d1
  Eigen::MatrixXd v2_centroids;   // (k1*k2) x d2
  std::vector<int> assignment;    // training unit -> joint cluster id

  struct Composition {
    std::string attribute;
    std::vector<std::string> categories;  // sorted unique values
    Eigen::MatrixXd proportions;          // clusters x categories, empty rows 0
    Eigen::VectorXd marginal;             // categories
  };
  std::vector<Composition> compositions;  // one per training attribute

  int n_clusters() const { return k1 * k2; }
};

ClusterTable fit_equivalence_classes(const CEIBModel& model,
                                     const Dataset& train);

// Inference for a unit whose second covariate block is unobserved: hard-assign
// on the first encoder, then adopt the V2 centroid of the largest-count joint
// cluster sharing that component (tie: lowest id). `fallback` marks the case
// where no nonempty cluster shares the component and the globally largest
// cluster was used instead.
struct PartialAssignment {
  int cluster = -1;
  Eigen::VectorXd z;  // d1 + d2
  bool fallback = false;
};

PartialAssignment assign_partial(const CEIBModel& model,
                                 const ClusterTable& clusters,
                                 const Eigen::RowVectorXd& x1_row);

// Average SCE over units, reported on the original outcome scale. `ace`
// requires fully observed rows; `ace_partial` routes masked rows through
// assign_partial and is exactly `ace` when nothing is masked.
double ace(const CEIBModel& model, const Dataset& ds);
double ace_partial(const CEIBModel& model, const ClusterTable& clusters,
                   const Dataset& ds);

// Per-cluster category proportions for one attribute, with the training
// marginal appended as a final row labeled "marginal". Throws ConfigError on
// an unknown attribute name.
struct CompositionReport {
  std::string attribute;
  std::vector<std::string> categories;
  std::vector<std::string> row_labels;  // cluster ids then "marginal"
  Eigen::MatrixXd proportions;          // rows x categories
};

CompositionReport cluster_composition_report(const ClusterTable& clusters,
                                             const std::string& attribute);
void write_composition_csv(const CompositionReport& report,
                           const std::string& path);

// Cluster CSV carries what partial inference needs: ids, counts, centroids.
// Per-unit assignments and compositions stay with the in-memory fit.
void write_cluster_table_csv(const ClusterTable& clusters,
                             const std::string& path);
ClusterTable read_cluster_table_csv(const std::string& path);

}  // namespace ceib

#endif
