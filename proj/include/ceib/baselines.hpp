#ifndef CEIB_BASELINES_HPP
#define CEIB_BASELINES_HPP

#include <Eigen/Core>
#include <string>

#include "ceib/dataset.hpp"

namespace ceib {

// Classical comparison estimators. All are deterministic in the data, consume
// fully observed covariate blocks, and report the effect on the scale of the
// data they are given.
struct BaselineEstimate {
  std::string method;
  double ace = 0.0;
  // Residual variance for the least-squares fits, training accuracy for the
  // logistic fit, NaN for matching (no natural scalar).
  double diagnostic = 0.0;
  // Rank-deficient design (least squares) or saturated coefficients
  // (logistic, any |coef| > 15).
  bool flagged = false;
};

// Single regression of y on [x1, x2, t, 1]; the treatment coefficient is the
// effect, identical within and out of sample by construction.
BaselineEstimate ols1(const Dataset& train, const Dataset& eval);

// Separate arm regressions; effect = mean predicted arm difference over eval.
BaselineEstimate ols2(const Dataset& train, const Dataset& eval);

// Matching: counterfactual of an eval row is the mean outcome of its
// k nearest opposite-arm training rows (Euclidean over both blocks, ties by
// distance then training index). Factual is the row's own outcome when the
// row appears in train (exact covariate+treatment match), otherwise the
// k nearest same-arm mean.
BaselineEstimate knn_ace(const Dataset& train, const Dataset& eval,
                         int k_neighbors = 5);

// Ridge-penalized (1e-4, always on) logistic fit of a binary outcome on
// [x1, x2, t, 1]; effect = mean predicted risk difference over eval.
BaselineEstimate logistic_ace(const Dataset& train, const Dataset& eval);

// Replace masked x2 rows by per-column training means; the "naive" input
// convention under which baselines face partially observed data.
Dataset impute_x2_train_mean(const Dataset& train, const Dataset& ds);

}  // namespace ceib

#endif
