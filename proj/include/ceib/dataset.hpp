#ifndef CEIB_DATASET_HPP_
#define CEIB_DATASET_HPP_

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ceib {

enum class Regime { observational, randomized };

std::string regime_name(Regime r);
Regime regime_from_name(const std::string& s);

// Noiseless potential-outcome means, when the generator knows them.
struct PotentialOutcomes {
  Eigen::VectorXd mu0;
  Eigen::VectorXd mu1;
};

// Named categorical column used for cluster-composition reports.
struct Attribute {
  std::string name;
  std::vector<std::string> values;  // one per unit
};

// Covariates are split into an always-observed block x1 and a maskable block
// x2. Masked x2 rows are overwritten with NaN so that any code path that
// ignores the mask fails loudly instead of reading stale values.
//
// Datasets are immutable after construction by convention; all operations
// below return new datasets.
struct Dataset {
  Eigen::MatrixXd x1;  // n x p1
  Eigen::MatrixXd x2;  // n x p2
  Eigen::VectorXd t;   // treatment, each entry exactly 0.0 or 1.0
  Eigen::VectorXd y;   // outcome
  std::vector<std::uint8_t> x2_observed;  // per unit
  Regime regime = Regime::observational;
  std::optional<PotentialOutcomes> ground_truth;
  std::vector<Attribute> attributes;

  Eigen::Index n() const { return x1.rows(); }
  Eigen::Index p1() const { return x1.cols(); }
  Eigen::Index p2() const { return x2.cols(); }
  bool fully_observed() const;
  Eigen::Index n_treated() const;
  const Attribute* find_attribute(const std::string& name) const;
  Dataset subset(const std::vector<int>& idx) const;
};

// Validating constructor. Throws std::invalid_argument on dimension mismatch,
// non-binary treatment, or NaN in any numeric field.
Dataset make_dataset(Eigen::MatrixXd x1, Eigen::MatrixXd x2, Eigen::VectorXd t,
                     Eigen::VectorXd y, Regime regime,
                     std::optional<PotentialOutcomes> ground_truth = std::nullopt,
                     std::vector<Attribute> attributes = {});

struct SplitSpec {
  double train_frac = 0.6;
  double val_frac = 0.2;
  double test_frac = 0.2;
  std::uint64_t seed = 0;
  void validate() const;  // fractions positive, sum to 1 within 1e-9
};

struct Splits {
  Dataset train, val, test;
  std::vector<int> train_idx, val_idx, test_idx;  // sorted, disjoint, exhaustive
};

// Sizes are floor(n * frac) for val and test; remainder rows go to train.
// Deterministic given spec.seed.
Splits split_dataset(const Dataset& ds, const SplitSpec& spec);

// Marks floor(fraction * n) uniformly chosen units as missing their x2 block
// and overwrites those rows with NaN. x1, t, y are never altered.
Dataset mask_x2(const Dataset& ds, double fraction, std::uint64_t seed);

// Per-column affine transform fitted on the training split only. Zero-variance
// columns pass through unchanged. When y is standardized (continuous outcomes),
// ground-truth potential outcomes are transformed alongside it so a dataset
// stays internally consistent; inverse factors are retained for reporting on
// the original scale.
struct Scaler {
  Eigen::VectorXd x1_shift, x1_scale;
  Eigen::VectorXd x2_shift, x2_scale;
  double y_shift = 0.0;
  double y_scale = 1.0;
  bool y_standardized = false;

  Dataset apply(const Dataset& ds) const;
  double y_to_original(double y_std) const { return y_std * y_scale + y_shift; }
  double y_diff_to_original(double d) const { return d * y_scale; }
};

Scaler fit_scaler(const Dataset& train, bool standardize_y);

struct Standardized {
  Scaler scaler;
  Dataset train;
  std::vector<Dataset> others;
};

Standardized standardize(const Dataset& train, const std::vector<const Dataset*>& others,
                         bool standardize_y);

// CSV serialization. Columns: x1_0..x1_{p1-1}, x2_0..x2_{p2-1}, t, y
// [, mu0, mu1][, attr_<name>...]. The observation mask is written as a
// parallel single-column CSV of 0/1 flags. The regime flag is carried by
// experiment config, not the file.
void write_dataset_csv(const Dataset& ds, const std::string& data_path,
                       const std::string& mask_path);
// Block sizes are recovered from the header row. An empty mask_path means
// fully observed.
Dataset read_dataset_csv(const std::string& data_path, const std::string& mask_path,
                         Regime regime = Regime::observational);

}  // namespace ceib

#endif  // CEIB_DATASET_HPP_
