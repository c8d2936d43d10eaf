#ifndef CEIB_GENERATORS_HPP_
#define CEIB_GENERATORS_HPP_

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "ceib/dataset.hpp"

namespace ceib {

// Structural model:
//   z ~ N(0, I_dz)
//   x1 = A1 z + eps1,  x2 = A2 z + eps2
//   t ~ Bern(sigma(w.z + b))      (observational)  or Bern(1/2) (randomized)
//   mu0 = beta0.z + intercept0,   mu1 = beta1.z + intercept1
//   y = t * mu1 + (1 - t) * mu0 + eps_y
// True ACE is intercept1 - intercept0 since E[z] = 0.
struct LinearGaussianConfig {
  int n = 2000;
  int dz = 2;
  int p1 = 3;
  int p2 = 3;
  Eigen::MatrixXd a1;  // p1 x dz; empty selects the canonical default pattern
  Eigen::MatrixXd a2;  // p2 x dz
  Eigen::VectorXd w;   // dz; empty selects all-ones
  double b = 0.0;
  Eigen::VectorXd beta0;  // dz; empty selects all-ones
  Eigen::VectorXd beta1;  // dz; empty selects all-twos
  double intercept0 = 0.0;
  double intercept1 = 0.0;
  double outcome_noise_sd = 0.5;
  double covariate_noise_sd = 0.2;
  Regime regime = Regime::observational;
  std::uint64_t seed = 0;
  // Optional categorical attributes derived from the confounder, for
  // composition reports: "severity" buckets the propensity score w.z into 4
  // population quartiles; "group" flags the top quartile of z_0.
  bool severity_attribute = false;
  bool group_attribute = false;

  void validate() const;
  LinearGaussianConfig resolved() const;  // fills empty matrices with defaults
};

Dataset gen_linear_gaussian(const LinearGaussianConfig& cfg);

// Closed form: intercept1 - intercept0 (E[z] = 0).
double linear_gaussian_true_ace(const LinearGaussianConfig& cfg);

// Desk-scale analog of the twins task:
//   z ~ Uniform{0..9}                     (gestation-weeks category)
//   x_extra ~ N(0, I_{p_extra})
//   proxies = one-hot(z) replicated `replicates` times, each bit flipped
//             independently with probability flip_prob
//   t | x, z ~ Bern(sigma(w_o.x_extra + w_h (z/10 - 0.1))),
//             w_o ~ N(0, 0.1 I), w_h ~ N(5, 0.1)   (drawn once per dataset)
//   y_arm ~ Bern(sigma(a z/10 + b*arm + c)); observed y selected by t
// Covariates assemble as [proxies, x_extra]; x2_cols picks the block withheld
// at test time (default: the first 3 extra columns).
struct TwinsSimConfig {
  int n = 3000;
  int p_extra = 5;
  int replicates = 3;
  double flip_prob = 0.1;
  double a = 2.0;
  double b = 1.0;
  double c = -2.0;
  std::vector<int> x2_cols;  // indices into the assembled covariate matrix
  std::uint64_t seed = 0;

  int n_proxy_cols() const { return 10 * replicates; }
  int n_cols() const { return n_proxy_cols() + p_extra; }
  void validate() const;
  std::vector<int> resolved_x2_cols() const;
};

Dataset gen_twins_style(const TwinsSimConfig& cfg);

// Exact 10-term average of sigma(a z/10 + b + c) - sigma(a z/10 + c).
double twins_true_ace(const TwinsSimConfig& cfg);

// Standard IHDP replicate CSV layout: treatment, y_factual, y_cfactual, mu0,
// mu1, then 25 covariates. A header row is optional. x2_cols (3 indices into
// the 25 covariates) selects the block withheld at test time.
Dataset load_ihdp(const std::string& path, const std::vector<int>& x2_cols);

// Ground-truth ACE: mean(mu1 - mu0). Throws when ground truth is absent.
double true_ace(const Dataset& ds);

}  // namespace ceib

#endif  // CEIB_GENERATORS_HPP_
