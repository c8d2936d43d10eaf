#ifndef CEIB_INFO_HPP
#define CEIB_INFO_HPP

#include <string>
#include <vector>

#include "ceib/dataset.hpp"
#include "ceib/model.hpp"
#include "ceib/objective.hpp"

namespace ceib {

// Empirical entropy of a binary treatment vector, nats.
double treatment_entropy(const Dataset& ds);

// Variational lower bound on I(Z;T): H(T) minus the treatment head's mean
// cross-entropy on the deterministic latents, clipped below at zero.
double estimate_izt(const CEIBModel& model, const Dataset& ds);

// Variational bound on I(Z;Y): h(y) minus the outcome head's mean NLL on the
// deterministic latents. Unclipped: negative values mean the head
// underperforms the marginal fit and are reported as-is.
double estimate_izy(const CEIBModel& model, const Dataset& ds);

// Spearman rank correlation; average ranks on ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// One sweep cell: a full training run at a (lambda, dims, seed) triple.
struct CurvePoint {
  double lambda = 0.0;
  int d1 = 0, d2 = 0;
  int k1 = 0, k2 = 0;
  int dims = 0;               // d1 + d2
  double compression = 0.0;   // kl1 + kl2 on the evaluation split
  double izy = 0.0;
  double izt = 0.0;
  double eps_ace = 0.0;       // NaN when ground truth is absent
  std::uint64_t seed = 0;
  double final_val_total = 0.0;
  bool failed = false;        // training diverged; metric fields NaN
};

struct SweepGridPoint {
  int d1 = 2, d2 = 2;
  int k1 = 5, k2 = 5;
};

struct SweepConfig {
  ModelConfig model;              // template; k/d overridden per grid point
  TrainConfig train;              // template; lambda/seed overridden per cell
  std::vector<double> lambda_grid;
  std::vector<SweepGridPoint> dim_grid;
  std::vector<std::uint64_t> seeds;
  int workers = 1;  // cells are independent; results identical at any count
};

// Full-factorial sweep over lambda x dims x seeds on a fixed split of ds.
// Each cell trains from scratch; divergent cells are flagged, not fatal.
// Metrics are computed on the validation split; eps_ace additionally uses the
// test split when ground truth is present. Points are sorted by lambda, then
// dims, then seed.
std::vector<CurvePoint> sweep(const Dataset& ds, const SplitSpec& split,
                              const SweepConfig& cfg);

// CSV with one row per point, columns exactly the CurvePoint fields.
void write_curve_csv(const std::vector<CurvePoint>& points,
                     const std::string& path);
std::vector<CurvePoint> read_curve_csv(const std::string& path);

}  // namespace ceib

#endif
