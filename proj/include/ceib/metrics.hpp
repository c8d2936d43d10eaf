#ifndef CEIB_METRICS_HPP
#define CEIB_METRICS_HPP

#include <string>
#include <vector>

#include "ceib/estimation.hpp"

namespace ceib {

// |true - est|; symmetric, zero iff equal.
double eps_ace(double true_ace, double est_ace);

// Replicate aggregation: mean and standard error (sample sd over sqrt R,
// zero when R = 1).
struct ReplicateSummary {
  std::string method;
  std::string metric;
  std::vector<double> values;
  double mean = 0.0;
  double stderr_ = 0.0;
};

ReplicateSummary summarize(const std::string& method, const std::string& metric,
                           const std::vector<double>& values);

// Largest total-variation distance between any nonempty cluster's category
// proportions and the marginal row of the report.
double max_tv_from_marginal(const CompositionReport& report);

// One row per (method, metric) pair: method, metric, mean, stderr, n.
void write_summary_csv(const std::vector<ReplicateSummary>& summaries,
                       const std::string& path);

}  // namespace ceib

#endif
