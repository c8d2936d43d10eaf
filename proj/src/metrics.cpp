#include "ceib/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "ceib/csv.hpp"

namespace ceib {

double eps_ace(double true_ace, double est_ace) {
  if (!std::isfinite(true_ace) || !std::isfinite(est_ace)) {
    throw std::invalid_argument("eps_ace: inputs must be finite");
  }
  return std::abs(true_ace - est_ace);
}

ReplicateSummary summarize(const std::string& method, const std::string& metric,
                           const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("summarize: empty values");
  ReplicateSummary s;
  s.method = method;
  s.metric = metric;
  s.values = values;
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stderr_ = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return s;
}

double max_tv_from_marginal(const CompositionReport& report) {
  const Eigen::Index rows = report.proportions.rows();
  if (rows < 2) throw std::invalid_argument("max_tv_from_marginal: no clusters");
  const auto marginal = report.proportions.row(rows - 1);
  double worst = 0.0;
  for (Eigen::Index r = 0; r + 1 < rows; ++r) {
    if (report.proportions.row(r).sum() == 0.0) continue;  // empty cluster
    const double tv =
        0.5 * (report.proportions.row(r) - marginal).cwiseAbs().sum();
    worst = std::max(worst, tv);
  }
  return worst;
}

void write_summary_csv(const std::vector<ReplicateSummary>& summaries,
                       const std::string& path) {
  CsvWriter w(path);
  w.row({"method", "metric", "mean", "stderr", "n"});
  for (const auto& s : summaries) {
    w.row({s.method, s.metric, format_double(s.mean), format_double(s.stderr_),
           std::to_string(s.values.size())});
  }
}

}  // namespace ceib
