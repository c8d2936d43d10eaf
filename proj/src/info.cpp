#include "ceib/info.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "ceib/csv.hpp"
#include "ceib/errors.hpp"
#include "ceib/estimation.hpp"
#include "ceib/generators.hpp"

namespace ceib {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double treatment_entropy(const Dataset& ds) {
  const double rate = ds.t.mean();
  if (rate <= 0.0 || rate >= 1.0) {
    throw ConfigError("treatment_entropy: all units share one arm");
  }
  return -rate * std::log(rate) - (1.0 - rate) * std::log(1.0 - rate);
}

double estimate_izt(const CEIBModel& model, const Dataset& ds) {
  const double ht = treatment_entropy(ds);
  const LossBreakdown bd = evaluate_deterministic(model, ds, 1.0);
  return std::max(0.0, ht - bd.nll_t);
}

double estimate_izy(const CEIBModel& model, const Dataset& ds) {
  const double hy = entropy_of_y(ds);
  const LossBreakdown bd = evaluate_deterministic(model, ds, 1.0);
  return hy - bd.nll_y;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("spearman: length mismatch");
  }
  if (a.size() < 2) throw std::invalid_argument("spearman: need >= 2 points");
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw std::invalid_argument("spearman: constant input");
  }
  return sab / std::sqrt(saa * sbb);
}

std::vector<CurvePoint> sweep(const Dataset& ds, const SplitSpec& split,
                              const SweepConfig& cfg) {
  if (cfg.lambda_grid.empty() || cfg.dim_grid.empty() || cfg.seeds.empty()) {
    throw ConfigError("sweep: empty grid");
  }
  const Splits sets = split_dataset(ds, split);
  const bool standardize_y = cfg.model.outcome == OutcomeFamily::gaussian;
  const Standardized st =
      standardize(sets.train, {&sets.val, &sets.test}, standardize_y);
  const Dataset& val = st.others[0];
  const Dataset& test = st.others[1];

  const bool has_truth = ds.ground_truth.has_value();
  double truth = 0.0;
  if (has_truth) truth = true_ace(ds);

  struct Cell {
    double lambda;
    SweepGridPoint gp;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (double lambda : cfg.lambda_grid) {
    for (const SweepGridPoint& gp : cfg.dim_grid) {
      for (std::uint64_t seed : cfg.seeds) {
        cells.push_back({lambda, gp, seed});
      }
    }
  }

  std::vector<CurvePoint> points(cells.size());
  auto run_cell = [&](std::size_t i) {
    const Cell& cell = cells[i];
    ModelConfig mc = cfg.model;
    mc.d1 = cell.gp.d1;
    mc.d2 = cell.gp.d2;
    mc.k1 = cell.gp.k1;
    mc.k2 = cell.gp.k2;
    TrainConfig tc = cfg.train;
    tc.lambda = cell.lambda;
    tc.seed = cell.seed;

    CurvePoint pt;
    pt.lambda = cell.lambda;
    pt.d1 = cell.gp.d1;
    pt.d2 = cell.gp.d2;
    pt.k1 = cell.gp.k1;
    pt.k2 = cell.gp.k2;
    pt.dims = cell.gp.d1 + cell.gp.d2;
    pt.seed = cell.seed;
    try {
      TrainResult res = train(st.train, val, mc, tc);
      res.model->set_y_transform(st.scaler.y_shift, st.scaler.y_scale);
      const LossBreakdown bd = evaluate_deterministic(*res.model, val, cell.lambda);
      pt.compression = bd.kl1 + bd.kl2;
      pt.izy = entropy_of_y(val) - bd.nll_y;
      pt.izt = std::max(0.0, treatment_entropy(val) - bd.nll_t);
      pt.final_val_total = res.best_val_total;
      pt.eps_ace = has_truth
                       ? std::abs(ace(*res.model, test) - truth)
                       : kNaN;
    } catch (const NumericalError&) {
      pt.failed = true;
      pt.compression = kNaN;
      pt.izy = kNaN;
      pt.izt = kNaN;
      pt.eps_ace = kNaN;
      pt.final_val_total = kNaN;
    }
    points[i] = pt;
  };

  const int workers =
      std::max(1, std::min<int>(cfg.workers, static_cast<int>(cells.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < cells.size();
             i = next.fetch_add(1)) {
          try {
            run_cell(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mu);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }
  std::sort(points.begin(), points.end(),
            [](const CurvePoint& a, const CurvePoint& b) {
              if (a.lambda != b.lambda) return a.lambda < b.lambda;
              if (a.dims != b.dims) return a.dims < b.dims;
              if (a.k1 != b.k1) return a.k1 < b.k1;
              if (a.k2 != b.k2) return a.k2 < b.k2;
              return a.seed < b.seed;
            });
  return points;
}

void write_curve_csv(const std::vector<CurvePoint>& points,
                     const std::string& path) {
  CsvWriter w(path);
  w.row({"lambda", "d1", "d2", "k1", "k2", "dims", "compression", "izy", "izt",
         "eps_ace", "seed", "final_val_total", "failed"});
  for (const CurvePoint& p : points) {
    w.row({format_double(p.lambda), std::to_string(p.d1), std::to_string(p.d2),
           std::to_string(p.k1), std::to_string(p.k2), std::to_string(p.dims),
           format_double(p.compression), format_double(p.izy),
           format_double(p.izt), format_double(p.eps_ace),
           std::to_string(p.seed), format_double(p.final_val_total),
           p.failed ? "1" : "0"});
  }
}

std::vector<CurvePoint> read_curve_csv(const std::string& path) {
  const auto rows = read_csv(path);
  if (rows.empty() || rows[0].size() != 13) {
    throw ConfigError("curve csv: bad header in " + path);
  }
  std::vector<CurvePoint> points;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 13) throw ConfigError("curve csv: ragged row");
    CurvePoint p;
    p.lambda = parse_double(row[0]);
    p.d1 = static_cast<int>(parse_double(row[1]));
    p.d2 = static_cast<int>(parse_double(row[2]));
    p.k1 = static_cast<int>(parse_double(row[3]));
    p.k2 = static_cast<int>(parse_double(row[4]));
    p.dims = static_cast<int>(parse_double(row[5]));
    p.compression = parse_double(row[6]);
    p.izy = parse_double(row[7]);
    p.izt = parse_double(row[8]);
    p.eps_ace = parse_double(row[9]);
    p.seed = static_cast<std::uint64_t>(parse_double(row[10]));
    p.final_val_total = parse_double(row[11]);
    p.failed = row[12] == "1";
    points.push_back(p);
  }
  return points;
}

}  // namespace ceib
