#include "ceib/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "ceib/baselines.hpp"
#include "ceib/checkpoint.hpp"
#include "ceib/csv.hpp"
#include "ceib/errors.hpp"
#include "ceib/estimation.hpp"
#include "ceib/generators.hpp"
#include "ceib/info.hpp"
#include "ceib/objective.hpp"

namespace fs = std::filesystem;

namespace ceib {
namespace {

using Json = nlohmann::ordered_json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::mutex log_mu;

std::string seed_file(const std::string& run_dir, const char* stem,
                      std::uint64_t seed, const char* ext) {
  return (fs::path(run_dir) / (std::string(stem) + std::to_string(seed) + ext))
      .string();
}

std::string ihdp_replicate_path(const ExperimentConfig& cfg, std::uint64_t seed) {
  return (fs::path(cfg.ihdp.dir) /
          ("ihdp_npci_" + std::to_string(seed + 1) + ".csv"))
      .string();
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// Left-aligned plain-text table; first row is the header.
void print_table(std::ostream& out,
                 const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return;
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c) {
      width[c] = std::max(width[c], row[c].size());
    }
  }
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << std::left << std::setw(static_cast<int>(width[c]) + 2) << row[c];
    }
    out << "\n";
  }
}

void run_worker_pool(std::size_t n_tasks, int workers,
                     const std::function<void(std::size_t)>& work) {
  const int count =
      std::max(1, std::min<int>(workers, static_cast<int>(n_tasks)));
  if (count == 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) work(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(count);
  for (int w = 0; w < count; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n_tasks;
           i = next.fetch_add(1)) {
        try {
          work(i);
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

}  // namespace

SeedPlan seed_plan(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::uint64_t gen_base = 0;
  switch (cfg.task) {
    case Task::linear_gaussian: gen_base = cfg.linear_gaussian.seed; break;
    case Task::twins_sim: gen_base = cfg.twins_sim.seed; break;
    case Task::ihdp: gen_base = 0; break;  // replicates are files, not draws
  }
  SeedPlan p;
  p.gen = derive_seed(gen_base, seed);
  p.split = derive_seed(cfg.split.seed, seed);
  p.mask = derive_seed(cfg.mask.seed, seed);
  p.train = seed;
  return p;
}

Dataset dataset_for_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  const SeedPlan plan = seed_plan(cfg, seed);
  switch (cfg.task) {
    case Task::linear_gaussian: {
      LinearGaussianConfig g = cfg.linear_gaussian;
      g.seed = plan.gen;
      return gen_linear_gaussian(g);
    }
    case Task::twins_sim: {
      TwinsSimConfig g = cfg.twins_sim;
      g.seed = plan.gen;
      return gen_twins_style(g);
    }
    case Task::ihdp: {
      const std::string path = ihdp_replicate_path(cfg, seed);
      if (!fs::exists(path)) {
        throw ConfigError("ihdp replicate file not found: " + path);
      }
      return load_ihdp(path, cfg.ihdp.x2_cols);
    }
  }
  throw ConfigError("dataset_for_seed: unreachable");
}

std::string resolve_run_dir(const LoadedConfig& lc) {
  const fs::path out_dir = lc.config.out_dir;
  fs::create_directories(out_dir);
  const std::string hash = config_hash(lc.effective);

  int max_num = 0;
  int match_num = -1;
  fs::path match;
  for (const auto& entry : fs::directory_iterator(out_dir)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("run_", 0) != 0) continue;
    const std::string digits = name.substr(4);
    if (digits.empty() ||
        digits.find_first_not_of("0123456789") != std::string::npos) {
      continue;
    }
    const int num = std::stoi(digits);
    max_num = std::max(max_num, num);
    std::ifstream in(entry.path() / "config.json");
    if (!in) continue;
    const Json j = Json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.contains("config_hash")) continue;
    if (j["config_hash"].get<std::string>() == hash && num > match_num) {
      match_num = num;
      match = entry.path();
    }
  }
  if (match_num >= 0) return match.string();

  std::ostringstream name;
  name << "run_" << std::setw(3) << std::setfill('0') << (max_num + 1);
  const fs::path dir = out_dir / name.str();
  fs::create_directories(dir);
  Json snapshot;
  snapshot["format_version"] = 1;
  snapshot["config_hash"] = hash;
  snapshot["overrides"] = lc.overrides;
  snapshot["config"] = lc.effective;
  std::ofstream out(dir / "config.json");
  if (!out) throw ConfigError("cannot write " + (dir / "config.json").string());
  out << snapshot.dump(1) << "\n";
  return dir.string();
}

void append_log(const std::string& run_dir, const std::string& line) {
  std::lock_guard<std::mutex> lock(log_mu);
  std::ofstream out(fs::path(run_dir) / "log.txt", std::ios::app);
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", std::gmtime(&now));
  out << buf << "Z " << line << "\n";
}

std::string data_path(const std::string& run_dir, std::uint64_t seed) {
  return seed_file(run_dir, "data_seed", seed, ".csv");
}

std::string data_mask_path(const std::string& run_dir, std::uint64_t seed) {
  return seed_file(run_dir, "data_seed", seed, "_mask.csv");
}

std::string checkpoint_path(const std::string& run_dir, std::uint64_t seed) {
  return seed_file(run_dir, "ckpt_seed", seed, ".json");
}

std::string trace_path(const std::string& run_dir, std::uint64_t seed) {
  return seed_file(run_dir, "trace_seed", seed, ".csv");
}

void run_generate(const LoadedConfig& lc, const std::string& run_dir,
                  std::ostream& out) {
  const ExperimentConfig& cfg = lc.config;
  for (const std::uint64_t s : cfg.seeds) {
    const Dataset ds = dataset_for_seed(cfg, s);
    write_dataset_csv(ds, data_path(run_dir, s), data_mask_path(run_dir, s));
    std::ostringstream line;
    line << "seed " << s << ": n=" << ds.n() << " treated=" << ds.n_treated()
         << " p1=" << ds.p1() << " p2=" << ds.p2()
         << " regime=" << regime_name(ds.regime);
    if (ds.ground_truth) line << " true_ace=" << fmt4(true_ace(ds));
    out << line.str() << "\n";
    append_log(run_dir, "generate " + line.str());
  }
  out << "wrote " << cfg.seeds.size() << " dataset(s) to " << run_dir << "\n";
}

std::vector<TrainSeedSummary> run_train(const LoadedConfig& lc,
                                        const std::string& run_dir, bool resume,
                                        int workers, std::ostream& out) {
  const ExperimentConfig& cfg = lc.config;
  const std::string hash = config_hash(lc.effective);
  const auto& seeds = cfg.seeds;

  std::vector<TrainSeedSummary> rows(seeds.size());
  std::vector<std::string> diverged(seeds.size());

  run_worker_pool(seeds.size(), workers, [&](std::size_t i) {
    const std::uint64_t s = seeds[i];
    TrainSeedSummary& row = rows[i];
    row.seed = s;
    const std::string ckpt_file = checkpoint_path(run_dir, s);
    if (resume && fs::exists(ckpt_file)) {
      row.skipped = true;
      append_log(run_dir, "train seed " + std::to_string(s) +
                              " skipped: checkpoint exists");
      return;
    }
    const SeedPlan plan = seed_plan(cfg, s);
    const Dataset ds = dataset_for_seed(cfg, s);
    SplitSpec sp = cfg.split;
    sp.seed = plan.split;
    const Splits sets = split_dataset(ds, sp);
    const bool std_y = cfg.model.outcome == OutcomeFamily::gaussian;
    const Standardized st = standardize(sets.train, {&sets.val}, std_y);
    TrainConfig tc = cfg.train;
    tc.seed = plan.train;
    try {
      TrainResult res = train(st.train, st.others[0], cfg.model, tc);
      res.model->set_y_transform(st.scaler.y_shift, st.scaler.y_scale);
      save_checkpoint(ckpt_file, *res.model, plan.train, hash);
      write_trace_csv(res.trace, trace_path(run_dir, s));
      row.best_epoch = res.best_epoch;
      row.epochs_run = res.epochs_run;
      row.best_val_total = res.best_val_total;
      append_log(run_dir, "train seed " + std::to_string(s) + " done: best_val=" +
                              fmt4(res.best_val_total) + " epochs=" +
                              std::to_string(res.epochs_run));
    } catch (const NumericalError& e) {
      diverged[i] = e.what();
      append_log(run_dir,
                 "train seed " + std::to_string(s) + " diverged: " + e.what());
    }
  });

  std::vector<std::uint64_t> failed_seeds;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!diverged[i].empty()) {
      failed_seeds.push_back(seeds[i]);
      out << "seed " << seeds[i] << ": diverged (" << diverged[i] << ")\n";
    } else if (rows[i].skipped) {
      out << "seed " << seeds[i] << ": skipped, checkpoint exists\n";
    } else {
      out << "seed " << seeds[i] << ": best_val=" << fmt4(rows[i].best_val_total)
          << " best_epoch=" << rows[i].best_epoch
          << " epochs_run=" << rows[i].epochs_run << "\n";
    }
  }
  if (!failed_seeds.empty()) {
    std::ostringstream msg;
    msg << "training diverged for seed(s)";
    for (const auto s : failed_seeds) msg << " " << s;
    throw NumericalError(msg.str());
  }
  return rows;
}

RunReport run_evaluate(const LoadedConfig& lc, const std::string& run_dir,
                       std::ostream& out) {
  const ExperimentConfig& cfg = lc.config;
  const std::string hash = config_hash(lc.effective);

  for (const auto& b : cfg.baselines) {
    if (b == "lr" && cfg.model.outcome != OutcomeFamily::bernoulli) {
      throw ConfigError(
          "baseline 'lr' requires a binary outcome (model.outcome bernoulli)");
    }
  }

  RunReport report;
  report.config_hash = hash;

  for (const std::uint64_t s : cfg.seeds) {
    const std::string ckpt_file = checkpoint_path(run_dir, s);
    if (!fs::exists(ckpt_file)) {
      throw ConfigError("missing checkpoint " + ckpt_file +
                        "; run the train command first");
    }
    const Checkpoint ck = load_checkpoint(ckpt_file);
    if (ck.config_hash != hash) {
      throw ConfigError("checkpoint " + ckpt_file + " was trained under config " +
                        ck.config_hash + " but the current config hashes to " +
                        hash + "; refusing to evaluate");
    }
    if (!(ck.model->config() == cfg.model)) {
      throw ConfigError("checkpoint " + ckpt_file +
                        " embeds a different model config");
    }

    const SeedPlan plan = seed_plan(cfg, s);
    if (ck.train_seed != plan.train) {
      throw ConfigError("checkpoint " + ckpt_file + " carries train seed " +
                        std::to_string(ck.train_seed) + ", expected " +
                        std::to_string(plan.train));
    }
    const Dataset ds = dataset_for_seed(cfg, s);
    if (ck.model->p1() != ds.p1() || ck.model->p2() != ds.p2()) {
      throw ConfigError("checkpoint " + ckpt_file +
                        " input widths do not match the dataset");
    }
    SplitSpec sp = cfg.split;
    sp.seed = plan.split;
    const Splits sets = split_dataset(ds, sp);
    const bool std_y = cfg.model.outcome == OutcomeFamily::gaussian;
    const Standardized st = standardize(sets.train, {&sets.val, &sets.test}, std_y);
    const Dataset& ztrain = st.train;
    const Dataset& ztest = st.others[1];

    const bool has_truth = ds.ground_truth.has_value();
    const double truth_train = has_truth ? true_ace(sets.train) : kNaN;
    const double truth_test = has_truth ? true_ace(sets.test) : kNaN;

    auto push = [&](const std::string& method, const std::string& metric,
                    const std::string& split, double value, bool flagged) {
      report.rows.push_back({method, metric, split, s, value, flagged});
    };
    auto push_pair = [&](const std::string& method, const std::string& split,
                         double est, double truth, bool flagged) {
      push(method, "ace", split, est, flagged);
      if (has_truth) push(method, "eps_ace", split, std::abs(est - truth), flagged);
    };

    push_pair("ceib", "train", ace(*ck.model, ztrain), truth_train, false);
    push_pair("ceib", "test", ace(*ck.model, ztest), truth_test, false);

    const ClusterTable table = fit_equivalence_classes(*ck.model, ztrain);
    const Dataset masked_test = mask_x2(ztest, cfg.mask.fraction, plan.mask);
    push_pair("ceib_partial", "test", ace_partial(*ck.model, table, masked_test),
              truth_test, false);

    const std::string cluster_file = seed_file(run_dir, "clusters_seed", s, ".csv");
    write_cluster_table_csv(table, cluster_file);
    report.artifacts.push_back(fs::path(cluster_file).filename().string());

    for (const auto& comp : table.compositions) {
      const CompositionReport cr =
          cluster_composition_report(table, comp.attribute);
      const std::string comp_file =
          seed_file(run_dir, "composition_seed", s, ("_" + comp.attribute + ".csv").c_str());
      write_composition_csv(cr, comp_file);
      report.artifacts.push_back(fs::path(comp_file).filename().string());
      push("ceib", "max_tv_" + comp.attribute, "train",
           max_tv_from_marginal(cr), false);
    }

    if (!cfg.baselines.empty()) {
      const Standardized bs = standardize(sets.train, {&sets.test}, false);
      const Dataset& btrain = bs.train;
      const Dataset& btest = bs.others[0];
      const Dataset bmasked = mask_x2(btest, cfg.mask.fraction, plan.mask);
      const Dataset bimputed = impute_x2_train_mean(btrain, bmasked);

      for (const auto& name : cfg.baselines) {
        auto estimate = [&](const Dataset& eval) -> BaselineEstimate {
          if (name == "ols1") return ols1(btrain, eval);
          if (name == "ols2") return ols2(btrain, eval);
          if (name == "knn") return knn_ace(btrain, eval, cfg.knn_k);
          return logistic_ace(btrain, eval);
        };
        const BaselineEstimate est_in = estimate(btrain);
        const BaselineEstimate est_out = estimate(btest);
        const BaselineEstimate est_part = estimate(bimputed);
        push_pair(name, "train", est_in.ace, truth_train, est_in.flagged);
        push_pair(name, "test", est_out.ace, truth_test, est_out.flagged);
        push_pair(name + "_partial", "test", est_part.ace, truth_test,
                  est_part.flagged);
      }
    }
  }

  // Aggregate over seeds per (method, metric, split), in first-appearance
  // order so the summary layout is stable.
  std::vector<std::pair<std::pair<std::string, std::string>, std::vector<double>>>
      groups;
  for (const ReportRow& r : report.rows) {
    const std::pair<std::string, std::string> key{r.method,
                                                  r.metric + "." + r.split};
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const auto& g) { return g.first == key; });
    if (it == groups.end()) {
      groups.push_back({key, {r.value}});
    } else {
      it->second.push_back(r.value);
    }
  }
  for (const auto& [key, values] : groups) {
    report.summaries.push_back(summarize(key.first, key.second, values));
  }

  for (const std::uint64_t s : cfg.seeds) {
    report.artifacts.push_back(fs::path(checkpoint_path(run_dir, s)).filename().string());
    report.artifacts.push_back(fs::path(trace_path(run_dir, s)).filename().string());
  }

  Json j;
  j["format_version"] = 1;
  j["config_hash"] = hash;
  j["overrides"] = lc.overrides;
  j["config"] = lc.effective;
  Json rows_json = Json::array();
  for (const ReportRow& r : report.rows) {
    rows_json.push_back({{"method", r.method},
                         {"metric", r.metric},
                         {"split", r.split},
                         {"seed", r.seed},
                         {"value", r.value},
                         {"flagged", r.flagged}});
  }
  j["rows"] = std::move(rows_json);
  Json sums_json = Json::array();
  for (const ReplicateSummary& sm : report.summaries) {
    sums_json.push_back({{"method", sm.method},
                         {"metric", sm.metric},
                         {"mean", sm.mean},
                         {"stderr", sm.stderr_},
                         {"n", sm.values.size()},
                         {"values", sm.values}});
  }
  j["summaries"] = std::move(sums_json);
  j["artifacts"] = report.artifacts;

  const fs::path report_file = fs::path(run_dir) / "report.json";
  {
    std::ofstream rf(report_file);
    if (!rf) throw ConfigError("cannot write " + report_file.string());
    rf << j.dump(1) << "\n";
  }
  write_summary_csv(report.summaries,
                    (fs::path(run_dir) / "summary.csv").string());
  append_log(run_dir, "evaluate: " + std::to_string(report.rows.size()) +
                          " rows over " + std::to_string(cfg.seeds.size()) +
                          " seed(s)");

  std::vector<std::vector<std::string>> table{{"method", "metric", "mean",
                                               "stderr", "n"}};
  for (const ReplicateSummary& sm : report.summaries) {
    table.push_back({sm.method, sm.metric, fmt4(sm.mean), fmt4(sm.stderr_),
                     std::to_string(sm.values.size())});
  }
  print_table(out, table);
  out << "report: " << report_file.string() << "\n";
  return report;
}

void run_sweep(const LoadedConfig& lc, const std::string& run_dir, int workers,
               std::ostream& out) {
  const ExperimentConfig& cfg = lc.config;
  if (cfg.sweep.lambda_grid.empty()) {
    throw ConfigError("config: sweep.lambda_grid must be non-empty for sweep");
  }
  SweepConfig sc;
  sc.model = cfg.model;
  sc.train = cfg.train;
  sc.lambda_grid = cfg.sweep.lambda_grid;
  sc.dim_grid = cfg.sweep.dim_grid;
  if (sc.dim_grid.empty()) {
    sc.dim_grid = {SweepGridPoint{cfg.model.d1, cfg.model.d2, cfg.model.k1,
                                  cfg.model.k2}};
  }
  sc.seeds = cfg.sweep.seeds.empty() ? cfg.seeds : cfg.sweep.seeds;
  sc.workers = workers;

  const std::uint64_t s0 = cfg.seeds.front();
  const SeedPlan plan = seed_plan(cfg, s0);
  const Dataset ds = dataset_for_seed(cfg, s0);
  SplitSpec sp = cfg.split;
  sp.seed = plan.split;

  const std::vector<CurvePoint> points = sweep(ds, sp, sc);
  const std::string curve_file = (fs::path(run_dir) / "curve.csv").string();
  write_curve_csv(points, curve_file);
  append_log(run_dir, "sweep: " + std::to_string(points.size()) + " points");

  std::vector<std::vector<std::string>> table{
      {"lambda", "cells", "failed", "mean_izy", "mean_izt", "mean_compression",
       "mean_eps_ace"}};
  for (const double lambda : sc.lambda_grid) {
    int cells = 0, failed = 0;
    double izy = 0, izt = 0, comp = 0, eps = 0;
    int eps_n = 0;
    for (const CurvePoint& p : points) {
      if (p.lambda != lambda) continue;
      ++cells;
      if (p.failed) {
        ++failed;
        continue;
      }
      izy += p.izy;
      izt += p.izt;
      comp += p.compression;
      if (std::isfinite(p.eps_ace)) {
        eps += p.eps_ace;
        ++eps_n;
      }
    }
    const int ok = cells - failed;
    table.push_back({fmt4(lambda), std::to_string(cells), std::to_string(failed),
                     ok ? fmt4(izy / ok) : "-", ok ? fmt4(izt / ok) : "-",
                     ok ? fmt4(comp / ok) : "-",
                     eps_n ? fmt4(eps / eps_n) : "-"});
  }
  print_table(out, table);
  out << "curve: " << curve_file << "\n";
}

void print_report(const std::string& run_dir, std::ostream& out) {
  const fs::path report_file = fs::path(run_dir) / "report.json";
  std::ifstream in(report_file);
  if (!in) {
    throw ConfigError("no report.json in " + run_dir +
                      "; run the evaluate command first");
  }
  const Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw ConfigError(report_file.string() + " is not valid JSON");
  }

  out << "run: " << run_dir << "\n";
  out << "config hash: " << j.value("config_hash", std::string("?")) << "\n";
  if (j.contains("config")) {
    const auto& c = j["config"];
    out << "task: " << c.value("task", std::string("?")) << ", seeds:";
    if (c.contains("seeds")) {
      for (const auto& s : c["seeds"]) out << " " << s;
    }
    out << "\n";
  }
  out << "\n";

  if (j.contains("summaries")) {
    std::vector<std::vector<std::string>> table{
        {"method", "metric", "mean", "stderr", "n"}};
    for (const auto& sm : j["summaries"]) {
      table.push_back({sm.value("method", std::string("?")),
                       sm.value("metric", std::string("?")),
                       sm.contains("mean") && sm["mean"].is_number()
                           ? fmt4(sm["mean"].get<double>())
                           : "nan",
                       sm.contains("stderr") && sm["stderr"].is_number()
                           ? fmt4(sm["stderr"].get<double>())
                           : "nan",
                       std::to_string(sm.value("n", 0))});
    }
    print_table(out, table);
    out << "\n";
  }

  if (j.contains("rows")) {
    std::vector<std::vector<std::string>> table{
        {"method", "metric", "split", "seed", "value", "flagged"}};
    for (const auto& r : j["rows"]) {
      table.push_back(
          {r.value("method", std::string("?")), r.value("metric", std::string("?")),
           r.value("split", std::string("?")),
           r.contains("seed") ? r["seed"].dump() : "?",
           r.contains("value") && r["value"].is_number()
               ? fmt4(r["value"].get<double>())
               : "nan",
           r.value("flagged", false) ? "yes" : ""});
    }
    print_table(out, table);
    out << "\n";
  }

  // Composition tables, grouped as written (one file per seed and attribute).
  if (j.contains("artifacts")) {
    for (const auto& a : j["artifacts"]) {
      const std::string name = a.get<std::string>();
      if (name.rfind("composition_", 0) != 0) continue;
      const fs::path file = fs::path(run_dir) / name;
      if (!fs::exists(file)) continue;
      out << name << ":\n";
      print_table(out, read_csv(file.string()));
      out << "\n";
    }
  }

  const fs::path curve_file = fs::path(run_dir) / "curve.csv";
  if (fs::exists(curve_file)) {
    out << "curve.csv:\n";
    print_table(out, read_csv(curve_file.string()));
  }
}

}  // namespace ceib
