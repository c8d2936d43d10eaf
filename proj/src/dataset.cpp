#include "ceib/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ceib/csv.hpp"
#include "ceib/errors.hpp"
#include "ceib/rng.hpp"

namespace ceib {

namespace {
constexpr std::uint64_t kSplitTag = 0x5A11;
constexpr std::uint64_t kMaskTag = 0x3A5C;
}  // namespace

std::string regime_name(Regime r) {
  return r == Regime::randomized ? "randomized" : "observational";
}

Regime regime_from_name(const std::string& s) {
  if (s == "randomized") return Regime::randomized;
  if (s == "observational") return Regime::observational;
  throw ConfigError("unknown regime: '" + s + "'");
}

bool Dataset::fully_observed() const {
  return std::all_of(x2_observed.begin(), x2_observed.end(),
                     [](std::uint8_t o) { return o != 0; });
}

Eigen::Index Dataset::n_treated() const {
  return static_cast<Eigen::Index>(t.sum() + 0.5);
}

const Attribute* Dataset::find_attribute(const std::string& name) const {
  for (const auto& a : attributes) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

Dataset Dataset::subset(const std::vector<int>& idx) const {
  for (int i : idx) {
    if (i < 0 || i >= n()) {
      throw std::invalid_argument("Dataset::subset: index out of range");
    }
  }
  Dataset out;
  const auto m = static_cast<Eigen::Index>(idx.size());
  out.x1.resize(m, p1());
  out.x2.resize(m, p2());
  out.t.resize(m);
  out.y.resize(m);
  out.x2_observed.resize(idx.size());
  for (Eigen::Index r = 0; r < m; ++r) {
    const int i = idx[static_cast<std::size_t>(r)];
    out.x1.row(r) = x1.row(i);
    out.x2.row(r) = x2.row(i);
    out.t(r) = t(i);
    out.y(r) = y(i);
    out.x2_observed[static_cast<std::size_t>(r)] = x2_observed[static_cast<std::size_t>(i)];
  }
  out.regime = regime;
  if (ground_truth) {
    PotentialOutcomes po;
    po.mu0.resize(m);
    po.mu1.resize(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      po.mu0(r) = ground_truth->mu0(idx[static_cast<std::size_t>(r)]);
      po.mu1(r) = ground_truth->mu1(idx[static_cast<std::size_t>(r)]);
    }
    out.ground_truth = std::move(po);
  }
  for (const auto& a : attributes) {
    Attribute sub;
    sub.name = a.name;
    sub.values.reserve(idx.size());
    for (int i : idx) sub.values.push_back(a.values[static_cast<std::size_t>(i)]);
    out.attributes.push_back(std::move(sub));
  }
  return out;
}

Dataset make_dataset(Eigen::MatrixXd x1, Eigen::MatrixXd x2, Eigen::VectorXd t,
                     Eigen::VectorXd y, Regime regime,
                     std::optional<PotentialOutcomes> ground_truth,
                     std::vector<Attribute> attributes) {
  const Eigen::Index n = x1.rows();
  if (n == 0) throw std::invalid_argument("make_dataset: empty dataset");
  if (x1.cols() < 1) throw std::invalid_argument("make_dataset: p1 must be >= 1");
  if (x2.rows() != n || t.size() != n || y.size() != n) {
    throw std::invalid_argument("make_dataset: dimension mismatch across fields");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (t(i) != 0.0 && t(i) != 1.0) {
      throw std::invalid_argument("make_dataset: non-binary treatment");
    }
  }
  if (x1.hasNaN() || x2.hasNaN() || y.hasNaN()) {
    throw std::invalid_argument("make_dataset: NaN in numeric field");
  }
  if (ground_truth) {
    if (ground_truth->mu0.size() != n || ground_truth->mu1.size() != n) {
      throw std::invalid_argument("make_dataset: ground truth size mismatch");
    }
    if (ground_truth->mu0.hasNaN() || ground_truth->mu1.hasNaN()) {
      throw std::invalid_argument("make_dataset: NaN in ground truth");
    }
  }
  for (const auto& a : attributes) {
    if (a.values.size() != static_cast<std::size_t>(n)) {
      throw std::invalid_argument("make_dataset: attribute '" + a.name + "' size mismatch");
    }
  }
  Dataset ds;
  ds.x1 = std::move(x1);
  ds.x2 = std::move(x2);
  ds.t = std::move(t);
  ds.y = std::move(y);
  ds.x2_observed.assign(static_cast<std::size_t>(n), 1);
  ds.regime = regime;
  ds.ground_truth = std::move(ground_truth);
  ds.attributes = std::move(attributes);
  return ds;
}

void SplitSpec::validate() const {
  if (train_frac <= 0 || val_frac <= 0 || test_frac <= 0) {
    throw ConfigError("split fractions must be positive");
  }
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
}

Splits split_dataset(const Dataset& ds, const SplitSpec& spec) {
  spec.validate();
  const Eigen::Index n = ds.n();
  if (n < 5) throw std::invalid_argument("split_dataset: need at least 5 units");
  const auto n_val = static_cast<Eigen::Index>(std::floor(static_cast<double>(n) * spec.val_frac));
  const auto n_test = static_cast<Eigen::Index>(std::floor(static_cast<double>(n) * spec.test_frac));
  const Eigen::Index n_train = n - n_val - n_test;
  if (n_train < 1 || n_val < 1 || n_test < 1) {
    throw std::invalid_argument("split_dataset: dataset too small for three nonempty parts");
  }
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(spec.seed, kSplitTag));
  rng.shuffle(perm);

  Splits out;
  out.train_idx.assign(perm.begin(), perm.begin() + n_train);
  out.val_idx.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  out.test_idx.assign(perm.begin() + n_train + n_val, perm.end());
  std::sort(out.train_idx.begin(), out.train_idx.end());
  std::sort(out.val_idx.begin(), out.val_idx.end());
  std::sort(out.test_idx.begin(), out.test_idx.end());
  out.train = ds.subset(out.train_idx);
  out.val = ds.subset(out.val_idx);
  out.test = ds.subset(out.test_idx);
  return out;
}

Dataset mask_x2(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0) {
    throw std::invalid_argument("mask_x2: fraction must be in [0, 1]");
  }
  Dataset out = ds;
  const Eigen::Index n = ds.n();
  const auto m = static_cast<Eigen::Index>(std::floor(fraction * static_cast<double>(n)));
  if (m == 0) return out;
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, kMaskTag));
  rng.shuffle(perm);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index j = 0; j < m; ++j) {
    const int i = perm[static_cast<std::size_t>(j)];
    out.x2_observed[static_cast<std::size_t>(i)] = 0;
    out.x2.row(i).setConstant(nan);
  }
  return out;
}

namespace {

// rows == nullptr uses every row; otherwise only rows with a nonzero flag.
// Lets x2 statistics come from observed rows only, so NaN-masked rows never
// poison the scaler.
void fit_columns(const Eigen::MatrixXd& m, const std::vector<std::uint8_t>* rows,
                 Eigen::VectorXd& shift, Eigen::VectorXd& scale) {
  const auto p = m.cols();
  shift.resize(p);
  scale.resize(p);
  std::vector<Eigen::Index> use;
  use.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (rows == nullptr || (*rows)[static_cast<std::size_t>(i)]) use.push_back(i);
  }
  if (use.empty()) {
    throw std::invalid_argument("fit_scaler: no observed rows to fit on");
  }
  const double n = static_cast<double>(use.size());
  for (Eigen::Index j = 0; j < p; ++j) {
    double sum = 0.0;
    for (Eigen::Index i : use) sum += m(i, j);
    const double mean = sum / n;
    double ss = 0.0;
    for (Eigen::Index i : use) {
      const double d = m(i, j) - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / n);
    if (sd < 1e-12) {
      shift(j) = 0.0;  // zero-variance column passes through unchanged
      scale(j) = 1.0;
    } else {
      shift(j) = mean;
      scale(j) = sd;
    }
  }
}

void apply_columns(Eigen::MatrixXd& m, const Eigen::VectorXd& shift,
                   const Eigen::VectorXd& scale) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    m.col(j) = (m.col(j).array() - shift(j)) / scale(j);
  }
}

}  // namespace

Scaler fit_scaler(const Dataset& train, bool standardize_y) {
  if (train.n() == 0) throw std::invalid_argument("fit_scaler: empty train set");
  Scaler s;
  fit_columns(train.x1, nullptr, s.x1_shift, s.x1_scale);
  fit_columns(train.x2, train.fully_observed() ? nullptr : &train.x2_observed,
              s.x2_shift, s.x2_scale);
  s.y_standardized = standardize_y;
  if (standardize_y) {
    const double mean = train.y.mean();
    const double var = (train.y.array() - mean).square().sum() / static_cast<double>(train.n());
    const double sd = std::sqrt(var);
    if (sd < 1e-12) {
      s.y_shift = 0.0;
      s.y_scale = 1.0;
    } else {
      s.y_shift = mean;
      s.y_scale = sd;
    }
  }
  return s;
}

Dataset Scaler::apply(const Dataset& ds) const {
  if (ds.p1() != x1_shift.size() || ds.p2() != x2_shift.size()) {
    throw std::invalid_argument("Scaler::apply: block width mismatch");
  }
  Dataset out = ds;
  apply_columns(out.x1, x1_shift, x1_scale);
  apply_columns(out.x2, x2_shift, x2_scale);
  if (y_standardized) {
    out.y = (out.y.array() - y_shift) / y_scale;
    if (out.ground_truth) {
      out.ground_truth->mu0 = (out.ground_truth->mu0.array() - y_shift) / y_scale;
      out.ground_truth->mu1 = (out.ground_truth->mu1.array() - y_shift) / y_scale;
    }
  }
  return out;
}

Standardized standardize(const Dataset& train, const std::vector<const Dataset*>& others,
                         bool standardize_y) {
  Standardized out;
  out.scaler = fit_scaler(train, standardize_y);
  out.train = out.scaler.apply(train);
  out.others.reserve(others.size());
  for (const Dataset* d : others) out.others.push_back(out.scaler.apply(*d));
  return out;
}

void write_dataset_csv(const Dataset& ds, const std::string& data_path,
                       const std::string& mask_path) {
  CsvWriter w(data_path);
  std::vector<std::string> header;
  for (Eigen::Index j = 0; j < ds.p1(); ++j) header.push_back("x1_" + std::to_string(j));
  for (Eigen::Index j = 0; j < ds.p2(); ++j) header.push_back("x2_" + std::to_string(j));
  header.push_back("t");
  header.push_back("y");
  if (ds.ground_truth) {
    header.push_back("mu0");
    header.push_back("mu1");
  }
  for (const auto& a : ds.attributes) header.push_back("attr_" + a.name);
  w.row(header);
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    std::vector<std::string> row;
    for (Eigen::Index j = 0; j < ds.p1(); ++j) row.push_back(format_double(ds.x1(i, j)));
    for (Eigen::Index j = 0; j < ds.p2(); ++j) row.push_back(format_double(ds.x2(i, j)));
    row.push_back(format_double(ds.t(i)));
    row.push_back(format_double(ds.y(i)));
    if (ds.ground_truth) {
      row.push_back(format_double(ds.ground_truth->mu0(i)));
      row.push_back(format_double(ds.ground_truth->mu1(i)));
    }
    for (const auto& a : ds.attributes) row.push_back(a.values[static_cast<std::size_t>(i)]);
    w.row(row);
  }
  CsvWriter mw(mask_path);
  mw.row({"x2_observed"});
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    mw.row({ds.x2_observed[static_cast<std::size_t>(i)] ? "1" : "0"});
  }
}

Dataset read_dataset_csv(const std::string& data_path, const std::string& mask_path,
                         Regime regime) {
  const auto rows = read_csv(data_path);
  if (rows.size() < 2) throw ConfigError("dataset CSV has no data rows: " + data_path);
  const auto& header = rows[0];
  Eigen::Index p1 = 0, p2 = 0;
  bool has_mu = false;
  std::vector<std::string> attr_names;
  for (const auto& h : header) {
    if (h.rfind("x1_", 0) == 0) ++p1;
    else if (h.rfind("x2_", 0) == 0) ++p2;
    else if (h == "mu0") has_mu = true;
    else if (h.rfind("attr_", 0) == 0) attr_names.push_back(h.substr(5));
  }
  const std::size_t expected = static_cast<std::size_t>(p1 + p2) + 2 +
                               (has_mu ? 2u : 0u) + attr_names.size();
  if (header.size() != expected) {
    throw ConfigError("dataset CSV header not in the expected layout: " + data_path);
  }
  const auto n = static_cast<Eigen::Index>(rows.size() - 1);
  Eigen::MatrixXd x1(n, p1), x2(n, p2);
  Eigen::VectorXd t(n), y(n);
  PotentialOutcomes po;
  if (has_mu) {
    po.mu0.resize(n);
    po.mu1.resize(n);
  }
  std::vector<Attribute> attrs;
  for (const auto& name : attr_names) attrs.push_back({name, {}});
  std::vector<std::uint8_t> observed(static_cast<std::size_t>(n), 1);

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i) + 1];
    if (r.size() != expected) {
      throw ConfigError("dataset CSV row " + std::to_string(i + 1) + " has wrong field count");
    }
    std::size_t c = 0;
    for (Eigen::Index j = 0; j < p1; ++j) x1(i, j) = parse_double(r[c++]);
    for (Eigen::Index j = 0; j < p2; ++j) x2(i, j) = parse_double(r[c++]);
    t(i) = parse_double(r[c++]);
    y(i) = parse_double(r[c++]);
    if (has_mu) {
      po.mu0(i) = parse_double(r[c++]);
      po.mu1(i) = parse_double(r[c++]);
    }
    for (auto& a : attrs) a.values.push_back(r[c++]);
  }

  if (!mask_path.empty()) {
    const auto mrows = read_csv(mask_path);
    if (mrows.size() != static_cast<std::size_t>(n) + 1 || mrows[0].size() != 1 ||
        mrows[0][0] != "x2_observed") {
      throw ConfigError("mask CSV does not match dataset: " + mask_path);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      observed[static_cast<std::size_t>(i)] = mrows[static_cast<std::size_t>(i) + 1][0] == "1";
    }
  }

  // Masked rows are NaN on disk; rebuild through validation with placeholder
  // rows, then restore the sentinel.
  Eigen::MatrixXd x2_clean = x2;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!observed[static_cast<std::size_t>(i)]) x2_clean.row(i).setZero();
  }
  Dataset ds = make_dataset(std::move(x1), std::move(x2_clean), std::move(t), std::move(y),
                            regime, has_mu ? std::optional<PotentialOutcomes>(po) : std::nullopt,
                            std::move(attrs));
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!observed[static_cast<std::size_t>(i)]) {
      ds.x2_observed[static_cast<std::size_t>(i)] = 0;
      ds.x2.row(i).setConstant(nan);
    }
  }
  return ds;
}

}  // namespace ceib
