#include "ceib/generators.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ceib/csv.hpp"
#include "ceib/errors.hpp"
#include "ceib/rng.hpp"

namespace ceib {

namespace {

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

// Upper quartile of the standard normal, Phi^{-1}(0.75).
constexpr double kNormalQ75 = 0.6744897501960817;

Eigen::MatrixXd default_loading(int rows, int dz, int phase) {
  Eigen::MatrixXd a(rows, dz);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < dz; ++j) {
      a(i, j) = (j == (i + phase) % dz) ? 1.0 : 0.2;
    }
  }
  return a;
}

}  // namespace

void LinearGaussianConfig::validate() const {
  if (n < 1) throw ConfigError("linear_gaussian: n must be positive");
  if (dz < 1) throw ConfigError("linear_gaussian: dz must be positive");
  if (p1 < 1 || p2 < 1) {
    throw ConfigError("linear_gaussian: p1 and p2 must be positive");
  }
  if (outcome_noise_sd < 0.0 || covariate_noise_sd < 0.0) {
    throw ConfigError("linear_gaussian: noise sds must be non-negative");
  }
  auto check = [&](const Eigen::MatrixXd& m, int rows, const char* name) {
    if (m.size() == 0) return;
    if (m.rows() != rows || m.cols() != dz) {
      throw ConfigError(std::string("linear_gaussian: ") + name +
                        " shape does not match (p, dz)");
    }
  };
  check(a1, p1, "a1");
  check(a2, p2, "a2");
  auto check_vec = [&](const Eigen::VectorXd& v, const char* name) {
    if (v.size() != 0 && v.size() != dz) {
      throw ConfigError(std::string("linear_gaussian: ") + name +
                        " length does not match dz");
    }
  };
  check_vec(w, "w");
  check_vec(beta0, "beta0");
  check_vec(beta1, "beta1");
}

LinearGaussianConfig LinearGaussianConfig::resolved() const {
  validate();
  LinearGaussianConfig c = *this;
  if (c.a1.size() == 0) {
    if (c.p1 == 3 && c.dz == 2) {
      c.a1.resize(3, 2);
      c.a1 << 1.0, 0.0, 0.8, 0.2, 0.6, -0.4;
    } else {
      c.a1 = default_loading(c.p1, c.dz, 0);
    }
  }
  if (c.a2.size() == 0) {
    if (c.p2 == 3 && c.dz == 2) {
      c.a2.resize(3, 2);
      c.a2 << 0.0, 1.0, 0.2, 0.8, -0.4, 0.6;
    } else {
      c.a2 = default_loading(c.p2, c.dz, 1);
    }
  }
  if (c.w.size() == 0) c.w = Eigen::VectorXd::Ones(c.dz);
  if (c.beta0.size() == 0) c.beta0 = Eigen::VectorXd::Ones(c.dz);
  if (c.beta1.size() == 0) c.beta1 = Eigen::VectorXd::Constant(c.dz, 2.0);
  return c;
}

Dataset gen_linear_gaussian(const LinearGaussianConfig& cfg_in) {
  const LinearGaussianConfig cfg = cfg_in.resolved();
  Rng rng(cfg.seed);

  Eigen::MatrixXd x1(cfg.n, cfg.p1);
  Eigen::MatrixXd x2(cfg.n, cfg.p2);
  Eigen::VectorXd t(cfg.n), y(cfg.n), mu0(cfg.n), mu1(cfg.n);
  Eigen::VectorXd score(cfg.n);  // w.z per unit, for the severity attribute
  std::vector<std::string> group(cfg.n);

  Eigen::VectorXd z(cfg.dz), e1(cfg.p1), e2(cfg.p2);
  for (int i = 0; i < cfg.n; ++i) {
    // Fixed per-unit draw order: z, eps1, eps2, treatment, outcome noise.
    for (int j = 0; j < cfg.dz; ++j) z(j) = rng.normal();
    for (int j = 0; j < cfg.p1; ++j) e1(j) = rng.normal();
    for (int j = 0; j < cfg.p2; ++j) e2(j) = rng.normal();
    x1.row(i) = (cfg.a1 * z + cfg.covariate_noise_sd * e1).transpose();
    x2.row(i) = (cfg.a2 * z + cfg.covariate_noise_sd * e2).transpose();

    score(i) = cfg.w.dot(z);
    const double p = cfg.regime == Regime::randomized
                         ? 0.5
                         : sigmoid(score(i) + cfg.b);
    t(i) = rng.bernoulli(p) ? 1.0 : 0.0;

    mu0(i) = cfg.beta0.dot(z) + cfg.intercept0;
    mu1(i) = cfg.beta1.dot(z) + cfg.intercept1;
    const double base = t(i) > 0.5 ? mu1(i) : mu0(i);
    y(i) = base + cfg.outcome_noise_sd * rng.normal();

    group[i] = z(0) > kNormalQ75 ? "minority" : "majority";
  }

  Dataset ds = make_dataset(x1, x2, t, y, cfg.regime);
  ds.ground_truth = PotentialOutcomes{mu0, mu1};

  if (cfg.severity_attribute) {
    // Population quartiles of w.z ~ N(0, |w|^2).
    const double s = cfg.w.norm();
    Attribute attr;
    attr.name = "severity";
    attr.values.resize(cfg.n);
    for (int i = 0; i < cfg.n; ++i) {
      int bucket = 1;
      if (score(i) > -kNormalQ75 * s) bucket = 2;
      if (score(i) > 0.0) bucket = 3;
      if (score(i) > kNormalQ75 * s) bucket = 4;
      attr.values[i] = std::to_string(bucket);
    }
    ds.attributes.push_back(std::move(attr));
  }
  if (cfg.group_attribute) {
    ds.attributes.push_back(Attribute{"group", std::move(group)});
  }
  return ds;
}

double linear_gaussian_true_ace(const LinearGaussianConfig& cfg) {
  cfg.validate();
  return cfg.intercept1 - cfg.intercept0;
}

void TwinsSimConfig::validate() const {
  if (n < 1) throw ConfigError("twins_sim: n must be positive");
  if (p_extra < 0) throw ConfigError("twins_sim: p_extra must be non-negative");
  if (replicates < 1) throw ConfigError("twins_sim: replicates must be positive");
  if (flip_prob < 0.0 || flip_prob >= 1.0) {
    throw ConfigError("twins_sim: flip_prob must lie in [0, 1)");
  }
  std::set<int> seen;
  for (int c : x2_cols) {
    if (c < 0 || c >= n_cols()) {
      throw ConfigError("twins_sim: x2_cols index out of range");
    }
    if (!seen.insert(c).second) {
      throw ConfigError("twins_sim: x2_cols indices must be distinct");
    }
  }
  if (!x2_cols.empty() && static_cast<int>(x2_cols.size()) >= n_cols()) {
    throw ConfigError("twins_sim: x2_cols must leave at least one x1 column");
  }
  if (x2_cols.empty() && p_extra < 3) {
    throw ConfigError(
        "twins_sim: default x2_cols needs p_extra >= 3; set x2_cols");
  }
}

std::vector<int> TwinsSimConfig::resolved_x2_cols() const {
  validate();
  std::vector<int> cols = x2_cols;
  if (cols.empty()) {
    cols = {n_proxy_cols(), n_proxy_cols() + 1, n_proxy_cols() + 2};
  }
  std::sort(cols.begin(), cols.end());
  return cols;
}

Dataset gen_twins_style(const TwinsSimConfig& cfg) {
  cfg.validate();
  const std::vector<int> x2_cols = cfg.resolved_x2_cols();
  Rng rng(cfg.seed);

  // Treatment coefficients, drawn once per dataset.
  Eigen::VectorXd w_o(cfg.p_extra);
  for (int j = 0; j < cfg.p_extra; ++j) w_o(j) = std::sqrt(0.1) * rng.normal();
  const double w_h = 5.0 + std::sqrt(0.1) * rng.normal();

  const int nc = cfg.n_cols();
  Eigen::MatrixXd cov(cfg.n, nc);
  Eigen::VectorXd t(cfg.n), y(cfg.n), mu0(cfg.n), mu1(cfg.n);
  Attribute gestation{"gestation", std::vector<std::string>(cfg.n)};

  Eigen::VectorXd x_extra(cfg.p_extra);
  for (int i = 0; i < cfg.n; ++i) {
    // Fixed per-unit draw order: z, x_extra, proxy flips, t, y0, y1.
    const int z = static_cast<int>(rng.below(10));
    gestation.values[i] = std::to_string(z);
    for (int j = 0; j < cfg.p_extra; ++j) x_extra(j) = rng.normal();

    for (int r = 0; r < cfg.replicates; ++r) {
      for (int k = 0; k < 10; ++k) {
        double bit = (k == z) ? 1.0 : 0.0;
        if (rng.bernoulli(cfg.flip_prob)) bit = 1.0 - bit;
        cov(i, 10 * r + k) = bit;
      }
    }
    cov.row(i).tail(cfg.p_extra) = x_extra.transpose();

    const double zs = z / 10.0 - 0.1;
    t(i) = rng.bernoulli(sigmoid(w_o.dot(x_extra) + w_h * zs)) ? 1.0 : 0.0;

    mu0(i) = sigmoid(cfg.a * z / 10.0 + cfg.c);
    mu1(i) = sigmoid(cfg.a * z / 10.0 + cfg.b + cfg.c);
    const double y0 = rng.bernoulli(mu0(i)) ? 1.0 : 0.0;
    const double y1 = rng.bernoulli(mu1(i)) ? 1.0 : 0.0;
    y(i) = t(i) > 0.5 ? y1 : y0;
  }

  // Split assembled columns into the withheld block (x2) and the rest (x1),
  // both keeping original column order.
  std::vector<char> in_x2(nc, 0);
  for (int c : x2_cols) in_x2[c] = 1;
  Eigen::MatrixXd x1(cfg.n, nc - static_cast<int>(x2_cols.size()));
  Eigen::MatrixXd x2(cfg.n, static_cast<int>(x2_cols.size()));
  int c1 = 0, c2 = 0;
  for (int c = 0; c < nc; ++c) {
    if (in_x2[c]) {
      x2.col(c2++) = cov.col(c);
    } else {
      x1.col(c1++) = cov.col(c);
    }
  }

  Dataset ds = make_dataset(x1, x2, t, y, Regime::observational);
  ds.ground_truth = PotentialOutcomes{mu0, mu1};
  ds.attributes.push_back(std::move(gestation));
  return ds;
}

double twins_true_ace(const TwinsSimConfig& cfg) {
  cfg.validate();
  double acc = 0.0;
  for (int z = 0; z < 10; ++z) {
    acc += sigmoid(cfg.a * z / 10.0 + cfg.b + cfg.c) -
           sigmoid(cfg.a * z / 10.0 + cfg.c);
  }
  return acc / 10.0;
}

Dataset load_ihdp(const std::string& path, const std::vector<int>& x2_cols) {
  constexpr int kCovariates = 25;
  constexpr int kColumns = 5 + kCovariates;
  if (x2_cols.size() != 3) {
    throw ConfigError("load_ihdp: x2_cols must name exactly 3 covariates");
  }
  std::set<int> seen;
  for (int c : x2_cols) {
    if (c < 0 || c >= kCovariates) {
      throw ConfigError("load_ihdp: x2_cols index out of range");
    }
    if (!seen.insert(c).second) {
      throw ConfigError("load_ihdp: x2_cols indices must be distinct");
    }
  }

  std::vector<std::vector<std::string>> rows = read_csv(path);
  if (rows.empty()) throw ConfigError("load_ihdp: empty file: " + path);

  // Header row is optional; detect it by a non-numeric first field.
  std::size_t start = 0;
  try {
    parse_double(rows[0].at(0));
  } catch (const std::exception&) {
    start = 1;
  }
  const std::size_t n = rows.size() - start;
  if (n == 0) throw ConfigError("load_ihdp: no data rows: " + path);

  Eigen::MatrixXd cov(n, kCovariates);
  Eigen::VectorXd t(n), y(n), mu0(n), mu1(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = rows[start + i];
    if (row.size() != static_cast<std::size_t>(kColumns)) {
      throw ConfigError("load_ihdp: expected " + std::to_string(kColumns) +
                        " columns, got " + std::to_string(row.size()) +
                        " in row " + std::to_string(start + i + 1));
    }
    std::vector<double> vals(kColumns);
    for (int j = 0; j < kColumns; ++j) {
      try {
        vals[j] = parse_double(row[j]);
      } catch (const std::exception&) {
        throw ConfigError("load_ihdp: non-numeric field in row " +
                          std::to_string(start + i + 1));
      }
    }
    if (vals[0] != 0.0 && vals[0] != 1.0) {
      throw ConfigError("load_ihdp: treatment column must be 0/1");
    }
    t(i) = vals[0];
    y(i) = vals[1];
    // vals[2] is the counterfactual outcome; the noiseless mu columns are the
    // ground truth used for evaluation.
    mu0(i) = vals[3];
    mu1(i) = vals[4];
    for (int j = 0; j < kCovariates; ++j) cov(i, j) = vals[5 + j];
  }

  std::vector<char> in_x2(kCovariates, 0);
  for (int c : x2_cols) in_x2[c] = 1;
  Eigen::MatrixXd x1(n, kCovariates - 3);
  Eigen::MatrixXd x2(n, 3);
  int c1 = 0, c2 = 0;
  for (int c = 0; c < kCovariates; ++c) {
    if (in_x2[c]) {
      x2.col(c2++) = cov.col(c);
    } else {
      x1.col(c1++) = cov.col(c);
    }
  }

  Dataset ds = make_dataset(x1, x2, t, y, Regime::observational);
  ds.ground_truth = PotentialOutcomes{mu0, mu1};
  return ds;
}

double true_ace(const Dataset& ds) {
  if (!ds.ground_truth) {
    throw ConfigError("true_ace: dataset carries no ground truth");
  }
  return (ds.ground_truth->mu1 - ds.ground_truth->mu0).mean();
}

}  // namespace ceib
