#include "ceib/baselines.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ceib/errors.hpp"
#include "ceib/nn.hpp"

namespace ceib {

namespace {

void require_fully_observed(const Dataset& ds, const char* who) {
  if (!ds.fully_observed()) {
    throw ConfigError(std::string(who) +
                      ": masked rows; impute before calling baselines");
  }
}

Eigen::MatrixXd covariates(const Dataset& ds) {
  Eigen::MatrixXd x(ds.n(), ds.p1() + ds.p2());
  x << ds.x1, ds.x2;
  return x;
}

struct LstsqFit {
  Eigen::VectorXd coef;
  bool rank_deficient = false;
};

LstsqFit min_norm_lstsq(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
  LstsqFit fit;
  fit.coef = cod.solve(b);
  fit.rank_deficient = cod.rank() < a.cols();
  return fit;
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out << x, Eigen::VectorXd::Ones(x.rows());
  return out;
}

}  // namespace

BaselineEstimate ols1(const Dataset& train, const Dataset& eval) {
  require_fully_observed(train, "ols1");
  require_fully_observed(eval, "ols1");
  const Eigen::Index p = train.p1() + train.p2();
  if (train.n() <= p + 2) {
    throw ConfigError("ols1: need n_train > p + 2");
  }
  Eigen::MatrixXd design(train.n(), p + 2);
  design << covariates(train), train.t, Eigen::VectorXd::Ones(train.n());
  const LstsqFit fit = min_norm_lstsq(design, train.y);
  const Eigen::VectorXd resid = train.y - design * fit.coef;

  BaselineEstimate est;
  est.method = "ols1";
  est.ace = fit.coef(p);  // treatment column
  est.diagnostic = resid.squaredNorm() / static_cast<double>(train.n());
  est.flagged = fit.rank_deficient;
  return est;
}

BaselineEstimate ols2(const Dataset& train, const Dataset& eval) {
  require_fully_observed(train, "ols2");
  require_fully_observed(eval, "ols2");
  if (train.n_treated() == 0 || train.n_treated() == train.n()) {
    throw ConfigError("ols2: both arms must be nonempty");
  }
  const Eigen::MatrixXd x = with_intercept(covariates(train));
  std::vector<int> arm1, arm0;
  for (Eigen::Index i = 0; i < train.n(); ++i) {
    (train.t(i) > 0.5 ? arm1 : arm0).push_back(static_cast<int>(i));
  }
  auto arm_fit = [&](const std::vector<int>& rows) {
    Eigen::MatrixXd xa(static_cast<Eigen::Index>(rows.size()), x.cols());
    Eigen::VectorXd ya(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t j = 0; j < rows.size(); ++j) {
      xa.row(static_cast<Eigen::Index>(j)) = x.row(rows[j]);
      ya(static_cast<Eigen::Index>(j)) = train.y(rows[j]);
    }
    const LstsqFit fit = min_norm_lstsq(xa, ya);
    const double ss = (xa * fit.coef - ya).squaredNorm();
    return std::make_pair(fit, ss);
  };
  const auto [fit1, ss1] = arm_fit(arm1);
  const auto [fit0, ss0] = arm_fit(arm0);

  const Eigen::MatrixXd xe = with_intercept(covariates(eval));
  BaselineEstimate est;
  est.method = "ols2";
  est.ace = (xe * (fit1.coef - fit0.coef)).mean();
  est.diagnostic = (ss1 + ss0) / static_cast<double>(train.n());
  est.flagged = fit1.rank_deficient || fit0.rank_deficient;
  return est;
}

BaselineEstimate knn_ace(const Dataset& train, const Dataset& eval,
                         int k_neighbors) {
  require_fully_observed(train, "knn_ace");
  require_fully_observed(eval, "knn_ace");
  if (k_neighbors < 1) throw ConfigError("knn_ace: k_neighbors must be >= 1");
  const Eigen::Index n1 = train.n_treated();
  const Eigen::Index n0 = train.n() - n1;
  if (n1 < k_neighbors || n0 < k_neighbors) {
    throw ConfigError("knn_ace: an arm is smaller than k_neighbors");
  }
  const Eigen::MatrixXd xt = covariates(train);
  const Eigen::MatrixXd xe = covariates(eval);

  std::vector<int> arm[2];
  for (Eigen::Index i = 0; i < train.n(); ++i) {
    arm[train.t(i) > 0.5 ? 1 : 0].push_back(static_cast<int>(i));
  }

  // Mean outcome of the k nearest members of `rows` to eval row e; ties by
  // distance then training index (rows is in index order already).
  auto knn_mean = [&](Eigen::Index e, const std::vector<int>& rows) {
    std::vector<std::pair<double, int>> d;
    d.reserve(rows.size());
    for (int r : rows) {
      d.emplace_back((xt.row(r) - xe.row(e)).squaredNorm(), r);
    }
    std::partial_sort(d.begin(), d.begin() + k_neighbors, d.end());
    double acc = 0.0;
    for (int j = 0; j < k_neighbors; ++j) acc += train.y(d[static_cast<std::size_t>(j)].second);
    return acc / k_neighbors;
  };
  // Exact covariate+treatment match in train, lowest index; -1 if none.
  auto find_in_train = [&](Eigen::Index e, int t_arm) {
    for (int r : arm[t_arm]) {
      if (xt.row(r) == xe.row(e)) return r;
    }
    return -1;
  };

  double acc = 0.0;
  for (Eigen::Index e = 0; e < eval.n(); ++e) {
    const int own_arm = eval.t(e) > 0.5 ? 1 : 0;
    const int match = find_in_train(e, own_arm);
    const double factual =
        match >= 0 ? train.y(match) : knn_mean(e, arm[own_arm]);
    const double counterfactual = knn_mean(e, arm[1 - own_arm]);
    const double y1 = own_arm == 1 ? factual : counterfactual;
    const double y0 = own_arm == 1 ? counterfactual : factual;
    acc += y1 - y0;
  }

  BaselineEstimate est;
  est.method = "knn";
  est.ace = acc / static_cast<double>(eval.n());
  est.diagnostic = std::numeric_limits<double>::quiet_NaN();
  return est;
}

BaselineEstimate logistic_ace(const Dataset& train, const Dataset& eval) {
  require_fully_observed(train, "logistic_ace");
  require_fully_observed(eval, "logistic_ace");
  for (Eigen::Index i = 0; i < train.n(); ++i) {
    if (train.y(i) != 0.0 && train.y(i) != 1.0) {
      throw ConfigError("logistic_ace: outcome must be binary");
    }
  }
  const double ridge = 1e-4;
  Eigen::MatrixXd design(train.n(), train.p1() + train.p2() + 2);
  design << covariates(train), train.t, Eigen::VectorXd::Ones(train.n());

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(design.cols());
  for (int iter = 0; iter < 200; ++iter) {
    const Eigen::ArrayXd p = sigmoid((design * beta).array());
    const Eigen::VectorXd grad =
        design.transpose() * (train.y.array() - p).matrix() - ridge * beta;
    const Eigen::ArrayXd w = p * (1.0 - p);
    Eigen::MatrixXd hess =
        design.transpose() * (design.array().colwise() * w).matrix();
    hess.diagonal().array() += ridge;
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    beta += step;
    if (step.norm() < 1e-12) break;
  }

  Eigen::MatrixXd xe(eval.n(), design.cols());
  xe << covariates(eval), Eigen::VectorXd::Ones(eval.n()),
      Eigen::VectorXd::Ones(eval.n());
  Eigen::VectorXd f1 = xe * beta;
  xe.col(xe.cols() - 2).setZero();
  Eigen::VectorXd f0 = xe * beta;

  const Eigen::ArrayXd fitted = sigmoid((design * beta).array());
  const double accuracy =
      ((fitted > 0.5).cast<double>() - train.y.array()).abs().mean();

  BaselineEstimate est;
  est.method = "lr";
  est.ace = (sigmoid(f1.array()) - sigmoid(f0.array())).mean();
  est.diagnostic = 1.0 - accuracy;
  est.flagged = beta.cwiseAbs().maxCoeff() > 15.0;
  return est;
}

Dataset impute_x2_train_mean(const Dataset& train, const Dataset& ds) {
  if (!train.fully_observed()) {
    throw ConfigError("impute_x2_train_mean: training data must be fully observed");
  }
  if (train.p2() != ds.p2()) {
    throw std::invalid_argument("impute_x2_train_mean: x2 width mismatch");
  }
  const Eigen::RowVectorXd means = train.x2.colwise().mean();
  Dataset out = ds;
  for (Eigen::Index i = 0; i < out.n(); ++i) {
    if (!out.x2_observed[static_cast<std::size_t>(i)]) {
      out.x2.row(i) = means;
      out.x2_observed[static_cast<std::size_t>(i)] = 1;
    }
  }
  return out;
}

}  // namespace ceib
