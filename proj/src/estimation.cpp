#include "ceib/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "ceib/csv.hpp"
#include "ceib/errors.hpp"

namespace ceib {

namespace {

Eigen::Index argmax_row(const Eigen::MatrixXd& m, Eigen::Index row) {
  Eigen::Index best = 0;
  m.row(row).maxCoeff(&best);
  return best;
}

// Largest count, then lowest id, among nonempty joint clusters whose first
// component is c1. Returns -1 if none.
int match_cluster(const ClusterTable& clusters, int c1) {
  int best = -1, best_count = 0;
  for (int c2 = 0; c2 < clusters.k2; ++c2) {
    const int id = c1 * clusters.k2 + c2;
    if (clusters.counts[id] > best_count) {
      best = id;
      best_count = clusters.counts[id];
    }
  }
  return best;
}

int largest_cluster(const ClusterTable& clusters) {
  int best = -1, best_count = 0;
  for (int id = 0; id < clusters.n_clusters(); ++id) {
    if (clusters.counts[id] > best_count) {
      best = id;
      best_count = clusters.counts[id];
    }
  }
  return best;
}

// Shared by ace and ace_partial: masked rows take the cluster-imputed V2 path
// and require a table; with no masked rows the table is never consulted.
double mean_sce(const CEIBModel& model, const ClusterTable* clusters,
                const Dataset& ds) {
  if (ds.n() == 0) throw std::invalid_argument("mean_sce: empty dataset");
  const Eigen::Index n = ds.n();
  const MixturePosterior q1 = model.encode1(ds.x1);
  const Eigen::MatrixXd r1 = q1.responsibilities();
  const Eigen::MatrixXd v1 = q1.posterior_mean();

  const int d2 = model.config().d2;
  Eigen::MatrixXd v2(n, d2);

  std::vector<Eigen::Index> observed;
  observed.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (ds.x2_observed[static_cast<std::size_t>(i)]) observed.push_back(i);
  }

  if (!observed.empty()) {
    Eigen::MatrixXd x2_obs(static_cast<Eigen::Index>(observed.size()),
                           ds.x2.cols());
    for (std::size_t j = 0; j < observed.size(); ++j) {
      x2_obs.row(static_cast<Eigen::Index>(j)) = ds.x2.row(observed[j]);
    }
    const Eigen::MatrixXd v2_obs = model.encode2(x2_obs).posterior_mean();
    for (std::size_t j = 0; j < observed.size(); ++j) {
      v2.row(observed[j]) = v2_obs.row(static_cast<Eigen::Index>(j));
    }
  }

  if (observed.size() != static_cast<std::size_t>(n)) {
    if (clusters == nullptr) {
      throw ConfigError("ace: dataset has masked rows; use ace_partial");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (ds.x2_observed[static_cast<std::size_t>(i)]) continue;
      const int c1 = static_cast<int>(argmax_row(r1, i));
      int id = match_cluster(*clusters, c1);
      if (id < 0) id = largest_cluster(*clusters);
      if (id < 0) throw ConfigError("ace_partial: cluster table is empty");
      v2.row(i) = clusters->v2_centroids.row(id);
    }
  }

  Eigen::MatrixXd z(n, v1.cols() + d2);
  z << v1, v2;
  return sce(model, z).mean();
}

std::string cluster_label(int id) { return std::to_string(id); }

}  // namespace

LatentCodes encode_deterministic(const CEIBModel& model,
                                 const Eigen::MatrixXd& x1,
                                 const Eigen::MatrixXd& x2) {
  if (x1.rows() != x2.rows()) {
    throw std::invalid_argument("encode_deterministic: row count mismatch");
  }
  if (x2.hasNaN()) {
    throw std::invalid_argument(
        "encode_deterministic: x2 contains NaN; use the partial path");
  }
  const MixturePosterior q1 = model.encode1(x1);
  const MixturePosterior q2 = model.encode2(x2);
  LatentCodes codes;
  codes.v1 = q1.posterior_mean();
  codes.v2 = q2.posterior_mean();
  codes.r1 = q1.responsibilities();
  codes.r2 = q2.responsibilities();
  return codes;
}

Eigen::VectorXd sce(const CEIBModel& model, const Eigen::MatrixXd& z) {
  const auto [mu0, mu1] = model.predict_both_arms(z);
  return mu1 - mu0;
}

ClusterTable fit_equivalence_classes(const CEIBModel& model,
                                     const Dataset& train) {
  if (!train.fully_observed()) {
    throw ConfigError("fit_equivalence_classes: training data must be fully observed");
  }
  const LatentCodes codes = encode_deterministic(model, train.x1, train.x2);
  const Eigen::Index n = train.n();

  ClusterTable table;
  table.k1 = model.config().k1;
  table.k2 = model.config().k2;
  table.d1 = model.config().d1;
  table.d2 = model.config().d2;
  table.n_train = static_cast<int>(n);
  table.counts.assign(static_cast<std::size_t>(table.n_clusters()), 0);
  table.v1_centroids = Eigen::MatrixXd::Zero(table.n_clusters(), table.d1);
  table.v2_centroids = Eigen::MatrixXd::Zero(table.n_clusters(), table.d2);
  table.assignment.resize(static_cast<std::size_t>(n));

  for (Eigen::Index i = 0; i < n; ++i) {
    const int c1 = static_cast<int>(argmax_row(codes.r1, i));
    const int c2 = static_cast<int>(argmax_row(codes.r2, i));
    const int id = c1 * table.k2 + c2;
    table.assignment[static_cast<std::size_t>(i)] = id;
    table.counts[static_cast<std::size_t>(id)] += 1;
    table.v1_centroids.row(id) += codes.v1.row(i);
    table.v2_centroids.row(id) += codes.v2.row(i);
  }
  for (int id = 0; id < table.n_clusters(); ++id) {
    const int c = table.counts[static_cast<std::size_t>(id)];
    if (c > 0) {
      table.v1_centroids.row(id) /= c;
      table.v2_centroids.row(id) /= c;
    } else {
      table.v1_centroids.row(id).setConstant(
          std::numeric_limits<double>::quiet_NaN());
      table.v2_centroids.row(id).setConstant(
          std::numeric_limits<double>::quiet_NaN());
    }
  }

  for (const Attribute& attr : train.attributes) {
    ClusterTable::Composition comp;
    comp.attribute = attr.name;
    std::map<std::string, int> index;
    for (const std::string& v : attr.values) index.emplace(v, 0);
    int next = 0;
    for (auto& [value, idx] : index) {
      idx = next++;
      comp.categories.push_back(value);
    }
    const int nc = static_cast<int>(comp.categories.size());
    comp.proportions = Eigen::MatrixXd::Zero(table.n_clusters(), nc);
    comp.marginal = Eigen::VectorXd::Zero(nc);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int id = table.assignment[static_cast<std::size_t>(i)];
      const int cat = index.at(attr.values[static_cast<std::size_t>(i)]);
      comp.proportions(id, cat) += 1.0;
      comp.marginal(cat) += 1.0;
    }
    for (int id = 0; id < table.n_clusters(); ++id) {
      const int c = table.counts[static_cast<std::size_t>(id)];
      if (c > 0) comp.proportions.row(id) /= c;
    }
    comp.marginal /= static_cast<double>(n);
    table.compositions.push_back(std::move(comp));
  }
  return table;
}

PartialAssignment assign_partial(const CEIBModel& model,
                                 const ClusterTable& clusters,
                                 const Eigen::RowVectorXd& x1_row) {
  const MixturePosterior q1 = model.encode1(x1_row);
  const Eigen::MatrixXd r1 = q1.responsibilities();
  const Eigen::MatrixXd v1 = q1.posterior_mean();
  const int c1 = static_cast<int>(argmax_row(r1, 0));

  PartialAssignment out;
  out.cluster = match_cluster(clusters, c1);
  if (out.cluster < 0) {
    out.cluster = largest_cluster(clusters);
    out.fallback = true;
    if (out.cluster < 0) {
      throw ConfigError("assign_partial: cluster table is empty");
    }
  }
  out.z.resize(clusters.d1 + clusters.d2);
  out.z.head(clusters.d1) = v1.row(0).transpose();
  out.z.tail(clusters.d2) = clusters.v2_centroids.row(out.cluster).transpose();
  return out;
}

double ace(const CEIBModel& model, const Dataset& ds) {
  return model.y_scale() * mean_sce(model, nullptr, ds);
}

double ace_partial(const CEIBModel& model, const ClusterTable& clusters,
                   const Dataset& ds) {
  return model.y_scale() * mean_sce(model, &clusters, ds);
}

CompositionReport cluster_composition_report(const ClusterTable& clusters,
                                             const std::string& attribute) {
  const ClusterTable::Composition* found = nullptr;
  for (const auto& comp : clusters.compositions) {
    if (comp.attribute == attribute) {
      found = &comp;
      break;
    }
  }
  if (found == nullptr) {
    throw ConfigError("cluster_composition_report: unknown attribute '" +
                      attribute + "'");
  }
  CompositionReport report;
  report.attribute = attribute;
  report.categories = found->categories;
  report.proportions.resize(clusters.n_clusters() + 1,
                            found->marginal.size());
  for (int id = 0; id < clusters.n_clusters(); ++id) {
    report.row_labels.push_back(cluster_label(id));
    report.proportions.row(id) = found->proportions.row(id);
  }
  report.row_labels.push_back("marginal");
  report.proportions.row(clusters.n_clusters()) = found->marginal.transpose();
  return report;
}

void write_composition_csv(const CompositionReport& report,
                           const std::string& path) {
  CsvWriter w(path);
  std::vector<std::string> header = {"cluster"};
  for (const std::string& c : report.categories) header.push_back(c);
  w.row(header);
  for (std::size_t r = 0; r < report.row_labels.size(); ++r) {
    std::vector<std::string> row = {report.row_labels[r]};
    for (Eigen::Index j = 0; j < report.proportions.cols(); ++j) {
      row.push_back(format_double(
          report.proportions(static_cast<Eigen::Index>(r), j)));
    }
    w.row(row);
  }
}

void write_cluster_table_csv(const ClusterTable& clusters,
                             const std::string& path) {
  CsvWriter w(path);
  std::vector<std::string> header = {"cluster", "c1", "c2", "count"};
  for (int j = 0; j < clusters.d1; ++j) {
    header.push_back("v1_" + std::to_string(j));
  }
  for (int j = 0; j < clusters.d2; ++j) {
    header.push_back("v2_" + std::to_string(j));
  }
  w.row(header);
  for (int id = 0; id < clusters.n_clusters(); ++id) {
    std::vector<std::string> row = {
        std::to_string(id), std::to_string(id / clusters.k2),
        std::to_string(id % clusters.k2),
        std::to_string(clusters.counts[static_cast<std::size_t>(id)])};
    for (int j = 0; j < clusters.d1; ++j) {
      row.push_back(format_double(clusters.v1_centroids(id, j)));
    }
    for (int j = 0; j < clusters.d2; ++j) {
      row.push_back(format_double(clusters.v2_centroids(id, j)));
    }
    w.row(row);
  }
}

ClusterTable read_cluster_table_csv(const std::string& path) {
  const auto rows = read_csv(path);
  if (rows.size() < 2) {
    throw ConfigError("cluster table csv: no data rows in " + path);
  }
  const auto& header = rows[0];
  int d1 = 0, d2 = 0;
  for (const std::string& h : header) {
    if (h.rfind("v1_", 0) == 0) ++d1;
    if (h.rfind("v2_", 0) == 0) ++d2;
  }
  if (header.size() != static_cast<std::size_t>(4 + d1 + d2)) {
    throw ConfigError("cluster table csv: unexpected header in " + path);
  }
  ClusterTable table;
  table.d1 = d1;
  table.d2 = d2;
  int max_c1 = -1, max_c2 = -1;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) {
      throw ConfigError("cluster table csv: ragged row in " + path);
    }
    max_c1 = std::max(max_c1, static_cast<int>(parse_double(row[1])));
    max_c2 = std::max(max_c2, static_cast<int>(parse_double(row[2])));
  }
  table.k1 = max_c1 + 1;
  table.k2 = max_c2 + 1;
  if (static_cast<std::size_t>(table.n_clusters()) != rows.size() - 1) {
    throw ConfigError("cluster table csv: cluster rows do not cover k1*k2");
  }
  table.counts.assign(static_cast<std::size_t>(table.n_clusters()), 0);
  table.v1_centroids.resize(table.n_clusters(), d1);
  table.v2_centroids.resize(table.n_clusters(), d2);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const int id = static_cast<int>(parse_double(row[0]));
    if (id < 0 || id >= table.n_clusters()) {
      throw ConfigError("cluster table csv: cluster id out of range");
    }
    table.counts[static_cast<std::size_t>(id)] =
        static_cast<int>(parse_double(row[3]));
    for (int j = 0; j < d1; ++j) {
      table.v1_centroids(id, j) = parse_double(row[static_cast<std::size_t>(4 + j)]);
    }
    for (int j = 0; j < d2; ++j) {
      table.v2_centroids(id, j) =
          parse_double(row[static_cast<std::size_t>(4 + d1 + j)]);
    }
  }
  for (int c : table.counts) table.n_train += c;
  return table;
}

}  // namespace ceib
