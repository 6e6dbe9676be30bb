#pragma once

// Metric pruning: factor analysis over the metric correlation matrix, then
// clustering of the metrics' loading rows and one representative per cluster.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "knobforge/detail/format.hpp"
#include "knobforge/error.hpp"
#include "knobforge/model_selection.hpp"

namespace knobforge {

struct FactorModel {
  std::vector<std::string> metric_names;
  Eigen::MatrixXd loadings;      // metrics x n_retained
  Eigen::VectorXd eigenvalues;   // all factors, descending
  Eigen::MatrixXd eigenvectors;  // full orthonormal basis, columns match eigenvalues
  int n_retained = 0;
  double retention_threshold = 1.0;
};

/// Correlation matrix of the rows of `x` (metrics x observations), using
/// population moments. A row with zero variance makes it undefined.
inline Eigen::MatrixXd metric_correlation(const Eigen::MatrixXd& x) {
  const auto n = static_cast<double>(x.cols());
  Eigen::MatrixXd z = x.colwise() - x.rowwise().mean();
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double sd = std::sqrt(z.row(i).squaredNorm() / n);
    if (!(sd > 0.0) || !std::isfinite(sd))
      throw DegenerateInput("metric row " + std::to_string(i) + " has zero variance; correlation undefined");
    z.row(i) /= sd;
  }
  Eigen::MatrixXd c = z * z.transpose() / n;
  c = 0.5 * (c + c.transpose());
  c.diagonal().setOnes();
  return c;
}

/// Principal-axis factor extraction. Factors whose eigenvalue exceeds
/// `threshold` are retained; loadings are eigenvectors scaled by sqrt(eigenvalue)
/// so row i of the loadings is metric i's coordinate vector.
inline FactorModel factor_analysis(const Eigen::MatrixXd& x, std::vector<std::string> metric_names, double threshold = 1.0) {
  if (x.rows() < 2 || x.cols() < 2) throw DegenerateInput("factor analysis needs >= 2 metrics and >= 2 observations");
  if (static_cast<Eigen::Index>(metric_names.size()) != x.rows()) throw ShapeError("factor analysis: metric name count mismatch");
  if (!x.allFinite()) throw DegenerateInput("factor analysis: non-finite input");

  const Eigen::MatrixXd corr = metric_correlation(x);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(corr);
  if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition of the correlation matrix failed");

  const auto m = corr.rows();
  FactorModel fm;
  fm.metric_names = std::move(metric_names);
  fm.retention_threshold = threshold;
  fm.eigenvalues.resize(m);
  fm.eigenvectors.resize(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    // Solver returns ascending order.
    fm.eigenvalues(j) = solver.eigenvalues()(m - 1 - j);
    Eigen::VectorXd v = solver.eigenvectors().col(m - 1 - j);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    fm.eigenvectors.col(j) = v;
  }
  // Relative slack keeps an exact-identity spectrum from being retained on rounding noise.
  const double cut = threshold * (1.0 + 1e-10);
  fm.n_retained = static_cast<int>((fm.eigenvalues.array() > cut).count());
  fm.loadings.resize(m, fm.n_retained);
  for (int j = 0; j < fm.n_retained; ++j) fm.loadings.col(j) = fm.eigenvectors.col(j) * std::sqrt(fm.eigenvalues(j));
  return fm;
}

struct SelectedMetric {
  std::string name;
  int cluster = 0;
  double distance = 0.0;
};

struct PrunedMetricSet {
  std::vector<SelectedMetric> selected;  // ordered by cluster id
  int k = 0;
  ModelSelection selection;

  [[nodiscard]] std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& s : selected) out.push_back(s.name);
    return out;
  }
};

/// Clusters the loading rows, choosing k over `k_range` (the upper end is
/// clamped to metric count - 1), and keeps the metric nearest each cluster
/// center. Clusters are numbered by their lowest-index member.
inline PrunedMetricSet prune_metrics(const FactorModel& model, const ClusterSpec& clusterer, std::vector<int> k_range,
                                     std::uint64_t seed) {
  if (model.n_retained < 1) throw DegenerateInput("no factor has eigenvalue above the retention threshold");
  const auto& pts = model.loadings;
  const int n = static_cast<int>(pts.rows());
  if (k_range.size() > 1) {
    std::erase_if(k_range, [n](int k) { return k > n - 1; });
    if (k_range.empty()) throw InvalidK("prune_metrics: no k in range fits " + std::to_string(n) + " metrics");
  }
  auto sel = select_k(pts, k_range, clusterer, seed);
  const auto& labels = labels_of(sel.chosen_fit);
  const auto& centers = centers_of(sel.chosen_fit);
  const int k = sel.chosen_k;

  std::vector<int> relabel(static_cast<std::size_t>(k), -1);
  int next = 0;
  for (int i = 0; i < n; ++i) {
    auto& r = relabel[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    if (r < 0) r = next++;
  }
  if (next != k) throw ClusterDegeneracy("prune_metrics: chosen clustering has an empty cluster");

  PrunedMetricSet out;
  out.k = k;
  out.selected.resize(static_cast<std::size_t>(k));
  std::vector<bool> have(static_cast<std::size_t>(k), false);
  for (int i = 0; i < n; ++i) {
    const int raw = labels[static_cast<std::size_t>(i)];
    const int c = relabel[static_cast<std::size_t>(raw)];
    const double d = (pts.row(i) - centers.row(raw)).norm();
    auto& slot = out.selected[static_cast<std::size_t>(c)];
    if (!have[static_cast<std::size_t>(c)] || d < slot.distance) {
      slot = {model.metric_names[static_cast<std::size_t>(i)], c, d};
      have[static_cast<std::size_t>(c)] = true;
    }
  }
  out.selection = std::move(sel);
  return out;
}

// ---------------------------------------------------------------------------
// Emission

inline nlohmann::json to_json(const PrunedMetricSet& p) {
  nlohmann::json metrics = nlohmann::json::array();
  for (const auto& s : p.selected) metrics.push_back({{"name", s.name}, {"cluster", s.cluster}, {"distance", s.distance}});
  return {{"k", p.k}, {"metrics", metrics}};
}

inline PrunedMetricSet pruned_from_json(const nlohmann::json& j) {
  PrunedMetricSet p;
  p.k = j.at("k").get<int>();
  for (const auto& m : j.at("metrics"))
    p.selected.push_back({m.at("name").get<std::string>(), m.at("cluster").get<int>(), m.at("distance").get<double>()});
  if (static_cast<int>(p.selected.size()) != p.k) throw SchemaError("pruned metric set: k disagrees with metric count");
  return p;
}

inline void write_eigenvalues_csv(std::ostream& out, const FactorModel& fm) {
  out << "factor_index,eigenvalue\n";
  for (Eigen::Index j = 0; j < fm.eigenvalues.size(); ++j) out << j << ',' << detail::format_double(fm.eigenvalues(j)) << '\n';
}

inline void write_selection_csv(std::ostream& out, const ModelSelection& sel) {
  out << "k,silhouette,bic\n";
  for (const auto& c : sel.candidates) {
    out << c.k << ',';
    if (!std::isnan(c.silhouette)) out << detail::format_double(c.silhouette);
    out << ',';
    if (c.bic) out << detail::format_double(*c.bic);
    out << '\n';
  }
}

}  // namespace knobforge
