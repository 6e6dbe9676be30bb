#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "knobforge/detail/rng.hpp"
#include "knobforge/error.hpp"

namespace knobforge {

struct RfHyperparams {
  int n_trees = 200;
  int max_depth = 50;
  int min_samples_split = 2;
  bool bootstrap = true;

  friend bool operator==(const RfHyperparams&, const RfHyperparams&) = default;
};

inline void validate(const RfHyperparams& hp) {
  if (hp.n_trees < 1) throw InvalidHyperparams("random forest n_trees must be >= 1");
  if (hp.max_depth < 1) throw InvalidHyperparams("random forest max_depth must be >= 1");
  if (hp.min_samples_split < 2) throw InvalidHyperparams("random forest min_samples_split must be >= 2");
}

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  double value = 0.0;  // mean target of the training samples reaching the node

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  [[nodiscard]] double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = x(n.feature) <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
  }

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

namespace detail {

struct TreeBuilder {
  const Eigen::MatrixXd& x;
  const Eigen::VectorXd& y;
  const RfHyperparams& hp;
  RegressionTree tree;

  int build(std::vector<Eigen::Index>& idx, std::size_t lo, std::size_t hi, int depth) {
    const auto n = hi - lo;
    double sum = 0.0;
    for (std::size_t i = lo; i < hi; ++i) sum += y(idx[i]);
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({-1, 0.0, -1, -1, sum / static_cast<double>(n)});

    bool pure = true;
    for (std::size_t i = lo + 1; i < hi && pure; ++i) pure = y(idx[i]) == y(idx[lo]);
    if (pure || depth >= hp.max_depth || n < static_cast<std::size_t>(hp.min_samples_split)) return id;

    // Maximize sum_L^2/n_L + sum_R^2/n_R (equivalent to maximal SSE reduction).
    const double parent = sum * sum / static_cast<double>(n);
    double best_score = parent;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<Eigen::Index> order(idx.begin() + static_cast<std::ptrdiff_t>(lo), idx.begin() + static_cast<std::ptrdiff_t>(hi));
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
      std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return x(a, f) < x(b, f) || (x(a, f) == x(b, f) && a < b);
      });
      double left = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left += y(order[i]);
        const double xv = x(order[i], f);
        const double xn = x(order[i + 1], f);
        if (xv == xn) continue;
        const double nl = static_cast<double>(i + 1);
        const double nr = static_cast<double>(n) - nl;
        const double right = sum - left;
        const double score = left * left / nl + right * right / nr;
        if (score > best_score) {
          best_score = score;
          best_feature = static_cast<int>(f);
          best_threshold = xv + 0.5 * (xn - xv);
        }
      }
    }
    if (best_feature < 0) return id;

    const auto mid = std::stable_partition(idx.begin() + static_cast<std::ptrdiff_t>(lo), idx.begin() + static_cast<std::ptrdiff_t>(hi),
                                           [&](Eigen::Index r) { return x(r, best_feature) <= best_threshold; });
    const auto split = static_cast<std::size_t>(mid - idx.begin());
    const int l = build(idx, lo, split, depth + 1);
    const int r = build(idx, split, hi, depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return id;
  }
};

}  // namespace detail

/// CART regression tree on the given sample indices (duplicates allowed).
inline RegressionTree build_regression_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<Eigen::Index> samples,
                                            const RfHyperparams& hp) {
  if (samples.empty()) throw InsufficientRows("regression tree needs at least one sample");
  detail::TreeBuilder b{x, y, hp, {}};
  b.build(samples, 0, samples.size(), 0);
  return std::move(b.tree);
}

struct ForestModel {
  RfHyperparams hyperparams;
  Eigen::Index n_features = 0;
  std::vector<RegressionTree> trees;
};

/// Each tree draws its bootstrap sample from its own derived RNG stream, so
/// tree t depends only on (seed, t).
inline ForestModel forest_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const RfHyperparams& hp, std::uint64_t seed) {
  validate(hp);
  if (x.rows() != y.size()) throw ShapeError("random forest: X/y row mismatch");
  const auto n = static_cast<std::size_t>(x.rows());
  ForestModel m{hp, x.cols(), {}};
  m.trees.reserve(static_cast<std::size_t>(hp.n_trees));
  for (int t = 0; t < hp.n_trees; ++t) {
    std::vector<Eigen::Index> samples(n);
    if (hp.bootstrap) {
      auto rng = detail::make_rng(seed, static_cast<std::uint64_t>(t));
      for (auto& s : samples) s = static_cast<Eigen::Index>(detail::uniform_index(rng, n));
    } else {
      std::iota(samples.begin(), samples.end(), Eigen::Index{0});
    }
    m.trees.push_back(build_regression_tree(x, y, std::move(samples), hp));
  }
  return m;
}

inline Eigen::VectorXd forest_predict(const ForestModel& m, const Eigen::MatrixXd& xq) {
  if (xq.cols() != m.n_features) throw ShapeError("random forest: query has " + std::to_string(xq.cols()) + " features, model has " + std::to_string(m.n_features));
  Eigen::VectorXd out = Eigen::VectorXd::Zero(xq.rows());
  for (Eigen::Index i = 0; i < xq.rows(); ++i) {
    double s = 0.0;
    for (const auto& t : m.trees) s += t.predict(xq.row(i));
    out(i) = s / static_cast<double>(m.trees.size());
  }
  return out;
}

}  // namespace knobforge
