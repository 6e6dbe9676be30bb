#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "knobforge/detail/rng.hpp"
#include "knobforge/error.hpp"

namespace knobforge {

struct KMeansModel {
  int k = 0;
  Eigen::MatrixXd centroids;  // k x d
  std::vector<int> labels;
  double inertia = 0.0;
  std::vector<double> inertia_trace;  // after each centroid update of the kept run
  int n_iter = 0;
};

namespace detail {

inline int nearest_center(const Eigen::MatrixXd& centers, const Eigen::RowVectorXd& x, double* dist2 = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    const double d = (centers.row(c) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (dist2) *dist2 = best_d;
  return best;
}

inline Eigen::MatrixXd kmeans_plus_plus(const Eigen::MatrixXd& points, int k, std::mt19937_64& rng) {
  const auto n = points.rows();
  Eigen::MatrixXd centers(k, points.cols());
  centers.row(0) = points.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n))));
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = (points.row(i) - centers.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = uniform01(rng) * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        u -= d2(i);
        if (u < 0.0 && d2(i) > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n)));
    }
    centers.row(c) = points.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (points.row(i) - centers.row(c)).squaredNorm());
  }
  return centers;
}

inline double inertia_of(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centers, const std::vector<int>& labels) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) s += (points.row(i) - centers.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
  return s;
}

// One Lloyd run from the given centers.
inline KMeansModel lloyd(const Eigen::MatrixXd& points, Eigen::MatrixXd centers, int max_iter) {
  const auto n = points.rows();
  const int k = static_cast<int>(centers.rows());
  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  KMeansModel m;
  m.k = k;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    std::vector<int> next(static_cast<std::size_t>(n));
    std::vector<double> dist(static_cast<std::size_t>(n));
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      next[static_cast<std::size_t>(i)] = nearest_center(centers, points.row(i), &dist[static_cast<std::size_t>(i)]);
      ++counts[static_cast<std::size_t>(next[static_cast<std::size_t>(i)])];
    }
    // Empty clusters take the point farthest from its center among clusters
    // that can spare one.
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto li = static_cast<std::size_t>(next[static_cast<std::size_t>(i)]);
        if (counts[li] > 1 && dist[static_cast<std::size_t>(i)] > far_d) {
          far_d = dist[static_cast<std::size_t>(i)];
          far = i;
        }
      }
      if (far < 0) throw ClusterDegeneracy("k-means: cannot fill empty cluster");
      --counts[static_cast<std::size_t>(next[static_cast<std::size_t>(far)])];
      next[static_cast<std::size_t>(far)] = c;
      dist[static_cast<std::size_t>(far)] = 0.0;
      counts[static_cast<std::size_t>(c)] = 1;
    }
    if (next == labels) break;
    labels = std::move(next);
    centers.setZero();
    for (Eigen::Index i = 0; i < n; ++i) centers.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
    for (int c = 0; c < k; ++c) centers.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    m.inertia_trace.push_back(inertia_of(points, centers, labels));
  }
  m.centroids = std::move(centers);
  m.labels = std::move(labels);
  m.inertia = inertia_of(points, m.centroids, m.labels);
  m.n_iter = iter;
  return m;
}

}  // namespace detail

/// Best-of-`n_restarts` Lloyd's algorithm with k-means++ seeding. Lowest
/// inertia wins; the earliest restart wins ties.
inline KMeansModel kmeans_fit(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int n_restarts = 10,
                              int max_iter = 300) {
  if (k < 1 || k > points.rows())
    throw InvalidK("k-means: k=" + std::to_string(k) + " invalid for " + std::to_string(points.rows()) + " points");
  if (!points.allFinite()) throw DegenerateInput("k-means: non-finite point");
  KMeansModel best;
  bool have = false;
  for (int r = 0; r < std::max(1, n_restarts); ++r) {
    auto rng = detail::make_rng(seed, static_cast<std::uint64_t>(r));
    auto m = detail::lloyd(points, detail::kmeans_plus_plus(points, k, rng), max_iter);
    if (!have || m.inertia < best.inertia) {
      best = std::move(m);
      have = true;
    }
  }
  return best;
}

}  // namespace knobforge
