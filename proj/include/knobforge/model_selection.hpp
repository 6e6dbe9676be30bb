#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "knobforge/detail/rng.hpp"
#include "knobforge/error.hpp"
#include "knobforge/gmm.hpp"
#include "knobforge/kmeans.hpp"

namespace knobforge {

/// Mean silhouette over all points, Euclidean distance. Points in singleton
/// clusters contribute 0.
inline double silhouette_score(const Eigen::MatrixXd& points, const std::vector<int>& labels) {
  const auto n = points.rows();
  if (static_cast<std::size_t>(n) != labels.size()) throw ShapeError("silhouette: labels/points length mismatch");
  std::map<int, int> sizes;
  for (int l : labels) ++sizes[l];
  if (sizes.size() < 2) throw UndefinedSilhouette("silhouette needs at least two clusters");
  if (n < 3) {
    // Only possible as two singletons.
    return 0.0;
  }
  std::map<int, std::size_t> slot;
  for (const auto& [l, _] : sizes) slot.emplace(l, slot.size());
  const std::size_t nc = sizes.size();
  std::vector<double> size_of(nc);
  for (const auto& [l, s] : sizes) size_of[slot[l]] = static_cast<double>(s);

  double total = 0.0;
  std::vector<double> sum_to(nc);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::fill(sum_to.begin(), sum_to.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      sum_to[slot[labels[static_cast<std::size_t>(j)]]] += (points.row(i) - points.row(j)).norm();
    }
    const std::size_t own = slot[labels[static_cast<std::size_t>(i)]];
    if (size_of[own] <= 1.0) continue;
    const double a = sum_to[own] / (size_of[own] - 1.0);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < nc; ++c)
      if (c != own) b = std::min(b, sum_to[c] / size_of[c]);
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

enum class ClustererKind { KMeans, Gmm };

inline std::string_view to_string(ClustererKind k) { return k == ClustererKind::KMeans ? "kmeans" : "gmm"; }

inline ClustererKind parse_clusterer(std::string_view s) {
  if (s == "kmeans") return ClustererKind::KMeans;
  if (s == "gmm") return ClustererKind::Gmm;
  throw ConfigError("unknown clusterer '" + std::string(s) + "' (expected kmeans|gmm)");
}

struct ClusterSpec {
  ClustererKind kind = ClustererKind::KMeans;
  int n_restarts = 10;
};

enum class SelectionRule { SilhouetteMax, SilhouetteThenBic };

struct SelectionCandidate {
  int k = 0;
  double silhouette = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> bic;
  bool degenerate = false;
};

using ClusterFit = std::variant<KMeansModel, GmmModel>;

inline const std::vector<int>& labels_of(const ClusterFit& f) {
  return std::visit([](const auto& m) -> const std::vector<int>& { return m.labels; }, f);
}

/// Cluster centers: k-means centroids or GMM component means.
inline const Eigen::MatrixXd& centers_of(const ClusterFit& f) {
  if (const auto* km = std::get_if<KMeansModel>(&f)) return km->centroids;
  return std::get<GmmModel>(f).means;
}

struct ModelSelection {
  std::vector<SelectionCandidate> candidates;
  int chosen_k = 0;
  SelectionRule rule = SelectionRule::SilhouetteMax;
  ClusterFit chosen_fit;
};

inline ClusterFit fit_clusterer(const Eigen::MatrixXd& points, int k, const ClusterSpec& spec, std::uint64_t seed) {
  if (spec.kind == ClustererKind::KMeans) return kmeans_fit(points, k, seed, spec.n_restarts);
  return gmm_fit(points, k, seed, spec.n_restarts);
}

/// Fits every k in `k_range` and picks the silhouette argmax. For GMM, equal
/// silhouettes fall back to the lower BIC; remaining ties go to the smaller k.
/// A singleton range is chosen unconditionally.
inline ModelSelection select_k(const Eigen::MatrixXd& points, const std::vector<int>& k_range, const ClusterSpec& spec,
                               std::uint64_t seed) {
  if (k_range.empty()) throw InvalidK("select_k: empty k range");
  const auto n = points.rows();
  const bool singleton = k_range.size() == 1;
  for (int k : k_range) {
    if (k < 1 || k > n || (!singleton && k > n - 1))
      throw InvalidK("select_k: k=" + std::to_string(k) + " out of range for " + std::to_string(n) + " points");
  }

  ModelSelection sel;
  sel.rule = spec.kind == ClustererKind::Gmm ? SelectionRule::SilhouetteThenBic : SelectionRule::SilhouetteMax;
  std::vector<std::optional<ClusterFit>> fits;
  std::string last_error;
  for (int k : k_range) {
    SelectionCandidate cand;
    cand.k = k;
    std::optional<ClusterFit> fit;
    try {
      fit = fit_clusterer(points, k, spec, detail::derive_seed(seed, static_cast<std::uint64_t>(k)));
      const auto& labels = labels_of(*fit);
      std::vector<int> count(static_cast<std::size_t>(k), 0);
      for (int l : labels) ++count[static_cast<std::size_t>(l)];
      const bool has_empty = std::any_of(count.begin(), count.end(), [](int c) { return c == 0; });
      if (has_empty) {
        cand.degenerate = true;
        last_error = "k=" + std::to_string(k) + ": empty cluster";
      } else if (k >= 2) {
        cand.silhouette = silhouette_score(points, labels);
      }
      if (const auto* g = std::get_if<GmmModel>(&*fit)) cand.bic = bic(*g, points);
    } catch (const ClusterDegeneracy& e) {
      cand.degenerate = true;
      last_error = e.what();
      fit.reset();
    }
    sel.candidates.push_back(cand);
    fits.push_back(std::move(fit));
  }

  std::optional<std::size_t> best;
  if (singleton) {
    if (!sel.candidates[0].degenerate) best = 0;
  } else {
    for (std::size_t i = 0; i < sel.candidates.size(); ++i) {
      const auto& c = sel.candidates[i];
      if (c.degenerate || std::isnan(c.silhouette)) continue;
      if (!best) {
        best = i;
        continue;
      }
      const auto& b = sel.candidates[*best];
      if (c.silhouette > b.silhouette) {
        best = i;
      } else if (c.silhouette == b.silhouette) {
        const bool by_bic = sel.rule == SelectionRule::SilhouetteThenBic && c.bic && b.bic && *c.bic != *b.bic;
        if (by_bic ? *c.bic < *b.bic : c.k < b.k) best = i;
      }
    }
  }
  if (!best) throw ClusterDegeneracy("select_k: every fit was degenerate (" + last_error + ")");
  sel.chosen_k = sel.candidates[*best].k;
  sel.chosen_fit = std::move(*fits[*best]);
  return sel;
}

/// Inclusive integer range helper, e.g. k_range(2, 15).
inline std::vector<int> k_range(int lo, int hi) {
  std::vector<int> out;
  for (int k = lo; k <= hi; ++k) out.push_back(k);
  return out;
}

}  // namespace knobforge
