#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "knobforge/gmm.hpp"
#include "knobforge/kmeans.hpp"
#include "knobforge/model_selection.hpp"

using namespace knobforge;

namespace {

Eigen::MatrixXd line(std::initializer_list<double> v) {
  Eigen::MatrixXd p(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) p(i++, 0) = x;
  return p;
}

// `k` isotropic Gaussian blobs with centers on a scaled grid.
Eigen::MatrixXd blobs(int k, int per, int d, double sd, double spacing, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sd);
  Eigen::MatrixXd p(k * per, d);
  for (int b = 0; b < k; ++b)
    for (int i = 0; i < per; ++i)
      for (int j = 0; j < d; ++j) {
        const double center = j == 0 ? spacing * b : spacing * ((b * (j + 3)) % 5);
        p(b * per + i, j) = center + n(rng);
      }
  return p;
}

// Optimal inertia over every labelling of n points into exactly k nonempty groups.
double brute_force_inertia(const Eigen::MatrixXd& p, int k) {
  const int n = static_cast<int>(p.rows());
  std::vector<int> lab(static_cast<std::size_t>(n), 0);
  double best = 1e300;
  while (true) {
    std::vector<int> cnt(static_cast<std::size_t>(k), 0);
    for (int l : lab) ++cnt[static_cast<std::size_t>(l)];
    if (std::all_of(cnt.begin(), cnt.end(), [](int c) { return c > 0; })) {
      Eigen::MatrixXd c = Eigen::MatrixXd::Zero(k, p.cols());
      for (int i = 0; i < n; ++i) c.row(lab[static_cast<std::size_t>(i)]) += p.row(i);
      for (int j = 0; j < k; ++j) c.row(j) /= cnt[static_cast<std::size_t>(j)];
      double s = 0;
      for (int i = 0; i < n; ++i) s += (p.row(i) - c.row(lab[static_cast<std::size_t>(i)])).squaredNorm();
      best = std::min(best, s);
    }
    int pos = 0;
    while (pos < n && ++lab[static_cast<std::size_t>(pos)] == k) lab[static_cast<std::size_t>(pos++)] = 0;
    if (pos == n) break;
  }
  return best;
}

}  // namespace

TEST(KMeans, TwoPointsPerfectSplit) {
  const auto m = kmeans_fit(line({0, 10}), 2, 1);
  std::vector<double> c{m.centroids(0, 0), m.centroids(1, 0)};
  std::sort(c.begin(), c.end());
  EXPECT_EQ(c, (std::vector<double>{0, 10}));
  EXPECT_EQ(m.inertia, 0.0);
}

TEST(KMeans, FourPointsBruteForceOracle) {
  const auto p = line({0, 1, 9, 10});
  const auto m = kmeans_fit(p, 2, 3);
  std::vector<double> c{m.centroids(0, 0), m.centroids(1, 0)};
  std::sort(c.begin(), c.end());
  EXPECT_DOUBLE_EQ(c[0], 0.5);
  EXPECT_DOUBLE_EQ(c[1], 9.5);
  EXPECT_DOUBLE_EQ(m.inertia, 1.0);
  EXPECT_DOUBLE_EQ(brute_force_inertia(p, 2), 1.0);
}

TEST(KMeans, SingleClusterIsMean) {
  const Eigen::MatrixXd p = blobs(1, 9, 2, 1.0, 0.0, 2);
  const auto m = kmeans_fit(p, 1, 0);
  EXPECT_TRUE(m.centroids.row(0).isApprox(p.colwise().mean(), 1e-12));
}

TEST(KMeans, InvalidK) {
  EXPECT_THROW(kmeans_fit(line({1, 2}), 3, 0), InvalidK);
  EXPECT_THROW(kmeans_fit(line({1, 2}), 0, 0), InvalidK);
}

TEST(KMeans, FixedPointAndNonemptyClusters) {
  const Eigen::MatrixXd p = blobs(4, 10, 3, 0.8, 3.0, 6);
  const auto m = kmeans_fit(p, 4, 5);
  std::vector<int> cnt(4, 0);
  for (int l : m.labels) {
    ASSERT_GE(l, 0);
    ASSERT_LT(l, 4);
    ++cnt[static_cast<std::size_t>(l)];
  }
  for (int c : cnt) EXPECT_GT(c, 0);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index nearest = 0;
    (m.centroids.rowwise() - p.row(i)).rowwise().squaredNorm().minCoeff(&nearest);
    EXPECT_EQ(m.labels[static_cast<std::size_t>(i)], nearest);
  }
}

TEST(KMeans, InertiaNeverIncreases) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Eigen::MatrixXd p = blobs(5, 12, 2, 2.0, 2.0, seed);
    const auto m = kmeans_fit(p, 5, seed, 1);
    for (std::size_t i = 1; i < m.inertia_trace.size(); ++i) EXPECT_LE(m.inertia_trace[i], m.inertia_trace[i - 1] + 1e-12);
  }
}

TEST(KMeans, MatchesBruteForceOnSmallSeparatedInstances) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const int k = 2 + static_cast<int>(seed % 2);
    const int n = 6 + static_cast<int>(seed % 3);
    Eigen::MatrixXd p(n, 2);
    std::normal_distribution<double> jitter(0.0, 0.1);
    for (int i = 0; i < n; ++i) {
      const int b = i % k;
      p(i, 0) = 20.0 * b + jitter(rng);
      p(i, 1) = -15.0 * b + jitter(rng);
    }
    const auto m = kmeans_fit(p, k, seed, 10);
    EXPECT_NEAR(m.inertia, brute_force_inertia(p, k), 1e-9) << "seed " << seed;
  }
}

TEST(KMeans, Deterministic) {
  const Eigen::MatrixXd p = blobs(3, 15, 2, 1.5, 3.0, 1);
  const auto a = kmeans_fit(p, 3, 77), b = kmeans_fit(p, 3, 77);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.centroids, b.centroids);
  EXPECT_EQ(a.inertia, b.inertia);
}

// ---------------------------------------------------------------------------

TEST(Silhouette, TwoTightPairsHandComputed) {
  const auto p = line({0, 0.1, 100, 100.1});
  const double s = silhouette_score(p, {0, 0, 1, 1});
  // Point 0: a = 0.1, b = (100 + 100.1)/2 = 100.05; point 1: a = 0.1, b = 99.95; symmetric for the other pair.
  const double expect = ((100.05 - 0.1) / 100.05 + (99.95 - 0.1) / 99.95) / 2.0;
  EXPECT_NEAR(s, expect, 1e-12);
  EXPECT_GT(s, 0.9);
}

TEST(Silhouette, RandomLabelsOnUniformBlobNearZero) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd p(200, 2);
    std::vector<int> lab(200);
    for (int i = 0; i < 200; ++i) {
      p(i, 0) = u(rng);
      p(i, 1) = u(rng);
      lab[static_cast<std::size_t>(i)] = u(rng) < 0.5 ? 0 : 1;
    }
    EXPECT_NEAR(silhouette_score(p, lab), 0.0, 0.15);
  }
}

TEST(Silhouette, SingletonsAndErrors) {
  EXPECT_EQ(silhouette_score(line({0, 1}), {0, 1}), 0.0);
  // One singleton cluster contributes zero for its point.
  const double s = silhouette_score(line({0, 1, 10}), {0, 0, 1});
  const double p0 = (10.0 - 1.0) / 10.0, p1 = (9.0 - 1.0) / 9.0;
  EXPECT_NEAR(s, (p0 + p1 + 0.0) / 3.0, 1e-12);
  EXPECT_THROW(silhouette_score(line({0, 1, 2}), {0, 0, 0}), UndefinedSilhouette);
  EXPECT_THROW(silhouette_score(line({0, 1, 2}), {0, 1}), ShapeError);
}

TEST(Silhouette, TranslationAndScaleInvariant) {
  const Eigen::MatrixXd p = blobs(3, 8, 3, 1.0, 4.0, 12);
  std::vector<int> lab(24);
  for (int i = 0; i < 24; ++i) lab[static_cast<std::size_t>(i)] = (i * 7) % 3;
  const double base = silhouette_score(p, lab);
  Eigen::RowVectorXd shift(3);
  shift << 5, -3, 100;
  EXPECT_NEAR(silhouette_score((p * 3.7).rowwise() + shift, lab), base, 1e-12);
}

// ---------------------------------------------------------------------------

TEST(Gmm, TwoBlobsRecoverMeansAndWeights) {
  const int per = 100;
  const Eigen::MatrixXd p = blobs(2, per, 2, 1.0, 12.0, 4);
  const auto m = gmm_fit(p, 2, 0);
  const int lo = m.means(0, 0) < m.means(1, 0) ? 0 : 1;
  for (int b = 0; b < 2; ++b) {
    const int comp = b == 0 ? lo : 1 - lo;
    const Eigen::RowVectorXd truth = p.middleRows(b * per, per).colwise().mean();
    // Standard error of a blob mean is sd / sqrt(per).
    EXPECT_LT((m.means.row(comp) - truth).cwiseAbs().maxCoeff(), 3.0 * 1.0 / std::sqrt(per));
    EXPECT_NEAR(m.weights(comp), 0.5, 0.1);
  }
}

TEST(Gmm, SingleComponentIsSampleMoments) {
  const Eigen::MatrixXd p = blobs(1, 40, 2, 2.0, 0.0, 9);
  const auto m = gmm_fit(p, 1, 0);
  const Eigen::RowVectorXd mean = p.colwise().mean();
  const Eigen::MatrixXd c = p.rowwise() - mean;
  Eigen::MatrixXd cov = c.transpose() * c / 40.0;
  cov.diagonal().array() += 1e-6;
  EXPECT_TRUE(m.means.row(0).isApprox(mean, 1e-10));
  EXPECT_TRUE(m.covariances[0].isApprox(cov, 1e-10));
  EXPECT_NEAR(m.weights(0), 1.0, 1e-15);
}

TEST(Gmm, LogLikelihoodMonotoneAndModelValid) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const Eigen::MatrixXd p = blobs(3, 30, 2, 1.5, 3.0, seed);
    const auto m = gmm_fit(p, 3, seed, 3);
    for (std::size_t i = 1; i < m.log_likelihood_trace.size(); ++i)
      EXPECT_GE(m.log_likelihood_trace[i], m.log_likelihood_trace[i - 1] - 1e-9);
    EXPECT_NEAR(m.weights.sum(), 1.0, 1e-9);
    for (const auto& cov : m.covariances) {
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      ASSERT_EQ(llt.info(), Eigen::Success);
      EXPECT_TRUE((Eigen::MatrixXd(llt.matrixL()).diagonal().array() > 0).all());
      EXPECT_TRUE(cov.isApprox(cov.transpose()));
    }
    const auto r = gmm_responsibilities(m, p);
    EXPECT_LT((r.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    EXPECT_NEAR(gmm_log_likelihood(m, p), m.log_likelihood, 1e-9 * std::abs(m.log_likelihood));
  }
}

TEST(Gmm, Deterministic) {
  const Eigen::MatrixXd p = blobs(3, 20, 2, 1.0, 4.0, 3);
  const auto a = gmm_fit(p, 3, 5), b = gmm_fit(p, 3, 5);
  EXPECT_EQ(a.means, b.means);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.log_likelihood, b.log_likelihood);
}

TEST(Gmm, InvalidK) { EXPECT_THROW(gmm_fit(line({1, 2}), 3, 0), InvalidK); }

TEST(Bic, ParameterCountFormula) {
  EXPECT_EQ(gmm_parameter_count(1, 1), 2.0);
  EXPECT_EQ(gmm_parameter_count(3, 2), 2.0 + 6.0 + 9.0);
  // Quadratic growth in d: second differences are constant (= k).
  for (int k : {1, 2, 5}) {
    const double d2 = gmm_parameter_count(k, 6) - 2 * gmm_parameter_count(k, 5) + gmm_parameter_count(k, 4);
    EXPECT_EQ(d2, static_cast<double>(k));
  }
}

TEST(Bic, SingleComponentOneDimension) {
  const auto p = line({0.3, -1.2, 2.5, 0.7, 1.1, -0.4});
  const auto m = gmm_fit(p, 1, 0);
  EXPECT_NEAR(bic(m, p), -2.0 * gmm_log_likelihood(m, p) + 2.0 * std::log(6.0), 1e-12);
}

TEST(Bic, MinimizedNearTrueK) {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Eigen::MatrixXd p = blobs(3, 40, 2, 1.0, 8.0, 100 + seed);
    int best_k = 0;
    double best = 1e300;
    for (int k = 1; k <= 6; ++k) {
      const double b = bic(gmm_fit(p, k, seed, 3), p);
      if (b < best) best = b, best_k = k;
    }
    if (std::abs(best_k - 3) <= 1) ++hits;
  }
  EXPECT_GE(hits, 16);
}

// ---------------------------------------------------------------------------

TEST(SelectK, EightPlantedBlobs) {
  const Eigen::MatrixXd p = blobs(8, 6, 2, 0.3, 10.0, 8);
  for (auto kind : {ClustererKind::KMeans, ClustererKind::Gmm}) {
    const auto sel = select_k(p, k_range(2, 15), {kind, 5}, 1);
    EXPECT_EQ(sel.chosen_k, 8) << to_string(kind);
    EXPECT_EQ(sel.candidates.size(), 14u);
  }
}

TEST(SelectK, TwoPlantedBlobs) {
  const Eigen::MatrixXd p = blobs(2, 20, 2, 0.5, 10.0, 2);
  EXPECT_EQ(select_k(p, k_range(2, 5), {}, 0).chosen_k, 2);
}

TEST(SelectK, SingletonRangeIsUnconditional) {
  const Eigen::MatrixXd p = blobs(2, 20, 2, 0.5, 10.0, 2);
  EXPECT_EQ(select_k(p, {3}, {}, 0).chosen_k, 3);
}

TEST(SelectK, ChosenIsSilhouetteArgmax) {
  const Eigen::MatrixXd p = blobs(4, 12, 2, 1.5, 4.0, 17);
  const auto sel = select_k(p, k_range(2, 8), {}, 3);
  double best = -2;
  for (const auto& c : sel.candidates) best = std::max(best, c.silhouette);
  for (const auto& c : sel.candidates)
    if (c.k == sel.chosen_k) {
      EXPECT_EQ(c.silhouette, best);
    }
  EXPECT_EQ(sel.rule, SelectionRule::SilhouetteMax);
  EXPECT_EQ(select_k(p, k_range(2, 3), {ClustererKind::Gmm, 2}, 3).rule, SelectionRule::SilhouetteThenBic);
}

TEST(SelectK, RangeErrors) {
  const Eigen::MatrixXd p = blobs(2, 3, 2, 0.5, 10.0, 2);
  EXPECT_THROW(select_k(p, {}, {}, 0), InvalidK);
  EXPECT_THROW(select_k(p, k_range(2, 6), {}, 0), InvalidK);
  EXPECT_THROW(parse_clusterer("dbscan"), ConfigError);
}
