#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>
#include <numeric>
#include <random>

#include "knobforge/regressor.hpp"

using namespace knobforge;

namespace {

Eigen::MatrixXd random_x(int n, int d, std::uint64_t seed, double lo = -2.0, double hi = 2.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  return x;
}

Eigen::VectorXd smooth_target(const Eigen::MatrixXd& x) {
  Eigen::VectorXd y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) y(i) = 10.0 + std::sin(x(i, 0)) + 0.5 * x.row(i).squaredNorm();
  return y;
}

GprHyperparams fixed_gpr(double alpha, double ls = 1.0, double sv = 1.0) {
  GprHyperparams hp;
  hp.alpha = alpha;
  hp.length_scale = ls;
  hp.signal_variance = sv;
  hp.optimize_kernel = false;
  return hp;
}

}  // namespace

// ---------------------------------------------------------------------------
// GPR

TEST(Gpr, NoiseFreeInterpolatesTrainingPoints) {
  const auto x = random_x(15, 3, 1);
  const auto y = smooth_target(x);
  for (bool opt : {false, true}) {
    auto hp = fixed_gpr(1e-10);
    hp.optimize_kernel = opt;
    const auto m = gpr_fit(x, y, hp);
    const auto p = gpr_predict(m, x);
    for (int i = 0; i < 15; ++i) EXPECT_NEAR(p(i), y(i), 1e-6 * std::abs(y(i)));
  }
}

TEST(Gpr, ScalarLogMarginalLikelihood) {
  Eigen::MatrixXd x(1, 2);
  x << 0.3, -0.7;
  Eigen::VectorXd y(1);
  y << 1.7;
  const double s2 = 2.5, a = 0.1;
  const double expect = -0.5 * y(0) * y(0) / (s2 + a) - 0.5 * std::log(s2 + a) - 0.5 * std::log(2.0 * std::numbers::pi);
  EXPECT_NEAR(log_marginal_likelihood(x, y, fixed_gpr(a, 0.8, s2)), expect, 1e-14);
}

TEST(Gpr, TwoPointAnalyticPosterior) {
  // Points at -1 and +1; the midpoint sees both with equal kernel weight, so
  // the posterior mean there is the mean of the targets.
  Eigen::MatrixXd x(2, 1);
  x << -1, 1;
  Eigen::VectorXd y(2);
  y << 3.0, 7.0;
  const auto hp = fixed_gpr(0.05, 0.9, 2.0);
  const auto m = gpr_fit(x, y, hp);
  Eigen::MatrixXd q(1, 1);
  q << 0.0;
  EXPECT_NEAR(gpr_predict(m, q)(0), 5.0, 1e-12);

  // Closed form at x = 1: k* = [s2 r, s2], K + aI = [[s2+a, s2 r],[s2 r, s2+a]], centered y = [-2, 2].
  const double s2 = 2.0, a = 0.05, r = std::exp(-4.0 / (2 * 0.81));
  Eigen::Matrix2d k;
  k << s2 + a, s2 * r, s2 * r, s2 + a;
  const Eigen::Vector2d w = k.inverse() * Eigen::Vector2d(-2.0, 2.0);
  q << 1.0;
  EXPECT_NEAR(gpr_predict(m, q)(0), 5.0 + s2 * r * w(0) + s2 * w(1), 1e-12);
}

TEST(Gpr, FarQueryRevertsToTrainingMean) {
  const auto x = random_x(10, 2, 4);
  const auto y = smooth_target(x);
  const auto m = gpr_fit(x, y, fixed_gpr(1e-3, 0.5, 1.0));
  Eigen::MatrixXd q(1, 2);
  q << 1e3, -1e3;
  // Targets are centered before fitting, so the prior mean is mean(y).
  EXPECT_NEAR(gpr_predict(m, q)(0), y.mean(), 1e-12);
}

TEST(Gpr, PermutationInvariance) {
  const auto x = random_x(12, 2, 7);
  const auto y = smooth_target(x);
  const auto q = random_x(5, 2, 8);
  std::vector<int> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(3);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::MatrixXd xp(12, 2);
  Eigen::VectorXd yp(12);
  for (int i = 0; i < 12; ++i) {
    xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    yp(i) = y(perm[static_cast<std::size_t>(i)]);
  }
  GprHyperparams hp;
  hp.alpha = 1e-2;
  const auto a = gpr_predict(gpr_fit(x, y, hp), q);
  const auto b = gpr_predict(gpr_fit(xp, yp, hp), q);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Gpr, GridChoiceMaximizesLml) {
  const auto x = random_x(20, 2, 5);
  const auto y = smooth_target(x);
  GprHyperparams hp;
  hp.alpha = 1e-2;
  const auto m = gpr_fit(x, y, hp);
  const Eigen::VectorXd yc = y.array() - y.mean();
  const double chosen = log_marginal_likelihood(x, yc, m.hyperparams);
  EXPECT_NEAR(chosen, m.log_marginal_likelihood, 1e-9);
  for (double ls : gpr_length_scale_grid())
    for (double sv : gpr_signal_variance_grid()) {
      auto c = hp;
      c.length_scale = ls;
      c.signal_variance = sv;
      EXPECT_GE(chosen, log_marginal_likelihood(x, yc, c));
    }
}

TEST(Gpr, HugeAlphaLowersLmlOnSignal) {
  Eigen::MatrixXd x(30, 1);
  Eigen::VectorXd y(30);
  for (int i = 0; i < 30; ++i) {
    x(i, 0) = i * 0.2;
    y(i) = std::sin(x(i, 0));
  }
  EXPECT_GT(log_marginal_likelihood(x, y, fixed_gpr(1e-1)), log_marginal_likelihood(x, y, fixed_gpr(1e5)));
}

TEST(Gpr, RejectsBadHyperparams) {
  const auto x = random_x(4, 1, 1);
  const Eigen::VectorXd y = Eigen::VectorXd::Ones(4);
  EXPECT_THROW(gpr_fit(x, y, fixed_gpr(0.0)), InvalidHyperparams);
  EXPECT_THROW(gpr_fit(x, y, fixed_gpr(1.0, -1.0)), InvalidHyperparams);
  const auto m = gpr_fit(x, y, fixed_gpr(1.0));
  EXPECT_THROW(gpr_predict(m, random_x(2, 3, 1)), ShapeError);
}

// ---------------------------------------------------------------------------
// Random forest

TEST(Forest, UnboundedTreeWithoutBootstrapFitsExactly) {
  const auto x = random_x(25, 3, 11);
  const auto y = smooth_target(x);
  RfHyperparams hp;
  hp.n_trees = 1;
  hp.max_depth = 1000;
  hp.bootstrap = false;
  EXPECT_EQ(forest_predict(forest_fit(x, y, hp, 0), x), y);
  // Averaging identical trees only adds rounding.
  hp.n_trees = 3;
  EXPECT_LT((forest_predict(forest_fit(x, y, hp, 0), x) - y).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forest, OneTreeEqualsThatTree) {
  const auto x = random_x(30, 2, 12);
  const auto y = smooth_target(x);
  RfHyperparams hp;
  hp.n_trees = 1;
  hp.max_depth = 4;
  const auto m = forest_fit(x, y, hp, 9);
  const auto q = random_x(10, 2, 13);
  const auto p = forest_predict(m, q);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(p(i), m.trees[0].predict(q.row(i)));
}

TEST(Forest, PredictionsWithinTargetRange) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto x = random_x(40, 3, seed);
    const auto y = smooth_target(x);
    RfHyperparams hp;
    hp.n_trees = 20;
    const auto m = forest_fit(x, y, hp, seed);
    const auto p = forest_predict(m, random_x(50, 3, seed + 100, -5.0, 5.0));
    EXPECT_GE(p.minCoeff(), y.minCoeff());
    EXPECT_LE(p.maxCoeff(), y.maxCoeff());
  }
}

TEST(Forest, Deterministic) {
  const auto x = random_x(30, 3, 2);
  const auto y = smooth_target(x);
  RfHyperparams hp;
  hp.n_trees = 15;
  const auto a = forest_fit(x, y, hp, 42), b = forest_fit(x, y, hp, 42);
  EXPECT_EQ(a.trees, b.trees);
  EXPECT_EQ(forest_predict(a, x), forest_predict(b, x));
  EXPECT_NE(forest_fit(x, y, hp, 43).trees, a.trees);
}

TEST(Forest, DepthLimitAndSplitThreshold) {
  const auto x = random_x(64, 1, 3);
  const auto y = smooth_target(x);
  RfHyperparams hp;
  hp.n_trees = 1;
  hp.bootstrap = false;
  hp.max_depth = 2;
  EXPECT_LE(forest_fit(x, y, hp, 0).trees[0].nodes.size(), 7u);
  hp.max_depth = 50;
  hp.min_samples_split = 64;
  EXPECT_EQ(forest_fit(x, y, hp, 0).trees[0].nodes.size(), 3u);
  hp.n_trees = 0;
  EXPECT_THROW(forest_fit(x, y, hp, 0), InvalidHyperparams);
}

// ---------------------------------------------------------------------------
// MLP

TEST(Mlp, GradientMatchesFiniteDifferences) {
  MlpNetwork net = init_network({3, 4, 4, 4, 1}, 5);
  for (auto& b : net.biases) b.setConstant(0.1);
  const auto x = random_x(5, 3, 6);
  Eigen::VectorXd y(5);
  y << 2.0, 3.5, 1.2, 4.4, 0.7;
  std::vector<double> grad;
  mlp_loss_and_gradient(net, x, y, &grad);
  auto params = net.flatten();
  const double h = 1e-5;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto plus = params, minus = params;
    plus[i] += h;
    minus[i] -= h;
    MlpNetwork np = net, nm = net;
    np.assign(plus);
    nm.assign(minus);
    const double fd = (mlp_loss_and_gradient(np, x, y, nullptr) - mlp_loss_and_gradient(nm, x, y, nullptr)) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
    EXPECT_LE(std::abs(fd - grad[i]) / scale, 1e-4) << "parameter " << i;
  }
}

TEST(Mlp, LearnsLinearTarget) {
  Eigen::MatrixXd x(40, 1);
  Eigen::VectorXd y(40);
  for (int i = 0; i < 40; ++i) {
    x(i, 0) = i / 39.0;
    y(i) = 3.0 * x(i, 0) + 2.0;
  }
  MlpHyperparams hp;
  hp.hidden_widths = {16, 16, 16};
  hp.epochs = 3000;
  hp.adam.learning_rate = 3e-3;
  const auto m = mlp_fit(x, y, hp, 1);
  const Eigen::VectorXd p = mlp_predict(m, x);
  const double mape = ((p - y).array().abs() / y.array()).mean();
  EXPECT_LT(mape, 0.02);
  EXPECT_NEAR(m.loss_trace.back(), mape, 1e-12);
}

TEST(Mlp, TrainingReducesLoss) {
  const auto x = random_x(30, 3, 9);
  const auto y = smooth_target(x);
  MlpHyperparams hp;
  hp.hidden_widths = {8, 8, 8};
  hp.epochs = 200;
  const auto m = mlp_fit(x, y, hp, 2);
  ASSERT_EQ(m.loss_trace.size(), 201u);
  EXPECT_LT(m.loss_trace.back(), m.loss_trace.front());
}

TEST(Mlp, RejectsNonPositiveTargetsAndBadShape) {
  const auto x = random_x(4, 2, 1);
  Eigen::VectorXd y(4);
  y << 1, 2, 0, 3;
  EXPECT_THROW(mlp_fit(x, y, {}, 0), InvalidTarget);
  MlpHyperparams hp;
  hp.hidden_widths = {4, 4};
  y(2) = 1;
  EXPECT_THROW(mlp_fit(x, y, hp, 0), InvalidHyperparams);
}

TEST(Mlp, OutputLayerIsLinear) {
  // A zero-width signal through ReLUs followed by a negative output bias must
  // still produce a negative value.
  MlpNetwork net = init_network({1, 2, 2, 2, 1}, 0);
  for (auto& w : net.weights) w.setZero();
  for (auto& b : net.biases) b.setZero();
  net.biases.back()(0) = -3.0;
  EXPECT_EQ(mlp_forward(net, Eigen::MatrixXd::Ones(2, 1))(0), -3.0);
}

// ---------------------------------------------------------------------------
// Unified contract

TEST(Regressor, AllKindsRoundTripThroughJson) {
  const auto x = random_x(20, 3, 21);
  const auto y = smooth_target(x);
  const auto q = random_x(7, 3, 22);
  for (auto kind : {RegressorKind::Gpr, RegressorKind::RandomForest, RegressorKind::Mlp}) {
    RegressorSpec spec;
    spec.kind = kind;
    spec.rf.n_trees = 10;
    spec.mlp.epochs = 20;
    spec.seed = 5;
    const auto m = fit(spec, x, y, {"a", "b", "c"});
    const auto back = regressor_from_json(nlohmann::json::parse(to_json(m).dump()));
    EXPECT_EQ(back.spec, m.spec);
    EXPECT_EQ(back.feature_names, m.feature_names);
    EXPECT_EQ(predict(back, q), predict(m, q)) << to_string(kind);
  }
}

TEST(Regressor, ShapeAndInputErrors) {
  const auto x = random_x(6, 2, 1);
  const auto y = smooth_target(x);
  const auto m = fit({}, x, y);
  EXPECT_EQ(m.feature_names, (std::vector<std::string>{"x0", "x1"}));
  EXPECT_THROW(predict(m, random_x(2, 3, 0)), ShapeError);
  EXPECT_THROW(fit({}, x.topRows(1), y.head(1)), InsufficientRows);
  EXPECT_THROW(fit({}, x, y.head(5)), ShapeError);
  Eigen::MatrixXd bad = x;
  bad(0, 0) = std::nan("");
  EXPECT_THROW(fit({}, bad, y), NumericalError);
  EXPECT_THROW(parse_regressor("svm"), ConfigError);
  EXPECT_EQ(parse_regressor("mlp"), RegressorKind::Mlp);
}

TEST(Regressor, SpecJsonDefaultsAndOverrides) {
  RegressorSpec base;
  base.gpr.alpha = 0.5;
  const auto s = regressor_spec_from_json(nlohmann::json{{"model", "rf"}, {"rf", {{"n_trees", 7}}}}, base);
  EXPECT_EQ(s.kind, RegressorKind::RandomForest);
  EXPECT_EQ(s.rf.n_trees, 7);
  EXPECT_EQ(s.rf.max_depth, 50);
  EXPECT_EQ(s.gpr.alpha, 0.5);
  EXPECT_EQ(regressor_spec_from_json(to_json(s)), s);
}
