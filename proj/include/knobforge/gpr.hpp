#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "knobforge/error.hpp"

namespace knobforge {

struct GprHyperparams {
  double alpha = 1e-1;  // observation noise added to the kernel diagonal
  double length_scale = 1.0;
  double signal_variance = 1.0;
  bool optimize_kernel = true;

  friend bool operator==(const GprHyperparams&, const GprHyperparams&) = default;
};

inline void validate(const GprHyperparams& hp) {
  if (!(hp.alpha > 0.0) || !std::isfinite(hp.alpha)) throw InvalidHyperparams("GPR alpha must be > 0");
  if (!(hp.length_scale > 0.0)) throw InvalidHyperparams("GPR length_scale must be > 0");
  if (!(hp.signal_variance > 0.0)) throw InvalidHyperparams("GPR signal_variance must be > 0");
}

/// Kernel search grid: length scales 10^-2..10^3 (13 points), signal
/// variances 10^-1..10^2 (7 points), both log-spaced.
inline std::vector<double> gpr_length_scale_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 12; ++i) g.push_back(std::pow(10.0, -2.0 + 5.0 * i / 12.0));
  return g;
}

inline std::vector<double> gpr_signal_variance_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 6; ++i) g.push_back(std::pow(10.0, -1.0 + 0.5 * i));
  return g;
}

/// RBF kernel sigma^2 * exp(-|a_i - b_j|^2 / (2 l^2)).
inline Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double length_scale, double signal_variance) {
  Eigen::MatrixXd k(a.rows(), b.rows());
  const double inv = 1.0 / (2.0 * length_scale * length_scale);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) k(i, j) = signal_variance * std::exp(-(a.row(i) - b.row(j)).squaredNorm() * inv);
  return k;
}

namespace detail {

inline Eigen::LLT<Eigen::MatrixXd> factor_gram(const Eigen::MatrixXd& x, const GprHyperparams& hp) {
  Eigen::MatrixXd k = rbf_kernel(x, x, hp.length_scale, hp.signal_variance);
  k.diagonal().array() += hp.alpha;
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) throw NumericalError("GPR: Cholesky factorization of K + alpha*I failed");
  return llt;
}

inline double lml_from_factor(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& y) {
  const Eigen::VectorXd w = llt.solve(y);
  const Eigen::MatrixXd l = llt.matrixL();
  const double half_log_det = l.diagonal().array().log().sum();
  return -0.5 * y.dot(w) - half_log_det - 0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
}

}  // namespace detail

/// log p(y | X) = -1/2 y^T (K+aI)^-1 y - 1/2 log|K+aI| - n/2 log 2pi, with y taken as given.
inline double log_marginal_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GprHyperparams& hp) {
  validate(hp);
  if (x.rows() != y.size()) throw ShapeError("GPR: X/y row mismatch");
  return detail::lml_from_factor(detail::factor_gram(x, hp), y);
}

struct GprModel {
  GprHyperparams hyperparams;  // resolved kernel after optimization
  Eigen::MatrixXd x_train;
  Eigen::VectorXd dual_weights;  // (K + aI)^-1 (y - mean)
  Eigen::MatrixXd cholesky_l;
  double y_mean = 0.0;
  double log_marginal_likelihood = 0.0;
};

/// Fits on centered targets; with optimize_kernel the (length scale, signal
/// variance) pair maximizing the log marginal likelihood over the grid is used.
inline GprModel gpr_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, GprHyperparams hp) {
  validate(hp);
  if (x.rows() != y.size()) throw ShapeError("GPR: X/y row mismatch");
  const double mean = y.mean();
  const Eigen::VectorXd yc = y.array() - mean;
  if (hp.optimize_kernel) {
    double best = -std::numeric_limits<double>::infinity();
    GprHyperparams best_hp = hp;
    for (double ls : gpr_length_scale_grid()) {
      for (double sv : gpr_signal_variance_grid()) {
        GprHyperparams cand = hp;
        cand.length_scale = ls;
        cand.signal_variance = sv;
        double v = -std::numeric_limits<double>::infinity();
        try {
          v = detail::lml_from_factor(detail::factor_gram(x, cand), yc);
        } catch (const NumericalError&) {
          continue;  // grid point numerically singular at this alpha
        }
        if (v > best) {
          best = v;
          best_hp = cand;
        }
      }
    }
    hp = best_hp;
  }
  const auto llt = detail::factor_gram(x, hp);
  GprModel m;
  m.hyperparams = hp;
  m.x_train = x;
  m.y_mean = mean;
  m.dual_weights = llt.solve(yc);
  m.cholesky_l = llt.matrixL();
  m.log_marginal_likelihood = detail::lml_from_factor(llt, yc);
  return m;
}

/// Posterior mean at the query rows.
inline Eigen::VectorXd gpr_predict(const GprModel& m, const Eigen::MatrixXd& xq) {
  if (xq.cols() != m.x_train.cols()) throw ShapeError("GPR: query has " + std::to_string(xq.cols()) + " features, model has " + std::to_string(m.x_train.cols()));
  const Eigen::MatrixXd ks = rbf_kernel(xq, m.x_train, m.hyperparams.length_scale, m.hyperparams.signal_variance);
  return (ks * m.dual_weights).array() + m.y_mean;
}

}  // namespace knobforge
