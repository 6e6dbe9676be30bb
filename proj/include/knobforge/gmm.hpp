#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "knobforge/error.hpp"
#include "knobforge/kmeans.hpp"

namespace knobforge {

/// Gaussian mixture with one full covariance matrix per component.
struct GmmModel {
  int k = 0;
  Eigen::VectorXd weights;
  Eigen::MatrixXd means;  // k x d
  std::vector<Eigen::MatrixXd> covariances;
  double log_likelihood = 0.0;  // total over the training points
  std::vector<int> labels;
  std::vector<double> log_likelihood_trace;  // one entry per E-step of the kept run
  int n_iter = 0;
};

struct GmmOptions {
  int n_restarts = 10;
  int max_iter = 200;
  double tol = 1e-6;       // on the per-point log-likelihood gain
  double ridge = 1e-6;     // added to every covariance diagonal in each M-step
};

namespace detail {

// Per-point log densities (n x k) of each weighted component.
inline Eigen::MatrixXd weighted_log_densities(const GmmModel& m, const Eigen::MatrixXd& points) {
  const auto n = points.rows();
  const auto d = points.cols();
  Eigen::MatrixXd out(n, m.k);
  const double log2pi = std::log(2.0 * std::numbers::pi);
  for (int c = 0; c < m.k; ++c) {
    Eigen::LLT<Eigen::MatrixXd> llt(m.covariances[static_cast<std::size_t>(c)]);
    if (llt.info() != Eigen::Success) throw ClusterDegeneracy("GMM: covariance of component " + std::to_string(c) + " is not positive definite");
    const Eigen::MatrixXd L = llt.matrixL();
    const Eigen::VectorXd diag = L.diagonal();
    if ((diag.array() <= 0.0).any()) throw ClusterDegeneracy("GMM: non-positive Cholesky pivot");
    const double log_det = 2.0 * diag.array().log().sum();
    const Eigen::MatrixXd centered = (points.rowwise() - m.means.row(c)).transpose();  // d x n
    const Eigen::MatrixXd solved = L.triangularView<Eigen::Lower>().solve(centered);
    const Eigen::VectorXd maha = solved.colwise().squaredNorm().transpose();
    out.col(c) = (-0.5 * (static_cast<double>(d) * log2pi + log_det + maha.array())).matrix();
    out.col(c).array() += std::log(m.weights(c));
  }
  return out;
}

// Normalized responsibilities and per-point log-likelihoods via log-sum-exp.
inline Eigen::MatrixXd e_step(const GmmModel& m, const Eigen::MatrixXd& points, Eigen::VectorXd& point_ll) {
  Eigen::MatrixXd logp = weighted_log_densities(m, points);
  point_ll.resize(points.rows());
  for (Eigen::Index i = 0; i < logp.rows(); ++i) {
    const double mx = logp.row(i).maxCoeff();
    const double lse = mx + std::log((logp.row(i).array() - mx).exp().sum());
    point_ll(i) = lse;
    logp.row(i) = (logp.row(i).array() - lse).exp();
  }
  return logp;
}

inline void m_step(GmmModel& m, const Eigen::MatrixXd& points, const Eigen::MatrixXd& resp, double ridge) {
  const auto n = points.rows();
  const Eigen::VectorXd nk = resp.colwise().sum().transpose();
  const double floor = 10.0 * std::numeric_limits<double>::epsilon();
  for (int c = 0; c < m.k; ++c)
    if (!(nk(c) > floor)) throw ClusterDegeneracy("GMM: component " + std::to_string(c) + " lost all its mass");
  m.weights = nk / static_cast<double>(n);
  m.means = (resp.transpose() * points).array().colwise() / nk.array();
  m.covariances.resize(static_cast<std::size_t>(m.k));
  for (int c = 0; c < m.k; ++c) {
    const Eigen::MatrixXd centered = points.rowwise() - m.means.row(c);
    Eigen::MatrixXd cov = centered.transpose() * resp.col(c).asDiagonal() * centered / nk(c);
    cov = 0.5 * (cov + cov.transpose());
    cov.diagonal().array() += ridge;
    m.covariances[static_cast<std::size_t>(c)] = std::move(cov);
  }
}

inline std::vector<int> argmax_labels(const Eigen::MatrixXd& resp) {
  std::vector<int> labels(static_cast<std::size_t>(resp.rows()));
  for (Eigen::Index i = 0; i < resp.rows(); ++i) {
    Eigen::Index best = 0;
    resp.row(i).maxCoeff(&best);
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return labels;
}

inline GmmModel gmm_run(const Eigen::MatrixXd& points, int k, std::uint64_t seed, const GmmOptions& opt) {
  const auto n = points.rows();
  // Initialize responsibilities from a single k-means++ / Lloyd run.
  const auto km = kmeans_fit(points, k, seed, 1);
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) resp(i, km.labels[static_cast<std::size_t>(i)]) = 1.0;

  GmmModel m;
  m.k = k;
  m_step(m, points, resp, opt.ridge);
  Eigen::VectorXd point_ll;
  double prev = -std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter < opt.max_iter; ++iter) {
    resp = e_step(m, points, point_ll);
    const double ll = point_ll.sum();
    if (!std::isfinite(ll)) throw ClusterDegeneracy("GMM: non-finite log-likelihood");
    m.log_likelihood_trace.push_back(ll);
    if (iter > 0 && (ll - prev) / static_cast<double>(n) < opt.tol) break;
    prev = ll;
    m_step(m, points, resp, opt.ridge);
  }
  // Final E-step state corresponds to the current parameters.
  resp = e_step(m, points, point_ll);
  m.log_likelihood = point_ll.sum();
  if (iter == opt.max_iter) m.log_likelihood_trace.push_back(m.log_likelihood);
  m.labels = argmax_labels(resp);
  m.n_iter = iter;
  return m;
}

}  // namespace detail

/// Responsibilities (n x k) of a fitted model; rows sum to one.
inline Eigen::MatrixXd gmm_responsibilities(const GmmModel& m, const Eigen::MatrixXd& points) {
  Eigen::VectorXd ll;
  return detail::e_step(m, points, ll);
}

/// Total log-likelihood of `points` under the model.
inline double gmm_log_likelihood(const GmmModel& m, const Eigen::MatrixXd& points) {
  Eigen::VectorXd ll;
  detail::e_step(m, points, ll);
  return ll.sum();
}

/// EM for a full-covariance mixture, initialized from k-means++; best of
/// `n_restarts` by final log-likelihood. Restarts that degenerate are skipped.
inline GmmModel gmm_fit(const Eigen::MatrixXd& points, int k, std::uint64_t seed, const GmmOptions& opt = {}) {
  if (k < 1 || k > points.rows())
    throw InvalidK("GMM: k=" + std::to_string(k) + " invalid for " + std::to_string(points.rows()) + " points");
  if (!points.allFinite()) throw DegenerateInput("GMM: non-finite point");
  GmmModel best;
  bool have = false;
  std::string last_error;
  for (int r = 0; r < std::max(1, opt.n_restarts); ++r) {
    try {
      auto m = detail::gmm_run(points, k, detail::derive_seed(seed, 0x6d6dULL + static_cast<std::uint64_t>(r)), opt);
      if (!have || m.log_likelihood > best.log_likelihood) {
        best = std::move(m);
        have = true;
      }
    } catch (const ClusterDegeneracy& e) {
      last_error = e.what();
    }
  }
  if (!have) throw ClusterDegeneracy("GMM: every restart failed (" + last_error + ")");
  return best;
}

inline GmmModel gmm_fit(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int n_restarts) {
  GmmOptions opt;
  opt.n_restarts = n_restarts;
  return gmm_fit(points, k, seed, opt);
}

/// Free parameters of a k-component full-covariance mixture in d dimensions.
inline double gmm_parameter_count(int k, Eigen::Index d) {
  const double dd = static_cast<double>(d);
  return static_cast<double>(k - 1) + k * dd + k * dd * (dd + 1.0) / 2.0;
}

/// Bayesian information criterion; lower is better.
inline double bic(const GmmModel& m, const Eigen::MatrixXd& points) {
  return -2.0 * gmm_log_likelihood(m, points) + gmm_parameter_count(m.k, points.cols()) * std::log(static_cast<double>(points.rows()));
}

}  // namespace knobforge
