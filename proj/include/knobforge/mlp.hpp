#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "knobforge/detail/rng.hpp"
#include "knobforge/error.hpp"

namespace knobforge {

struct AdamParams {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamParams&, const AdamParams&) = default;
};

/// Five layers in total: input, three ReLU hidden layers, one linear output unit.
struct MlpHyperparams {
  std::vector<int> hidden_widths{64, 64, 64};
  int epochs = 500;
  AdamParams adam;

  friend bool operator==(const MlpHyperparams&, const MlpHyperparams&) = default;
};

inline void validate(const MlpHyperparams& hp) {
  if (hp.hidden_widths.size() != 3) throw InvalidHyperparams("MLP needs exactly 3 hidden layers (5 layers with input and output)");
  for (int w : hp.hidden_widths)
    if (w < 1) throw InvalidHyperparams("MLP hidden widths must be >= 1");
  if (hp.epochs < 0) throw InvalidHyperparams("MLP epochs must be >= 0");
  if (!(hp.adam.learning_rate > 0.0) || !(hp.adam.epsilon > 0.0)) throw InvalidHyperparams("ADAM learning rate and epsilon must be > 0");
  if (!(hp.adam.beta1 >= 0.0 && hp.adam.beta1 < 1.0 && hp.adam.beta2 >= 0.0 && hp.adam.beta2 < 1.0))
    throw InvalidHyperparams("ADAM betas must lie in [0, 1)");
}

/// Fully connected network; weights[l] maps layer l (cols) to layer l+1 (rows).
struct MlpNetwork {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  [[nodiscard]] std::vector<int> widths() const {
    std::vector<int> w;
    if (weights.empty()) return w;
    w.push_back(static_cast<int>(weights.front().cols()));
    for (const auto& m : weights) w.push_back(static_cast<int>(m.rows()));
    return w;
  }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
  }

  [[nodiscard]] std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.insert(out.end(), weights[l].data(), weights[l].data() + weights[l].size());
      out.insert(out.end(), biases[l].data(), biases[l].data() + biases[l].size());
    }
    return out;
  }

  void assign(const std::vector<double>& flat) {
    if (flat.size() != parameter_count()) throw ShapeError("MLP: flat parameter length mismatch");
    std::size_t k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(k), weights[l].size(), weights[l].data());
      k += static_cast<std::size_t>(weights[l].size());
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(k), biases[l].size(), biases[l].data());
      k += static_cast<std::size_t>(biases[l].size());
    }
  }
};

/// He-normal weights, zero biases.
inline MlpNetwork init_network(const std::vector<int>& widths, std::uint64_t seed) {
  auto rng = detail::make_rng(seed, 0x6d6c70ULL);
  MlpNetwork net;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Eigen::MatrixXd w(widths[l + 1], widths[l]);
    const double sd = std::sqrt(2.0 / widths[l]);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = sd * detail::standard_normal(rng);
    net.weights.push_back(std::move(w));
    net.biases.push_back(Eigen::VectorXd::Zero(widths[l + 1]));
  }
  return net;
}

/// Forward pass; returns one prediction per row of x.
inline Eigen::VectorXd mlp_forward(const MlpNetwork& net, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd h = x.transpose();
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    h = (net.weights[l] * h).colwise() + net.biases[l];
    if (l + 1 < net.weights.size()) h = h.cwiseMax(0.0);
  }
  return h.row(0).transpose();
}

/// Fractional MAPE loss mean(|y - yhat| / |y|) and its gradient with respect
/// to every parameter, flattened in MlpNetwork::flatten order.
inline double mlp_loss_and_gradient(const MlpNetwork& net, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                    std::vector<double>* grad) {
  const auto layers = net.weights.size();
  const double n = static_cast<double>(x.rows());
  std::vector<Eigen::MatrixXd> acts{x.transpose()};  // inputs to each layer
  std::vector<Eigen::MatrixXd> pre;
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = (net.weights[l] * acts.back()).colwise() + net.biases[l];
    pre.push_back(z);
    acts.push_back(l + 1 < layers ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z);
  }
  const Eigen::VectorXd pred = acts.back().row(0).transpose();
  const Eigen::ArrayXd err = pred - y;
  const double loss = (err.abs() / y.array().abs()).mean();
  if (!grad) return loss;

  Eigen::MatrixXd delta(1, x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double s = err(i) > 0.0 ? 1.0 : (err(i) < 0.0 ? -1.0 : 0.0);
    delta(0, i) = s / std::abs(y(i)) / n;
  }
  std::vector<Eigen::MatrixXd> gw(layers);
  std::vector<Eigen::VectorXd> gb(layers);
  for (std::size_t l = layers; l-- > 0;) {
    gw[l] = delta * acts[l].transpose();
    gb[l] = delta.rowwise().sum();
    if (l == 0) break;
    delta = net.weights[l].transpose() * delta;
    delta = delta.array() * (pre[l - 1].array() > 0.0).cast<double>();
  }
  grad->clear();
  grad->reserve(net.parameter_count());
  for (std::size_t l = 0; l < layers; ++l) {
    grad->insert(grad->end(), gw[l].data(), gw[l].data() + gw[l].size());
    grad->insert(grad->end(), gb[l].data(), gb[l].data() + gb[l].size());
  }
  return loss;
}

struct MlpModel {
  MlpHyperparams hyperparams;
  MlpNetwork network;
  double target_scale = 1.0;  // the net predicts y / target_scale
  std::vector<double> loss_trace;  // full-batch loss before each epoch's update, then the final loss
};

/// Full-batch ADAM on the MAPE loss. Targets are divided by their mean, which
/// leaves the loss unchanged and puts the output near 1; the output bias starts
/// there.
inline MlpModel mlp_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const MlpHyperparams& hp, std::uint64_t seed) {
  validate(hp);
  if (x.rows() != y.size()) throw ShapeError("MLP: X/y row mismatch");
  if ((y.array() <= 0.0).any()) throw InvalidTarget("MLP targets must be strictly positive (MAPE loss divides by them)");
  MlpModel m;
  m.hyperparams = hp;
  m.target_scale = y.mean();
  std::vector<int> widths{static_cast<int>(x.cols())};
  widths.insert(widths.end(), hp.hidden_widths.begin(), hp.hidden_widths.end());
  widths.push_back(1);
  m.network = init_network(widths, seed);
  m.network.biases.back()(0) = 1.0;
  const Eigen::VectorXd ys = y / m.target_scale;

  auto params = m.network.flatten();
  std::vector<double> mom(params.size(), 0.0), vel(params.size(), 0.0), grad;
  const auto& a = hp.adam;
  double b1t = 1.0, b2t = 1.0;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    m.loss_trace.push_back(mlp_loss_and_gradient(m.network, x, ys, &grad));
    b1t *= a.beta1;
    b2t *= a.beta2;
    for (std::size_t i = 0; i < params.size(); ++i) {
      mom[i] = a.beta1 * mom[i] + (1.0 - a.beta1) * grad[i];
      vel[i] = a.beta2 * vel[i] + (1.0 - a.beta2) * grad[i] * grad[i];
      const double mh = mom[i] / (1.0 - b1t);
      const double vh = vel[i] / (1.0 - b2t);
      params[i] -= a.learning_rate * mh / (std::sqrt(vh) + a.epsilon);
    }
    m.network.assign(params);
  }
  m.loss_trace.push_back(mlp_loss_and_gradient(m.network, x, ys, nullptr));
  return m;
}

inline Eigen::VectorXd mlp_predict(const MlpModel& m, const Eigen::MatrixXd& xq) {
  const auto d = m.network.weights.front().cols();
  if (xq.cols() != d) throw ShapeError("MLP: query has " + std::to_string(xq.cols()) + " features, model has " + std::to_string(d));
  return mlp_forward(m.network, xq) * m.target_scale;
}

}  // namespace knobforge
