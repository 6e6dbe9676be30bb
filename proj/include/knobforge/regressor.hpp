#pragma once

// One fit/predict contract over the three latency regressors, plus the
// versioned JSON model document.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "knobforge/error.hpp"
#include "knobforge/forest.hpp"
#include "knobforge/gpr.hpp"
#include "knobforge/mlp.hpp"

namespace knobforge {

enum class RegressorKind { Gpr, RandomForest, Mlp };

inline std::string_view to_string(RegressorKind k) {
  switch (k) {
    case RegressorKind::Gpr: return "gpr";
    case RegressorKind::RandomForest: return "rf";
    case RegressorKind::Mlp: return "nn";
  }
  return "?";
}

inline RegressorKind parse_regressor(std::string_view s) {
  if (s == "gpr") return RegressorKind::Gpr;
  if (s == "rf") return RegressorKind::RandomForest;
  if (s == "nn" || s == "mlp") return RegressorKind::Mlp;
  throw ConfigError("unknown model '" + std::string(s) + "' (expected gpr|rf|nn)");
}

struct RegressorSpec {
  RegressorKind kind = RegressorKind::Gpr;
  GprHyperparams gpr;
  RfHyperparams rf;
  MlpHyperparams mlp;
  std::uint64_t seed = 0;

  friend bool operator==(const RegressorSpec&, const RegressorSpec&) = default;
};

inline void validate(const RegressorSpec& spec) {
  switch (spec.kind) {
    case RegressorKind::Gpr: validate(spec.gpr); break;
    case RegressorKind::RandomForest: validate(spec.rf); break;
    case RegressorKind::Mlp: validate(spec.mlp); break;
  }
}

struct TrainedRegressor {
  RegressorSpec spec;
  std::vector<std::string> feature_names;
  std::variant<GprModel, ForestModel, MlpModel> state;

  [[nodiscard]] Eigen::Index n_features() const { return static_cast<Eigen::Index>(feature_names.size()); }
};

inline TrainedRegressor fit(const RegressorSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            std::vector<std::string> feature_names = {}) {
  validate(spec);
  if (x.rows() != y.size()) throw ShapeError("fit: X has " + std::to_string(x.rows()) + " rows, y has " + std::to_string(y.size()));
  if (x.rows() < 2) throw InsufficientRows("fit needs at least 2 rows");
  if (!x.allFinite() || !y.allFinite()) throw NumericalError("fit: non-finite input");
  if (feature_names.empty())
    for (Eigen::Index j = 0; j < x.cols(); ++j) feature_names.push_back("x" + std::to_string(j));
  if (static_cast<Eigen::Index>(feature_names.size()) != x.cols()) throw ShapeError("fit: feature name count mismatch");

  TrainedRegressor out{spec, std::move(feature_names), GprModel{}};
  switch (spec.kind) {
    case RegressorKind::Gpr: out.state = gpr_fit(x, y, spec.gpr); break;
    case RegressorKind::RandomForest: out.state = forest_fit(x, y, spec.rf, spec.seed); break;
    case RegressorKind::Mlp: out.state = mlp_fit(x, y, spec.mlp, spec.seed); break;
  }
  return out;
}

inline Eigen::VectorXd predict(const TrainedRegressor& model, const Eigen::MatrixXd& xq) {
  if (xq.cols() != model.n_features())
    throw ShapeError("predict: got " + std::to_string(xq.cols()) + " features, model expects " + std::to_string(model.n_features()));
  return std::visit(
      [&](const auto& m) -> Eigen::VectorXd {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, GprModel>) return gpr_predict(m, xq);
        else if constexpr (std::is_same_v<T, ForestModel>) return forest_predict(m, xq);
        else return mlp_predict(m, xq);
      },
      model.state);
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};  // column-major
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto r = j.at("rows").get<Eigen::Index>();
  const auto c = j.at("cols").get<Eigen::Index>();
  const auto d = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(d.size()) != r * c) throw ShapeError("model file: matrix data length mismatch");
  return Eigen::Map<const Eigen::MatrixXd>(d.data(), r, c);
}

inline nlohmann::json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto d = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
}

}  // namespace detail

inline nlohmann::json to_json(const RegressorSpec& s) {
  return {{"model", std::string(to_string(s.kind))},
          {"seed", s.seed},
          {"gpr", {{"alpha", s.gpr.alpha}, {"length_scale", s.gpr.length_scale}, {"signal_variance", s.gpr.signal_variance}, {"optimize_kernel", s.gpr.optimize_kernel}}},
          {"rf", {{"n_trees", s.rf.n_trees}, {"max_depth", s.rf.max_depth}, {"min_samples_split", s.rf.min_samples_split}, {"bootstrap", s.rf.bootstrap}}},
          {"nn",
           {{"hidden_widths", s.mlp.hidden_widths},
            {"epochs", s.mlp.epochs},
            {"learning_rate", s.mlp.adam.learning_rate},
            {"beta1", s.mlp.adam.beta1},
            {"beta2", s.mlp.adam.beta2},
            {"epsilon", s.mlp.adam.epsilon}}}};
}

/// Reads a spec; absent fields keep their defaults.
inline RegressorSpec regressor_spec_from_json(const nlohmann::json& j, RegressorSpec s = {}) {
  try {
    if (j.contains("model")) s.kind = parse_regressor(j.at("model").get<std::string>());
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("gpr")) {
      const auto& g = j.at("gpr");
      s.gpr.alpha = g.value("alpha", s.gpr.alpha);
      s.gpr.length_scale = g.value("length_scale", s.gpr.length_scale);
      s.gpr.signal_variance = g.value("signal_variance", s.gpr.signal_variance);
      s.gpr.optimize_kernel = g.value("optimize_kernel", s.gpr.optimize_kernel);
    }
    if (j.contains("rf")) {
      const auto& r = j.at("rf");
      s.rf.n_trees = r.value("n_trees", s.rf.n_trees);
      s.rf.max_depth = r.value("max_depth", s.rf.max_depth);
      s.rf.min_samples_split = r.value("min_samples_split", s.rf.min_samples_split);
      s.rf.bootstrap = r.value("bootstrap", s.rf.bootstrap);
    }
    if (j.contains("nn")) {
      const auto& n = j.at("nn");
      s.mlp.hidden_widths = n.value("hidden_widths", s.mlp.hidden_widths);
      s.mlp.epochs = n.value("epochs", s.mlp.epochs);
      s.mlp.adam.learning_rate = n.value("learning_rate", s.mlp.adam.learning_rate);
      s.mlp.adam.beta1 = n.value("beta1", s.mlp.adam.beta1);
      s.mlp.adam.beta2 = n.value("beta2", s.mlp.adam.beta2);
      s.mlp.adam.epsilon = n.value("epsilon", s.mlp.adam.epsilon);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("regressor spec: ") + e.what());
  }
  return s;
}

inline nlohmann::json to_json(const TrainedRegressor& m) {
  nlohmann::json state;
  if (const auto* g = std::get_if<GprModel>(&m.state)) {
    state = {{"length_scale", g->hyperparams.length_scale},
             {"signal_variance", g->hyperparams.signal_variance},
             {"alpha", g->hyperparams.alpha},
             {"x_train", detail::matrix_json(g->x_train)},
             {"dual_weights", detail::vector_json(g->dual_weights)},
             {"cholesky_l", detail::matrix_json(g->cholesky_l)},
             {"y_mean", g->y_mean},
             {"log_marginal_likelihood", g->log_marginal_likelihood}};
  } else if (const auto* f = std::get_if<ForestModel>(&m.state)) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : f->trees) {
      std::vector<int> feature, left, right;
      std::vector<double> threshold, value;
      for (const auto& n : t.nodes) {
        feature.push_back(n.feature);
        left.push_back(n.left);
        right.push_back(n.right);
        threshold.push_back(n.threshold);
        value.push_back(n.value);
      }
      trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"value", value}});
    }
    state = {{"n_features", f->n_features}, {"trees", trees}};
  } else {
    const auto& n = std::get<MlpModel>(m.state);
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < n.network.weights.size(); ++l)
      layers.push_back({{"weights", detail::matrix_json(n.network.weights[l])}, {"bias", detail::vector_json(n.network.biases[l])}});
    state = {{"target_scale", n.target_scale}, {"layers", layers}};
  }
  return {{"format", "knobforge-model"},
          {"version", kModelFormatVersion},
          {"spec", to_json(m.spec)},
          {"feature_names", m.feature_names},
          {"state", state}};
}

inline TrainedRegressor regressor_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string{}) != "knobforge-model") throw ConfigError("not a knobforge model document");
    if (j.at("version").get<int>() != kModelFormatVersion)
      throw ConfigError("unsupported model format version " + j.at("version").dump());
    TrainedRegressor m;
    m.spec = regressor_spec_from_json(j.at("spec"));
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    const auto& s = j.at("state");
    switch (m.spec.kind) {
      case RegressorKind::Gpr: {
        GprModel g;
        g.hyperparams = m.spec.gpr;
        g.hyperparams.length_scale = s.at("length_scale").get<double>();
        g.hyperparams.signal_variance = s.at("signal_variance").get<double>();
        g.hyperparams.alpha = s.at("alpha").get<double>();
        g.x_train = detail::matrix_from_json(s.at("x_train"));
        g.dual_weights = detail::vector_from_json(s.at("dual_weights"));
        g.cholesky_l = detail::matrix_from_json(s.at("cholesky_l"));
        g.y_mean = s.at("y_mean").get<double>();
        g.log_marginal_likelihood = s.at("log_marginal_likelihood").get<double>();
        m.state = std::move(g);
        break;
      }
      case RegressorKind::RandomForest: {
        ForestModel f;
        f.hyperparams = m.spec.rf;
        f.n_features = s.at("n_features").get<Eigen::Index>();
        for (const auto& t : s.at("trees")) {
          const auto feature = t.at("feature").get<std::vector<int>>();
          const auto threshold = t.at("threshold").get<std::vector<double>>();
          const auto left = t.at("left").get<std::vector<int>>();
          const auto right = t.at("right").get<std::vector<int>>();
          const auto value = t.at("value").get<std::vector<double>>();
          RegressionTree tree;
          for (std::size_t i = 0; i < feature.size(); ++i) tree.nodes.push_back({feature[i], threshold.at(i), left.at(i), right.at(i), value.at(i)});
          f.trees.push_back(std::move(tree));
        }
        m.state = std::move(f);
        break;
      }
      case RegressorKind::Mlp: {
        MlpModel n;
        n.hyperparams = m.spec.mlp;
        n.target_scale = s.at("target_scale").get<double>();
        for (const auto& l : s.at("layers")) {
          n.network.weights.push_back(detail::matrix_from_json(l.at("weights")));
          n.network.biases.push_back(detail::vector_from_json(l.at("bias")));
        }
        m.state = std::move(n);
        break;
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model document: ") + e.what());
  }
}

}  // namespace knobforge
