#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "knobforge/error.hpp"
#include "knobforge/table.hpp"

namespace knobforge {

/// Per-column standardization parameters (population standard deviation).
struct ScalerParams {
  std::vector<std::string> columns;
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;

  friend bool operator==(const ScalerParams& a, const ScalerParams& b) {
    return a.columns == b.columns && a.mean == b.mean && a.stddev == b.stddev;
  }

  /// Standardizes a matrix whose columns are `columns` in order.
  [[nodiscard]] Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const {
    if (x.cols() != mean.size()) throw ShapeError("scaler expects " + std::to_string(mean.size()) + " columns");
    Eigen::MatrixXd out = x.rowwise() - mean.transpose();
    for (Eigen::Index c = 0; c < out.cols(); ++c)
      if (stddev(c) > 0.0) out.col(c) /= stddev(c);
    return out;
  }

  [[nodiscard]] Eigen::MatrixXd inverse_transform(const Eigen::MatrixXd& z) const {
    if (z.cols() != mean.size()) throw ShapeError("scaler expects " + std::to_string(mean.size()) + " columns");
    Eigen::MatrixXd out = z;
    for (Eigen::Index c = 0; c < out.cols(); ++c)
      if (stddev(c) > 0.0) out.col(c) *= stddev(c);
    return out.rowwise() + mean.transpose();
  }
};

inline ScalerParams fit_scaler(std::span<const WorkloadTable> tables, std::span<const std::string> columns) {
  Eigen::Index n = 0;
  for (const auto& t : tables) {
    for (const auto& name : columns)
      if (t.schema[static_cast<std::size_t>(t.column_index(name))].kind == ColumnKind::Latency)
        throw ScalerScopeError("latency column '" + name + "' must not be scaled");
    n += t.rows();
  }
  if (n < 2) throw InsufficientRows("fit_scaler needs at least 2 rows, got " + std::to_string(n));

  const auto d = static_cast<Eigen::Index>(columns.size());
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
  for (const auto& t : tables) sum += t.select(columns).colwise().sum().transpose();
  const Eigen::VectorXd mean = sum / static_cast<double>(n);
  Eigen::VectorXd ss = Eigen::VectorXd::Zero(d);
  for (const auto& t : tables)
    ss += (t.select(columns).rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
  return {std::vector<std::string>(columns.begin(), columns.end()), mean, (ss / static_cast<double>(n)).cwiseSqrt()};
}

inline ScalerParams fit_scaler(const std::vector<WorkloadTable>& tables, const std::vector<std::string>& columns) {
  return fit_scaler(std::span<const WorkloadTable>(tables), std::span<const std::string>(columns));
}

/// Returns a copy of `table` with the scaler's columns standardized in place;
/// other columns (latency included) pass through untouched.
inline WorkloadTable apply_scaler(const ScalerParams& params, const WorkloadTable& table) {
  WorkloadTable out = table;
  for (std::size_t j = 0; j < params.columns.size(); ++j) {
    const auto c = out.column_index(params.columns[j]);
    const auto jj = static_cast<Eigen::Index>(j);
    out.values.col(c).array() -= params.mean(jj);
    if (params.stddev(jj) > 0.0) out.values.col(c) /= params.stddev(jj);
  }
  return out;
}

inline WorkloadTable invert_scaler(const ScalerParams& params, const WorkloadTable& table) {
  WorkloadTable out = table;
  for (std::size_t j = 0; j < params.columns.size(); ++j) {
    const auto c = out.column_index(params.columns[j]);
    const auto jj = static_cast<Eigen::Index>(j);
    if (params.stddev(jj) > 0.0) out.values.col(c) *= params.stddev(jj);
    out.values.col(c).array() += params.mean(jj);
  }
  return out;
}

inline nlohmann::json to_json(const ScalerParams& s) {
  return {{"columns", s.columns},
          {"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
          {"stddev", std::vector<double>(s.stddev.data(), s.stddev.data() + s.stddev.size())}};
}

inline ScalerParams scaler_from_json(const nlohmann::json& j) {
  ScalerParams s;
  s.columns = j.at("columns").get<std::vector<std::string>>();
  const auto m = j.at("mean").get<std::vector<double>>();
  const auto sd = j.at("stddev").get<std::vector<double>>();
  if (m.size() != s.columns.size() || sd.size() != s.columns.size()) throw ShapeError("scaler arrays disagree in length");
  s.mean = Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
  s.stddev = Eigen::Map<const Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
  return s;
}

}  // namespace knobforge
