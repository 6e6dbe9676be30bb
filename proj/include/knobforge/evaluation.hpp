#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "knobforge/detail/format.hpp"
#include "knobforge/error.hpp"
#include "knobforge/table.hpp"

namespace knobforge {

/// Mean absolute percentage error, in percent.
inline double mape(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
  if (y_true.size() != y_pred.size()) throw ShapeError("mape: length mismatch");
  if (y_true.size() == 0) throw ShapeError("mape: empty input");
  if ((y_true.array() == 0.0).any()) throw UndefinedMape("mape: y_true contains 0");
  return 100.0 * ((y_true - y_pred).array().abs() / y_true.array().abs()).mean();
}

inline double mse(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
  if (y_true.size() != y_pred.size()) throw ShapeError("mse: length mismatch");
  if (y_true.size() == 0) throw ShapeError("mse: empty input");
  return (y_true - y_pred).array().square().mean();
}

struct EvalRow {
  std::string id;
  double y_true = 0.0;
  double y_pred = 0.0;
  double abs_pct_err = 0.0;  // percent

  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

struct EvalReport {
  std::optional<double> mape;  // empty when n == 0
  std::optional<double> mse;
  std::size_t n = 0;
  std::vector<EvalRow> per_row;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline EvalReport make_report(const std::vector<std::string>& ids, const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
  if (ids.size() != static_cast<std::size_t>(y_true.size()) || y_true.size() != y_pred.size())
    throw ShapeError("make_report: ids, y_true and y_pred differ in length");
  EvalReport r;
  r.n = ids.size();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (y_true(ii) == 0.0) throw UndefinedMape("row '" + ids[i] + "': y_true is 0");
    r.per_row.push_back({ids[i], y_true(ii), y_pred(ii), 100.0 * std::abs(y_true(ii) - y_pred(ii)) / std::abs(y_true(ii))});
  }
  if (r.n > 0) {
    r.mape = mape(y_true, y_pred);
    r.mse = mse(y_true, y_pred);
  }
  return r;
}

inline EvalReport make_report(const std::vector<EvalRow>& rows) {
  std::vector<std::string> ids;
  Eigen::VectorXd yt(static_cast<Eigen::Index>(rows.size())), yp(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ids.push_back(rows[i].id);
    yt(static_cast<Eigen::Index>(i)) = rows[i].y_true;
    yp(static_cast<Eigen::Index>(i)) = rows[i].y_pred;
  }
  return make_report(ids, yt, yp);
}

[[nodiscard]] inline bool is_finite(const EvalReport& r) {
  return (!r.mape || std::isfinite(*r.mape)) && (!r.mse || std::isfinite(*r.mse));
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : r.per_row) rows.push_back({{"id", e.id}, {"y_true", e.y_true}, {"y_pred", e.y_pred}, {"abs_pct_err", e.abs_pct_err}});
  nlohmann::json j = {{"n", r.n}, {"rows", rows}};
  j["mape"] = r.mape ? nlohmann::json(*r.mape) : nlohmann::json(nullptr);
  j["mse"] = r.mse ? nlohmann::json(*r.mse) : nlohmann::json(nullptr);
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.n = j.at("n").get<std::size_t>();
  if (!j.at("mape").is_null()) r.mape = j.at("mape").get<double>();
  if (!j.at("mse").is_null()) r.mse = j.at("mse").get<double>();
  for (const auto& e : j.at("rows"))
    r.per_row.push_back({e.at("id").get<std::string>(), e.at("y_true").get<double>(), e.at("y_pred").get<double>(), e.at("abs_pct_err").get<double>()});
  if (r.per_row.size() != r.n) throw SchemaError("report: n disagrees with row count");
  return r;
}

inline void write_report_csv(std::ostream& out, const EvalReport& r) {
  out << "id,y_true,y_pred,abs_pct_err\n";
  for (const auto& e : r.per_row)
    out << e.id << ',' << detail::format_double(e.y_true) << ',' << detail::format_double(e.y_pred) << ','
        << detail::format_double(e.abs_pct_err) << '\n';
}

/// Reads "id,y_true,y_pred[,abs_pct_err]" rows and recomputes the aggregates.
inline EvalReport read_report_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("report CSV: missing header");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "y_true" || header[2] != "y_pred")
    throw ParseError("report CSV: header must start with id,y_true,y_pred");
  std::vector<EvalRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) throw ParseError("report CSV line " + std::to_string(line_no) + ": wrong field count");
    EvalRow e;
    e.id = cells[0];
    if (!detail::parse_double(cells[1], e.y_true) || !detail::parse_double(cells[2], e.y_pred))
      throw ParseError("report CSV line " + std::to_string(line_no) + ": non-numeric value");
    rows.push_back(std::move(e));
  }
  return make_report(rows);
}

enum class ReportFormat { Json, Csv };

inline void emit_report(const EvalReport& r, ReportFormat format, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write report: " + path.string());
  if (format == ReportFormat::Json) out << to_json(r).dump(2) << '\n';
  else write_report_csv(out, r);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace knobforge
