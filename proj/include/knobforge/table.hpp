#pragma once

// Workload observation tables: CSV ingestion, constant-column removal and
// holdout splitting.

#include <Eigen/Dense>
#include <algorithm>
#include <compare>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "knobforge/detail/format.hpp"
#include "knobforge/error.hpp"

namespace knobforge {

enum class ColumnKind { Knob, Metric, Latency };
enum class Encoding { Numeric, BooleanEncoded };

inline std::string_view to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::Knob: return "knob";
    case ColumnKind::Metric: return "metric";
    case ColumnKind::Latency: return "latency";
  }
  return "?";
}

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::Metric;
  Encoding encoding = Encoding::Numeric;

  friend bool operator==(const ColumnSchema&, const ColumnSchema&) = default;
};

using Schema = std::vector<ColumnSchema>;

/// Where a row came from: the workload it was read under and its 0-based
/// data-row index within that workload in file order.
struct RowOrigin {
  std::string workload_id;
  std::size_t row = 0;

  friend auto operator<=>(const RowOrigin&, const RowOrigin&) = default;
  friend bool operator==(const RowOrigin&, const RowOrigin&) = default;
};

struct WorkloadTable {
  std::string workload_id;
  Schema schema;
  Eigen::MatrixXd values;  // rows = observations, columns = schema order
  std::vector<RowOrigin> origins;

  [[nodiscard]] Eigen::Index rows() const { return values.rows(); }
  [[nodiscard]] Eigen::Index cols() const { return values.cols(); }

  [[nodiscard]] std::optional<Eigen::Index> find_column(std::string_view name) const {
    for (std::size_t i = 0; i < schema.size(); ++i)
      if (schema[i].name == name) return static_cast<Eigen::Index>(i);
    return std::nullopt;
  }

  [[nodiscard]] Eigen::Index column_index(std::string_view name) const {
    if (auto i = find_column(name)) return *i;
    throw SchemaError("workload '" + workload_id + "': no column named '" + std::string(name) + "'");
  }

  [[nodiscard]] std::optional<Eigen::Index> latency_index() const {
    for (std::size_t i = 0; i < schema.size(); ++i)
      if (schema[i].kind == ColumnKind::Latency) return static_cast<Eigen::Index>(i);
    return std::nullopt;
  }

  [[nodiscard]] Eigen::VectorXd latency() const {
    auto i = latency_index();
    if (!i) throw SchemaError("workload '" + workload_id + "' has no latency column");
    return values.col(*i);
  }

  [[nodiscard]] std::vector<std::string> names_of(ColumnKind kind) const {
    std::vector<std::string> out;
    for (const auto& c : schema)
      if (c.kind == kind) out.push_back(c.name);
    return out;
  }

  /// Columns in the requested order, as an observation-by-column matrix.
  [[nodiscard]] Eigen::MatrixXd select(std::span<const std::string> names) const {
    Eigen::MatrixXd out(rows(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = values.col(column_index(names[j]));
    return out;
  }

  [[nodiscard]] WorkloadTable take_rows(std::span<const Eigen::Index> idx) const {
    WorkloadTable t{workload_id, schema, Eigen::MatrixXd(static_cast<Eigen::Index>(idx.size()), cols()), {}};
    t.origins.reserve(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      t.values.row(static_cast<Eigen::Index>(r)) = values.row(idx[r]);
      t.origins.push_back(origins[static_cast<std::size_t>(idx[r])]);
    }
    return t;
  }
};

struct WorkloadRepository {
  Schema schema;
  std::map<std::string, WorkloadTable> tables;  // ordered by workload id

  [[nodiscard]] bool empty() const { return tables.empty(); }
  [[nodiscard]] std::size_t size() const { return tables.size(); }

  [[nodiscard]] const WorkloadTable& at(const std::string& id) const {
    auto it = tables.find(id);
    if (it == tables.end()) throw KeyError("unknown workload '" + id + "'");
    return it->second;
  }

  [[nodiscard]] std::vector<std::string> names_of(ColumnKind kind) const {
    std::vector<std::string> out;
    for (const auto& c : schema)
      if (c.kind == kind) out.push_back(c.name);
    return out;
  }

  /// All rows of all tables stacked in workload-id order.
  [[nodiscard]] Eigen::MatrixXd stacked(std::span<const std::string> names) const {
    Eigen::Index total = 0;
    for (const auto& [_, t] : tables) total += t.rows();
    Eigen::MatrixXd out(total, static_cast<Eigen::Index>(names.size()));
    Eigen::Index r = 0;
    for (const auto& [_, t] : tables) {
      out.middleRows(r, t.rows()) = t.select(names);
      r += t.rows();
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Schema hints

enum class HintKind { Knob, Metric, Latency, Id };

struct SchemaHint {
  std::map<std::string, HintKind, std::less<>> kinds;
};

inline SchemaHint parse_schema_hint(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("schema hint must be a JSON object of column -> kind");
  SchemaHint hint;
  for (const auto& [name, kind] : j.items()) {
    if (!kind.is_string()) throw SchemaError("schema hint for '" + name + "' must be a string");
    const auto k = kind.get<std::string>();
    if (k == "knob") hint.kinds[name] = HintKind::Knob;
    else if (k == "metric") hint.kinds[name] = HintKind::Metric;
    else if (k == "latency") hint.kinds[name] = HintKind::Latency;
    else if (k == "id") hint.kinds[name] = HintKind::Id;
    else throw SchemaError("schema hint for '" + name + "': unknown kind '" + k + "'");
  }
  return hint;
}

inline SchemaHint load_schema_hint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema hint file: " + path.string());
  try {
    return parse_schema_hint(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

inline nlohmann::json to_json(const SchemaHint& hint) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, k] : hint.kinds) {
    switch (k) {
      case HintKind::Knob: j[name] = "knob"; break;
      case HintKind::Metric: j[name] = "metric"; break;
      case HintKind::Latency: j[name] = "latency"; break;
      case HintKind::Id: j[name] = "id"; break;
    }
  }
  return j;
}

// ---------------------------------------------------------------------------
// CSV ingestion

struct LoadOptions {
  bool require_latency = true;
};

namespace detail {

struct RawFile {
  std::filesystem::path path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> cells;
  std::vector<std::size_t> line_numbers;
};

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline RawFile read_raw_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  RawFile f{path, {}, {}, {}};
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (!have_header) {
      f.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != f.header.size())
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(f.header.size()) + " fields, found " + std::to_string(cells.size()));
    f.cells.push_back(std::move(cells));
    f.line_numbers.push_back(line_no);
  }
  if (!have_header) throw ParseError(path.string() + ": empty file (no header row)");
  return f;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::optional<double> boolean_value(std::string_view cell) {
  const auto s = lower(cell);
  if (s == "true" || s == "1" || s == "on") return 1.0;
  if (s == "false" || s == "0" || s == "off") return 0.0;
  return std::nullopt;
}

}  // namespace detail

/// Reads one or more CSV files into a repository with one table per workload id.
/// Every file must carry the same header. The workload id column is the one
/// hinted as "id", else a column named "workload_id", else the file stem.
inline WorkloadRepository load_repository(std::span<const std::filesystem::path> paths, const SchemaHint& hint,
                                          LoadOptions options = {}) {
  if (paths.empty()) return {};
  std::vector<detail::RawFile> files;
  files.reserve(paths.size());
  for (const auto& p : paths) files.push_back(detail::read_raw_csv(p));

  const auto& header = files.front().header;
  for (const auto& f : files)
    if (f.header != header)
      throw SchemaError(f.path.string() + ": header differs from " + files.front().path.string());
  {
    std::set<std::string> seen;
    for (const auto& h : header)
      if (!seen.insert(h).second) throw SchemaError("duplicate column name '" + h + "'");
  }

  std::optional<std::size_t> id_col;
  Schema schema;
  std::vector<std::size_t> data_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    auto it = hint.kinds.find(header[c]);
    if (it == hint.kinds.end()) {
      if (header[c] == "workload_id" && !id_col) {
        id_col = c;
        continue;
      }
      throw SchemaError("column '" + header[c] + "' has no kind in the schema hint");
    }
    switch (it->second) {
      case HintKind::Id:
        if (id_col) throw SchemaError("more than one id column");
        id_col = c;
        continue;
      case HintKind::Knob: schema.push_back({header[c], ColumnKind::Knob}); break;
      case HintKind::Metric: schema.push_back({header[c], ColumnKind::Metric}); break;
      case HintKind::Latency: schema.push_back({header[c], ColumnKind::Latency}); break;
    }
    data_cols.push_back(c);
  }
  const auto n_latency = std::count_if(schema.begin(), schema.end(),
                                       [](const ColumnSchema& s) { return s.kind == ColumnKind::Latency; });
  if (n_latency > 1) throw SchemaError("more than one latency column");
  if (n_latency == 0 && options.require_latency) throw SchemaError("missing latency column");

  // Boolean detection runs over every file so the encoding is repository-wide.
  for (std::size_t s = 0; s < schema.size(); ++s) {
    if (schema[s].kind == ColumnKind::Latency) continue;
    bool all_bool = true;
    bool any = false;
    for (const auto& f : files) {
      for (const auto& row : f.cells) {
        any = true;
        if (!detail::boolean_value(row[data_cols[s]])) {
          all_bool = false;
          break;
        }
      }
      if (!all_bool) break;
    }
    if (any && all_bool) schema[s].encoding = Encoding::BooleanEncoded;
  }

  WorkloadRepository repo;
  repo.schema = schema;
  std::map<std::string, std::vector<std::vector<double>>> rows_by_id;
  for (const auto& f : files) {
    for (std::size_t r = 0; r < f.cells.size(); ++r) {
      const auto& row = f.cells[r];
      const auto where = f.path.string() + ":" + std::to_string(f.line_numbers[r]);
      std::string id = id_col ? row[*id_col] : f.path.stem().string();
      if (id.empty()) throw ParseError(where + ": empty workload id");
      std::vector<double> vals(schema.size());
      for (std::size_t s = 0; s < schema.size(); ++s) {
        const auto& cell = row[data_cols[s]];
        if (schema[s].encoding == Encoding::BooleanEncoded) {
          vals[s] = *detail::boolean_value(cell);
        } else if (!detail::parse_double(cell, vals[s])) {
          throw ParseError(where + ": column '" + schema[s].name + "': not a finite number: '" + cell + "'");
        }
        if (schema[s].kind == ColumnKind::Latency && !(vals[s] > 0.0))
          throw ParseError(where + ": latency must be strictly positive, got " + cell);
      }
      rows_by_id[id].push_back(std::move(vals));
    }
  }
  for (auto& [id, rows] : rows_by_id) {
    WorkloadTable t{id, schema, Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(schema.size())), {}};
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < schema.size(); ++c)
        t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      t.origins.push_back({id, r});
    }
    repo.tables.emplace(id, std::move(t));
  }
  return repo;
}

inline WorkloadRepository load_repository(const std::vector<std::filesystem::path>& paths, const SchemaHint& hint,
                                          LoadOptions options = {}) {
  return load_repository(std::span<const std::filesystem::path>(paths), hint, options);
}

/// Writes tables in the layout load_repository reads (workload_id first).
inline void write_csv(std::ostream& out, std::span<const WorkloadTable> tables) {
  if (tables.empty()) return;
  out << "workload_id";
  for (const auto& c : tables.front().schema) out << ',' << c.name;
  out << '\n';
  for (const auto& t : tables) {
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      out << t.workload_id;
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        out << ',';
        if (t.schema[static_cast<std::size_t>(c)].encoding == Encoding::BooleanEncoded)
          out << (t.values(r, c) != 0.0 ? "true" : "false");
        else
          out << detail::format_double(t.values(r, c));
      }
      out << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Preprocessing

inline WorkloadRepository drop_columns(const WorkloadRepository& repo, std::span<const std::string> names) {
  std::set<std::string, std::less<>> drop(names.begin(), names.end());
  std::vector<Eigen::Index> keep;
  Schema schema;
  for (std::size_t c = 0; c < repo.schema.size(); ++c) {
    if (drop.contains(repo.schema[c].name)) continue;
    keep.push_back(static_cast<Eigen::Index>(c));
    schema.push_back(repo.schema[c]);
  }
  WorkloadRepository out;
  out.schema = schema;
  for (const auto& [id, t] : repo.tables) {
    WorkloadTable nt{t.workload_id, schema, Eigen::MatrixXd(t.rows(), static_cast<Eigen::Index>(keep.size())), t.origins};
    for (std::size_t j = 0; j < keep.size(); ++j) nt.values.col(static_cast<Eigen::Index>(j)) = t.values.col(keep[j]);
    out.tables.emplace(id, std::move(nt));
  }
  return out;
}

/// Removes columns holding one identical value across every row of every
/// table. The latency column is always kept.
inline std::pair<WorkloadRepository, std::vector<std::string>> drop_constant_columns(const WorkloadRepository& repo) {
  if (repo.empty()) throw InsufficientRows("drop_constant_columns: repository is empty");
  std::vector<std::string> dropped;
  for (std::size_t c = 0; c < repo.schema.size(); ++c) {
    if (repo.schema[c].kind == ColumnKind::Latency) continue;
    std::optional<double> first;
    bool constant = true;
    for (const auto& [_, t] : repo.tables) {
      for (Eigen::Index r = 0; r < t.rows() && constant; ++r) {
        const double v = t.values(r, static_cast<Eigen::Index>(c));
        if (!first) first = v;
        else if (v != *first) constant = false;
      }
      if (!constant) break;
    }
    if (constant) dropped.push_back(repo.schema[c].name);
  }
  return {drop_columns(repo, dropped), dropped};
}

struct HoldoutSplit {
  WorkloadTable mapping_rows;
  WorkloadTable validation_rows;
};

/// First `n_map_rows` rows (file order) for mapping, the rest for validation.
inline HoldoutSplit split_holdout(const WorkloadTable& table, std::size_t n_map_rows) {
  const auto n = static_cast<std::size_t>(table.rows());
  if (n <= n_map_rows)
    throw InsufficientRows("workload '" + table.workload_id + "' has " + std::to_string(n) +
                           " rows; need more than " + std::to_string(n_map_rows));
  std::vector<Eigen::Index> head(n_map_rows), tail(n - n_map_rows);
  for (std::size_t i = 0; i < n; ++i) (i < n_map_rows ? head[i] : tail[i - n_map_rows]) = static_cast<Eigen::Index>(i);
  return {table.take_rows(head), table.take_rows(tail)};
}

/// Stacks tables that share a schema into one table with the given id.
inline WorkloadTable concat_tables(std::string id, std::span<const WorkloadTable> parts) {
  if (parts.empty()) return {std::move(id), {}, Eigen::MatrixXd(0, 0), {}};
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    if (p.schema != parts.front().schema || p.cols() != parts.front().cols())
      throw SchemaError("concat_tables: schema mismatch for '" + p.workload_id + "'");
    total += p.rows();
  }
  WorkloadTable out{std::move(id), parts.front().schema, Eigen::MatrixXd(total, parts.front().cols()), {}};
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.values.middleRows(r, p.rows()) = p.values;
    out.origins.insert(out.origins.end(), p.origins.begin(), p.origins.end());
    r += p.rows();
  }
  return out;
}

}  // namespace knobforge
