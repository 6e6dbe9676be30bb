#pragma once

// Workload mapping: score every repository workload against a target, pick the
// closest, and merge its observations into the target's.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "knobforge/error.hpp"
#include "knobforge/factor.hpp"
#include "knobforge/scaler.hpp"
#include "knobforge/table.hpp"

namespace knobforge {

enum class MappingDistance { Euclidean, Mape };

inline std::string_view to_string(MappingDistance d) { return d == MappingDistance::Euclidean ? "euclidean" : "mape"; }

inline MappingDistance parse_distance(std::string_view s) {
  if (s == "euclidean") return MappingDistance::Euclidean;
  if (s == "mape") return MappingDistance::Mape;
  throw ConfigError("unknown distance '" + std::string(s) + "' (expected euclidean|mape)");
}

struct WorkloadScore {
  std::string source_id;
  double score = 0.0;
};

struct MappingResult {
  std::string target_id;
  std::vector<WorkloadScore> scores;  // ascending by score, ties by source id
  std::string chosen;
};

namespace detail {

inline Eigen::MatrixXd scaled_columns(const WorkloadTable& t, std::span<const std::string> names, const ScalerParams& scaler) {
  Eigen::MatrixXd out = t.select(names);
  for (std::size_t j = 0; j < names.size(); ++j) {
    auto it = std::find(scaler.columns.begin(), scaler.columns.end(), names[j]);
    if (it == scaler.columns.end()) throw SchemaError("scaler does not cover column '" + names[j] + "'");
    const auto s = static_cast<Eigen::Index>(it - scaler.columns.begin());
    const auto c = static_cast<Eigen::Index>(j);
    out.col(c).array() -= scaler.mean(s);
    if (scaler.stddev(s) > 0.0) out.col(c) /= scaler.stddev(s);
  }
  return out;
}

}  // namespace detail

/// For each target row, the index of the source row nearest in scaled knob
/// space (exact matches have distance 0; lowest index wins ties). Without knob
/// columns rows pair up by position.
inline std::vector<Eigen::Index> align_rows(const WorkloadTable& target, const WorkloadTable& source, const ScalerParams& scaler) {
  if (source.rows() == 0) throw AlignmentError("source '" + source.workload_id + "' has no rows");
  const auto knobs = target.names_of(ColumnKind::Knob);
  std::vector<Eigen::Index> out(static_cast<std::size_t>(target.rows()));
  if (knobs.empty()) {
    if (source.rows() < target.rows())
      throw AlignmentError("source '" + source.workload_id + "' has fewer rows than target '" + target.workload_id + "' and no knobs to align on");
    for (Eigen::Index r = 0; r < target.rows(); ++r) out[static_cast<std::size_t>(r)] = r;
    return out;
  }
  Eigen::MatrixXd tk, sk;
  try {
    tk = detail::scaled_columns(target, knobs, scaler);
    sk = detail::scaled_columns(source, knobs, scaler);
  } catch (const SchemaError& e) {
    throw AlignmentError(e.what());
  }
  for (Eigen::Index r = 0; r < tk.rows(); ++r) {
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index s = 0; s < sk.rows(); ++s) {
      const double d = (tk.row(r) - sk.row(s)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = s;
      }
    }
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

/// Mean over metrics of the per-metric distance between the target's values
/// and the aligned source values.
inline double score_workload(const WorkloadTable& target, const WorkloadTable& source, std::span<const std::string> metrics,
                             const ScalerParams& scaler, MappingDistance distance = MappingDistance::Euclidean) {
  if (target.rows() < 1) throw InsufficientRows("target '" + target.workload_id + "' has no rows");
  if (metrics.empty()) throw SchemaError("score_workload: no metrics to compare");
  const auto pairs = align_rows(target, source, scaler);
  Eigen::MatrixXd tm, sm;
  try {
    if (distance == MappingDistance::Euclidean) {
      tm = detail::scaled_columns(target, metrics, scaler);
      sm = detail::scaled_columns(source, metrics, scaler);
    } else {
      tm = target.select(metrics);
      sm = source.select(metrics);
    }
  } catch (const SchemaError& e) {
    throw AlignmentError(e.what());
  }
  double total = 0.0;
  for (Eigen::Index m = 0; m < tm.cols(); ++m) {
    double acc = 0.0;
    for (Eigen::Index r = 0; r < tm.rows(); ++r) {
      const double t = tm(r, m);
      const double s = sm(pairs[static_cast<std::size_t>(r)], m);
      if (distance == MappingDistance::Euclidean) acc += (t - s) * (t - s);
      else acc += std::abs(t - s) / std::max(std::abs(t), 1e-12);
    }
    total += distance == MappingDistance::Euclidean ? std::sqrt(acc) : acc / static_cast<double>(tm.rows());
  }
  return total / static_cast<double>(tm.cols());
}

/// Scores the target against every repository workload. A source that cannot
/// be aligned scores +infinity instead of aborting the mapping.
inline MappingResult map_workload(const WorkloadTable& target, const WorkloadRepository& repo, std::span<const std::string> metrics,
                                  const ScalerParams& scaler, MappingDistance distance = MappingDistance::Euclidean) {
  if (repo.empty()) throw KeyError("map_workload: repository is empty");
  MappingResult res;
  res.target_id = target.workload_id;
  for (const auto& [id, source] : repo.tables) {
    double s = std::numeric_limits<double>::infinity();
    try {
      s = score_workload(target, source, metrics, scaler, distance);
    } catch (const AlignmentError&) {
    }
    res.scores.push_back({id, s});
  }
  std::stable_sort(res.scores.begin(), res.scores.end(), [](const WorkloadScore& a, const WorkloadScore& b) {
    return a.score < b.score || (a.score == b.score && a.source_id < b.source_id);
  });
  res.chosen = res.scores.front().source_id;
  return res;
}

inline MappingResult map_workload(const WorkloadTable& target, const WorkloadRepository& repo, const PrunedMetricSet& metrics,
                                  const ScalerParams& scaler, MappingDistance distance = MappingDistance::Euclidean) {
  const auto names = metrics.names();
  return map_workload(target, repo, std::span<const std::string>(names), scaler, distance);
}

// ---------------------------------------------------------------------------
// Augmentation

struct Provenance {
  bool from_target = true;
  std::string source_id;  // set when !from_target

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct AugmentedDataset {
  WorkloadTable table;  // target rows first, then surviving source rows
  std::vector<Provenance> provenance;

  [[nodiscard]] std::size_t target_rows() const {
    return static_cast<std::size_t>(std::count_if(provenance.begin(), provenance.end(), [](const Provenance& p) { return p.from_target; }));
  }
};

/// Target rows plus the source rows whose knob configuration does not equal
/// any target row's; on a conflict the target's observation is kept.
inline AugmentedDataset augment(const WorkloadTable& target, const WorkloadTable& source) {
  if (target.schema != source.schema)
    throw SchemaError("augment: schemas of '" + target.workload_id + "' and '" + source.workload_id + "' differ");
  const auto knobs = target.names_of(ColumnKind::Knob);
  const Eigen::MatrixXd tk = target.select(knobs);
  const Eigen::MatrixXd sk = source.select(knobs);
  std::set<std::vector<double>> target_configs;
  for (Eigen::Index r = 0; r < tk.rows(); ++r) {
    std::vector<double> cfg(static_cast<std::size_t>(tk.cols()));
    for (Eigen::Index c = 0; c < tk.cols(); ++c) cfg[static_cast<std::size_t>(c)] = tk(r, c);
    target_configs.insert(std::move(cfg));
  }
  std::vector<Eigen::Index> keep;
  for (Eigen::Index r = 0; r < sk.rows(); ++r) {
    std::vector<double> cfg(static_cast<std::size_t>(sk.cols()));
    for (Eigen::Index c = 0; c < sk.cols(); ++c) cfg[static_cast<std::size_t>(c)] = sk(r, c);
    if (!target_configs.contains(cfg)) keep.push_back(r);
  }
  const auto kept = source.take_rows(keep);
  const std::vector<WorkloadTable> parts{target, kept};
  AugmentedDataset out{concat_tables(target.workload_id, parts), {}};
  out.provenance.assign(static_cast<std::size_t>(target.rows()), Provenance{true, {}});
  out.provenance.insert(out.provenance.end(), keep.size(), Provenance{false, source.workload_id});
  return out;
}

// ---------------------------------------------------------------------------
// Emission

inline nlohmann::json to_json(const MappingResult& m) {
  nlohmann::json scores = nlohmann::json::array();
  for (const auto& s : m.scores) {
    nlohmann::json e = {{"source", s.source_id}};
    if (std::isfinite(s.score)) e["score"] = s.score;
    else e["score"] = nullptr;
    scores.push_back(e);
  }
  return {{"target", m.target_id}, {"chosen", m.chosen}, {"scores", scores}};
}

}  // namespace knobforge
