#pragma once

// The end-to-end two-stage experiment: ingest, drop constants, prune metrics,
// map + augment online workloads, fit, predict, report.

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "knobforge/error.hpp"
#include "knobforge/evaluation.hpp"
#include "knobforge/factor.hpp"
#include "knobforge/mapping.hpp"
#include "knobforge/model_selection.hpp"
#include "knobforge/regressor.hpp"
#include "knobforge/scaler.hpp"
#include "knobforge/table.hpp"

namespace knobforge {

namespace fs = std::filesystem;

struct PipelineConfig {
  std::vector<fs::path> offline_paths, online_b_paths, online_c_paths;
  std::optional<fs::path> test_path;
  fs::path schema_path;
  ClusterSpec clusterer;
  RegressorSpec regressor;
  int n_map_rows = 5;
  int k_min = 2, k_max = 15;
  double retention_threshold = 1.0;
  MappingDistance distance = MappingDistance::Euclidean;
  std::uint64_t seed = 0;
};

inline void validate(const PipelineConfig& c) {
  if (c.n_map_rows < 1) throw ConfigError("n_map_rows must be >= 1");
  if (c.k_min < 1 || c.k_max < c.k_min) throw ConfigError("k range must satisfy 1 <= k_min <= k_max");
  if (c.clusterer.n_restarts < 1) throw ConfigError("clusterer restarts must be >= 1");
  validate(c.regressor);
}

namespace detail {

inline std::vector<fs::path> paths_from_json(const nlohmann::json& j, const fs::path& base) {
  std::vector<fs::path> out;
  auto add = [&](const std::string& s) {
    fs::path p(s);
    out.push_back(p.is_absolute() || base.empty() ? p : base / p);
  };
  if (j.is_string()) add(j.get<std::string>());
  else
    for (const auto& e : j) add(e.get<std::string>());
  return out;
}

inline std::vector<std::string> path_strings(const std::vector<fs::path>& ps) {
  std::vector<std::string> out;
  for (const auto& p : ps) out.push_back(p.generic_string());
  return out;
}

}  // namespace detail

/// Relative paths are resolved against `base` (normally the config file's directory).
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const fs::path& base = {}, PipelineConfig c = {}) {
  try {
    if (j.contains("offline")) c.offline_paths = detail::paths_from_json(j.at("offline"), base);
    if (j.contains("online_b")) c.online_b_paths = detail::paths_from_json(j.at("online_b"), base);
    if (j.contains("online_c")) c.online_c_paths = detail::paths_from_json(j.at("online_c"), base);
    if (j.contains("test")) {
      if (j.at("test").is_null()) c.test_path.reset();
      else c.test_path = detail::paths_from_json(j.at("test"), base).at(0);
    }
    if (j.contains("schema")) c.schema_path = detail::paths_from_json(j.at("schema"), base).at(0);
    if (j.contains("clusterer")) c.clusterer.kind = parse_clusterer(j.at("clusterer").get<std::string>());
    if (j.contains("cluster_restarts")) c.clusterer.n_restarts = j.at("cluster_restarts").get<int>();
    if (j.contains("regressor")) c.regressor = regressor_spec_from_json(j.at("regressor"), c.regressor);
    c.n_map_rows = j.value("n_map_rows", c.n_map_rows);
    c.k_min = j.value("k_min", c.k_min);
    c.k_max = j.value("k_max", c.k_max);
    c.retention_threshold = j.value("retention_threshold", c.retention_threshold);
    if (j.contains("distance")) c.distance = parse_distance(j.at("distance").get<std::string>());
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  }
  c.regressor.seed = c.seed;
  return c;
}

inline nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json j = {{"offline", detail::path_strings(c.offline_paths)},
                      {"online_b", detail::path_strings(c.online_b_paths)},
                      {"online_c", detail::path_strings(c.online_c_paths)},
                      {"schema", c.schema_path.generic_string()},
                      {"clusterer", std::string(to_string(c.clusterer.kind))},
                      {"cluster_restarts", c.clusterer.n_restarts},
                      {"regressor", to_json(c.regressor)},
                      {"n_map_rows", c.n_map_rows},
                      {"k_min", c.k_min},
                      {"k_max", c.k_max},
                      {"retention_threshold", c.retention_threshold},
                      {"distance", std::string(to_string(c.distance))},
                      {"seed", c.seed}};
  j["test"] = c.test_path ? nlohmann::json(c.test_path->generic_string()) : nlohmann::json(nullptr);
  return j;
}

struct PipelineInputs {
  WorkloadRepository offline, online_b, online_c;
  std::optional<WorkloadRepository> test;
};

/// Test-row origins are tagged with this prefix so they never collide with
/// the same workload's online rows.
inline constexpr std::string_view kTestOriginPrefix = "test:";

inline PipelineInputs load_inputs(const PipelineConfig& c) {
  for (const auto* list : {&c.offline_paths, &c.online_b_paths, &c.online_c_paths})
    for (const auto& p : *list)
      if (!fs::exists(p)) throw IoError("no such file: " + p.string());
  if (c.test_path && !fs::exists(*c.test_path)) throw IoError("no such file: " + c.test_path->string());
  if (c.offline_paths.empty()) throw ConfigError("config lists no offline files");
  const auto hint = load_schema_hint(c.schema_path);
  PipelineInputs in;
  in.offline = load_repository(c.offline_paths, hint);
  in.online_b = load_repository(c.online_b_paths, hint);
  in.online_c = load_repository(c.online_c_paths, hint);
  if (c.test_path) in.test = load_repository(std::vector<fs::path>{*c.test_path}, hint, LoadOptions{false});
  return in;
}

// ---------------------------------------------------------------------------

struct PredictionRow {
  std::string workload_id;
  std::size_t row_index = 0;
  std::optional<double> y_true;
  double y_pred = 0.0;
};

/// One record per regressor fit: which rows went in.
struct FitRecord {
  std::string context;
  std::vector<RowOrigin> origins;
};

using FitObserver = std::function<void(const FitRecord&)>;

/// A regressor together with the feature scaler fit on its training rows.
struct FittedModel {
  ScalerParams scaler;
  TrainedRegressor model;
};

struct Stage1Result {
  std::vector<MappingResult> mappings;         // B-workload order
  std::vector<AugmentedDataset> augmented;     // B-workload order
  std::vector<PredictionRow> predictions;
  EvalReport report;
  AugmentedDataset union_dataset;              // training set of the stage1 final model
  std::optional<FittedModel> final_model;
};

struct Stage2Result {
  std::vector<MappingResult> mappings;  // C-workload order
  std::vector<PredictionRow> predictions;
  std::optional<EvalReport> report;     // present when the test rows carry latency
  std::optional<FittedModel> model;
};

struct PipelineRun {
  std::vector<std::string> dropped_columns;
  FactorModel factor;
  PrunedMetricSet pruned;
  std::vector<std::string> feature_names;
  Stage1Result stage1;
  Stage2Result stage2;
  AugmentedDataset augmented_final;
  std::vector<FitRecord> fits;
  std::set<RowOrigin> held_out;  // validation and test rows
};

namespace detail {

inline std::string annotate(const std::string& where, const std::exception& e) { return where + ": " + e.what(); }

template <class F>
auto with_context(const std::string& where, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const InsufficientRows& e) {
    throw InsufficientRows(annotate(where, e));
  } catch (const SchemaError& e) {
    throw SchemaError(annotate(where, e));
  } catch (const NumericalError& e) {
    throw NumericalError(annotate(where, e));
  } catch (const DegenerateInput& e) {
    throw DegenerateInput(annotate(where, e));
  } catch (const InvalidTarget& e) {
    throw InvalidTarget(annotate(where, e));
  } catch (const ClusterDegeneracy& e) {
    throw ClusterDegeneracy(annotate(where, e));
  } catch (const Error& e) {
    throw Error(annotate(where, e));
  }
}

/// Union of datasets, keeping the first occurrence of each row origin.
inline AugmentedDataset union_by_origin(const std::string& id, const Schema& schema, std::span<const AugmentedDataset> parts) {
  std::set<RowOrigin> seen;
  std::vector<WorkloadTable> tables;
  std::vector<Provenance> prov;
  for (const auto& p : parts) {
    std::vector<Eigen::Index> keep;
    for (std::size_t r = 0; r < p.table.origins.size(); ++r)
      if (seen.insert(p.table.origins[r]).second) {
        keep.push_back(static_cast<Eigen::Index>(r));
        prov.push_back(p.provenance[r]);
      }
    tables.push_back(p.table.take_rows(keep));
  }
  AugmentedDataset out{concat_tables(id, tables), std::move(prov)};
  if (tables.empty()) {
    out.table.schema = schema;
    out.table.values.resize(0, static_cast<Eigen::Index>(schema.size()));
  }
  return out;
}

struct Trainer {
  const RegressorSpec& spec;
  const std::vector<std::string>& features;
  PipelineRun& run;
  const FitObserver* observer;

  FittedModel fit_on(const WorkloadTable& t, const std::string& context) {
    FitRecord rec{context, t.origins};
    for (const auto& o : rec.origins)
      if (run.held_out.contains(o))
        throw Error(context + ": held-out row " + o.workload_id + "#" + std::to_string(o.row) + " reached a fit call");
    if (observer && *observer) (*observer)(rec);
    run.fits.push_back(std::move(rec));
    auto scaler = fit_scaler(std::vector<WorkloadTable>{t}, features);
    const Eigen::MatrixXd x = scaler.transform(t.select(features));
    return {scaler, fit(spec, x, t.latency(), features)};
  }

  static Eigen::VectorXd predict_on(const FittedModel& f, const WorkloadTable& t, const std::vector<std::string>& features) {
    return predict(f.model, f.scaler.transform(t.select(features)));
  }
};

inline std::vector<PredictionRow> prediction_rows(const WorkloadTable& t, const Eigen::VectorXd& yp, std::size_t row_offset = 0) {
  std::vector<PredictionRow> out;
  const auto lat = t.latency_index();
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    PredictionRow p{t.workload_id, t.origins[static_cast<std::size_t>(r)].row + row_offset, std::nullopt, yp(r)};
    if (lat) p.y_true = t.values(r, *lat);
    out.push_back(std::move(p));
  }
  return out;
}

inline EvalReport report_of(const std::vector<PredictionRow>& rows) {
  std::vector<EvalRow> er;
  for (const auto& p : rows) er.push_back({p.workload_id + "#" + std::to_string(p.row_index), *p.y_true, p.y_pred, 0.0});
  return make_report(er);
}

}  // namespace detail

/// Runs the whole experiment on already-loaded inputs. `observer` sees the
/// training-row origins of every regressor fit before it happens.
inline PipelineRun run_pipeline(PipelineInputs in, const PipelineConfig& config, const FitObserver& observer = {}) {
  validate(config);
  PipelineRun run;

  {
    std::set<std::string> ids;
    for (const auto* repo : {&in.offline, &in.online_b, &in.online_c})
      for (const auto& [id, _] : repo->tables)
        if (!ids.insert(id).second) throw SchemaError("workload id '" + id + "' appears in more than one input set");
    for (const auto* repo : {&in.online_b, &in.online_c})
      if (!repo->empty() && repo->schema != in.offline.schema) throw SchemaError("online files do not share the offline schema");
  }

  // Preprocess: constants are decided on offline data only.
  auto [offline, dropped] = detail::with_context("preprocess", [&] { return drop_constant_columns(in.offline); });
  run.dropped_columns = dropped;
  const auto online_b = drop_columns(in.online_b, dropped);
  const auto online_c = drop_columns(in.online_c, dropped);
  std::optional<WorkloadRepository> test;
  if (in.test) {
    test = drop_columns(*in.test, dropped);
    for (auto& [_, t] : test->tables)
      for (auto& o : t.origins) o.workload_id = std::string(kTestOriginPrefix) + o.workload_id;
  }

  // Prune.
  const auto metric_names = offline.names_of(ColumnKind::Metric);
  run.factor = detail::with_context("prune", [&] {
    const Eigen::MatrixXd obs = offline.stacked(metric_names).transpose();
    return factor_analysis(obs, metric_names, config.retention_threshold);
  });
  run.pruned = detail::with_context("prune", [&] {
    return prune_metrics(run.factor, config.clusterer, k_range(config.k_min, config.k_max), config.seed);
  });
  const auto pruned_names = run.pruned.names();
  run.feature_names = offline.names_of(ColumnKind::Knob);
  run.feature_names.insert(run.feature_names.end(), pruned_names.begin(), pruned_names.end());

  detail::Trainer trainer{config.regressor, run.feature_names, run, &observer};

  // Held-out rows are known before any fit so the audit can reject them.
  std::vector<HoldoutSplit> splits;
  for (const auto& [id, t] : online_b.tables) {
    splits.push_back(detail::with_context("stage1 " + id, [&] { return split_holdout(t, static_cast<std::size_t>(config.n_map_rows)); }));
    for (const auto& o : splits.back().validation_rows.origins) run.held_out.insert(o);
  }
  if (test)
    for (const auto& [_, t] : test->tables)
      for (const auto& o : t.origins) run.held_out.insert(o);

  // Stage 1: map each B workload against offline, augment, validate.
  const auto map_columns = [&](const WorkloadRepository& r) {
    auto cols = r.names_of(ColumnKind::Knob);
    cols.insert(cols.end(), pruned_names.begin(), pruned_names.end());
    return cols;
  };
  const auto offline_scaler = detail::with_context("stage1 mapping scaler", [&] {
    std::vector<WorkloadTable> parts;
    for (const auto& [_, t] : offline.tables) parts.push_back(t);
    return fit_scaler(parts, map_columns(offline));
  });
  for (const auto& split : splits) {
    const auto& id = split.mapping_rows.workload_id;
    detail::with_context("stage1 " + id, [&] {
      auto m = map_workload(split.mapping_rows, offline, run.pruned, offline_scaler, config.distance);
      auto aug = augment(split.mapping_rows, offline.at(m.chosen));
      const auto fitted = trainer.fit_on(aug.table, "stage1 " + id);
      const Eigen::VectorXd yp = detail::Trainer::predict_on(fitted, split.validation_rows, run.feature_names);
      auto rows = detail::prediction_rows(split.validation_rows, yp);
      run.stage1.predictions.insert(run.stage1.predictions.end(), rows.begin(), rows.end());
      run.stage1.mappings.push_back(std::move(m));
      run.stage1.augmented.push_back(std::move(aug));
      return 0;
    });
  }
  run.stage1.report = detail::report_of(run.stage1.predictions);
  run.stage1.union_dataset = detail::union_by_origin("stage1_union", offline.schema, run.stage1.augmented);
  if (run.stage1.union_dataset.table.rows() >= 2)
    run.stage1.final_model = detail::with_context("stage1 final", [&] { return trainer.fit_on(run.stage1.union_dataset.table, "stage1 final"); });

  // Stage 2: map each C workload against offline + augmented B, union, fit, predict tests.
  WorkloadRepository combined = offline;
  for (const auto& aug : run.stage1.augmented) combined.tables.emplace(aug.table.workload_id, aug.table);
  std::vector<AugmentedDataset> parts{run.stage1.union_dataset};
  if (!online_c.empty()) {
    const auto combined_scaler = detail::with_context("stage2 mapping scaler", [&] {
      std::vector<WorkloadTable> ts;
      for (const auto& [_, t] : combined.tables) ts.push_back(t);
      return fit_scaler(ts, map_columns(combined));
    });
    for (const auto& [id, t] : online_c.tables) {
      detail::with_context("stage2 " + id, [&] {
        auto m = map_workload(t, combined, run.pruned, combined_scaler, config.distance);
        parts.push_back(augment(t, combined.at(m.chosen)));
        run.stage2.mappings.push_back(std::move(m));
        return 0;
      });
    }
  }
  run.augmented_final = detail::union_by_origin("augmented_final", offline.schema, parts);

  if (online_c.empty() && run.stage1.final_model) {
    run.stage2.model = run.stage1.final_model;
  } else if (run.augmented_final.table.rows() >= 2) {
    run.stage2.model = detail::with_context("stage2 final", [&] { return trainer.fit_on(run.augmented_final.table, "stage2 final"); });
  }
  if (test && !test->empty()) {
    if (!run.stage2.model) throw InsufficientRows("stage2: no training data for the test predictions");
    bool all_have_latency = true;
    for (const auto& [id, t] : test->tables) {
      const Eigen::VectorXd yp = detail::with_context("stage2 test " + id, [&] {
        return detail::Trainer::predict_on(*run.stage2.model, t, run.feature_names);
      });
      auto rows = detail::prediction_rows(t, yp);
      for (const auto& r : rows) all_have_latency = all_have_latency && r.y_true.has_value();
      run.stage2.predictions.insert(run.stage2.predictions.end(), rows.begin(), rows.end());
    }
    if (all_have_latency) run.stage2.report = detail::report_of(run.stage2.predictions);
  }
  return run;
}

inline PipelineRun run_pipeline(const PipelineConfig& config, const FitObserver& observer = {}) {
  return run_pipeline(load_inputs(config), config, observer);
}

// ---------------------------------------------------------------------------
// Output files

inline void write_predictions_csv(std::ostream& out, const std::vector<PredictionRow>& rows) {
  out << "workload_id,row_index,y_true,y_pred\n";
  for (const auto& p : rows)
    out << p.workload_id << ',' << p.row_index << ',' << (p.y_true ? detail::format_double(*p.y_true) : std::string()) << ','
        << detail::format_double(p.y_pred) << '\n';
}

inline nlohmann::json summary_json(const PipelineRun& run) {
  auto report = [](const EvalReport& r) {
    nlohmann::json j = {{"n", r.n}};
    j["mape"] = r.mape ? nlohmann::json(*r.mape) : nlohmann::json(nullptr);
    j["mse"] = r.mse ? nlohmann::json(*r.mse) : nlohmann::json(nullptr);
    return j;
  };
  nlohmann::json s1 = nlohmann::json::array(), s2 = nlohmann::json::array();
  for (const auto& m : run.stage1.mappings) s1.push_back(to_json(m));
  for (const auto& m : run.stage2.mappings) s2.push_back(to_json(m));
  nlohmann::json j = {{"dropped_columns", run.dropped_columns},
                      {"retained_factors", run.factor.n_retained},
                      {"pruned", to_json(run.pruned)},
                      {"feature_names", run.feature_names},
                      {"stage1", {{"mappings", s1}, {"report", report(run.stage1.report)}}},
                      {"stage2", {{"mappings", s2}, {"n_predictions", run.stage2.predictions.size()}}},
                      {"augmented_final_rows", run.augmented_final.table.rows()},
                      {"fit_calls", run.fits.size()}};
  j["stage2"]["report"] = run.stage2.report ? report(*run.stage2.report) : nlohmann::json(nullptr);
  return j;
}

/// Writes summary.json, stage1/stage2 prediction CSVs and the pruning artifacts.
inline void write_run_outputs(const PipelineRun& run, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  auto open = [&](const char* name) {
    std::ofstream f(out_dir / name, std::ios::binary);
    if (!f) throw IoError("cannot write " + (out_dir / name).string());
    return f;
  };
  { auto f = open("summary.json"); f << summary_json(run).dump(2) << '\n'; }
  { auto f = open("stage1_predictions.csv"); write_predictions_csv(f, run.stage1.predictions); }
  { auto f = open("stage2_predictions.csv"); write_predictions_csv(f, run.stage2.predictions); }
  { auto f = open("pruned_metrics.json"); f << to_json(run.pruned).dump(2) << '\n'; }
  { auto f = open("eigenvalues.csv"); write_eigenvalues_csv(f, run.factor); }
  { auto f = open("selection.csv"); write_selection_csv(f, run.pruned.selection); }
  { auto f = open("stage1_report.json"); f << to_json(run.stage1.report).dump(2) << '\n'; }
}

}  // namespace knobforge
