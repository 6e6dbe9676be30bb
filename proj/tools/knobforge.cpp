// knobforge command-line entry point.
//
// Every subcommand resolves its settings as defaults <- --config JSON <- flags
// and writes the result to <out>/resolved_config.json before doing any work.
// Exit codes: 0 success, 1 usage error, 2 data or numeric error.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "knobforge/knobforge.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace knobforge;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Param {
  std::string pointer;  // JSON pointer into the resolved config
  std::string flag;
  std::string help;
};

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(p.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& p, const json& j) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

json convert(const std::string& raw, const json& like, const std::string& flag) {
  try {
    std::size_t used = 0;
    switch (like.type()) {
      case json::value_t::number_unsigned: {
        if (!raw.empty() && raw[0] == '-') throw std::invalid_argument("negative");
        const auto v = std::stoull(raw, &used);
        if (used != raw.size()) break;
        return v;
      }
      case json::value_t::number_integer: {
        const auto v = std::stoll(raw, &used);
        if (used != raw.size()) break;
        return v;
      }
      case json::value_t::number_float: {
        const auto v = std::stod(raw, &used);
        if (used != raw.size()) break;
        return v;
      }
      case json::value_t::boolean:
        if (raw == "true" || raw == "1" || raw == "on") return true;
        if (raw == "false" || raw == "0" || raw == "off") return false;
        break;
      default: return raw;
    }
  } catch (const std::logic_error&) {
  }
  throw UsageError("invalid value '" + raw + "' for " + flag);
}

/// A subcommand whose settings live in one JSON document.
class Command {
 public:
  Command(CLI::App& parent, const std::string& name, const std::string& desc, json defaults, std::vector<Param> params,
          bool positional_inputs)
      : app_(parent.add_subcommand(name, desc)), defaults_(std::move(defaults)), params_(std::move(params)) {
    app_->add_option("--config", config_path_, "JSON config file; flags override its values");
    app_->add_option("--out", out_dir_, "output directory")->required();
    for (const auto& p : params_) {
      auto* o = app_->add_option(p.flag, raw_[p.pointer], p.help);
      opts_[p.pointer] = o;
    }
    if (positional_inputs) inputs_opt_ = app_->add_option("inputs", inputs_, "input CSV files");
  }

  CLI::App* app() const { return app_; }
  fs::path out_dir() const { return out_dir_; }

  /// Merged settings; relative paths from the config file are made relative to
  /// its directory by the caller.
  json resolve() const {
    json j = defaults_;
    if (!config_path_.empty()) {
      const json file = read_json_file(config_path_);
      if (!file.is_object()) throw ConfigError(config_path_ + ": config must be a JSON object");
      for (const auto& [k, _] : file.items())
        if (!defaults_.contains(k)) throw ConfigError(config_path_ + ": unknown config key '" + k + "'");
      j.merge_patch(file);
    }
    for (const auto& p : params_) {
      if (opts_.at(p.pointer)->count() == 0) continue;
      const json::json_pointer ptr(p.pointer);
      j[ptr] = convert(raw_.at(p.pointer), defaults_.at(ptr), p.flag);
    }
    if (inputs_opt_ && inputs_opt_->count() > 0) j["inputs"] = inputs_;
    return j;
  }

  fs::path config_dir() const { return config_path_.empty() ? fs::path() : fs::path(config_path_).parent_path(); }

 private:
  CLI::App* app_;
  json defaults_;
  std::vector<Param> params_;
  std::string config_path_;
  std::string out_dir_;
  std::map<std::string, std::string> raw_;
  std::map<std::string, CLI::Option*> opts_;
  std::vector<std::string> inputs_;
  CLI::Option* inputs_opt_ = nullptr;
};

fs::path resolve_path(const fs::path& base, const std::string& p) {
  fs::path q(p);
  return q.is_absolute() || base.empty() ? q : base / q;
}

std::vector<fs::path> input_paths(const json& j, const fs::path& base, const char* key = "inputs") {
  std::vector<fs::path> out;
  for (const auto& e : j.at(key)) out.push_back(resolve_path(base, e.get<std::string>()));
  for (const auto& p : out)
    if (!fs::exists(p)) throw IoError("no such file: " + p.string());
  return out;
}

SchemaHint hint_from(const json& j, const fs::path& base) {
  const auto s = j.at("schema").get<std::string>();
  if (s.empty()) throw UsageError("--schema is required");
  return load_schema_hint(resolve_path(base, s));
}

void begin(const Command& c, const json& resolved) {
  fs::create_directories(c.out_dir());
  write_json_file(c.out_dir() / "resolved_config.json", resolved);
}

template <class Enum, class F>
Enum parse_flag(const std::string& s, F parse) {
  try {
    return parse(s);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

std::vector<std::string> feature_columns(const WorkloadRepository& repo, const std::string& pruned_path, const fs::path& base) {
  auto cols = repo.names_of(ColumnKind::Knob);
  if (pruned_path.empty()) {
    const auto m = repo.names_of(ColumnKind::Metric);
    cols.insert(cols.end(), m.begin(), m.end());
  } else {
    const auto names = pruned_from_json(read_json_file(resolve_path(base, pruned_path))).names();
    cols.insert(cols.end(), names.begin(), names.end());
  }
  return cols;
}

std::vector<WorkloadTable> tables_of(const WorkloadRepository& r) {
  std::vector<WorkloadTable> out;
  for (const auto& [_, t] : r.tables) out.push_back(t);
  return out;
}

// ---------------------------------------------------------------------------

int cmd_synth(const Command& c) {
  const json j = c.resolve();
  CorpusSpec cs;
  cs.base.seed = j.at("seed").get<std::uint64_t>();
  cs.base.n_workloads = j.at("n_workloads").get<int>();
  cs.base.rows_per_workload = j.at("rows_per_workload").get<int>();
  cs.base.n_knobs = j.at("n_knobs").get<int>();
  cs.base.n_metric_groups = j.at("n_metric_groups").get<int>();
  cs.base.metrics_per_group = j.at("metrics_per_group").get<int>();
  cs.base.noise_sigma = j.at("noise_sigma").get<double>();
  cs.base.workload_family_count = j.at("workload_family_count").get<int>();
  cs.n_online_b = j.at("n_online_b").get<int>();
  cs.online_b_rows = j.at("online_b_rows").get<int>();
  cs.n_online_c = j.at("n_online_c").get<int>();
  cs.online_c_rows = j.at("online_c_rows").get<int>();
  cs.test_rows_per_workload = j.at("test_rows_per_workload").get<int>();
  try {
    validate(cs.base);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  if (cs.n_online_b < 0 || cs.n_online_c < 0 || cs.online_b_rows < 1 || cs.online_c_rows < 1 || cs.test_rows_per_workload < 1)
    throw UsageError("synth: online counts must be >= 0 and row counts >= 1");
  begin(c, j);
  const auto corpus = generate_corpus(cs);
  write_corpus(corpus, cs, c.out_dir());

  PipelineConfig pc;
  pc.seed = cs.base.seed;
  pc.regressor.seed = cs.base.seed;
  json pj = to_json(pc);
  pj["offline"] = {"offline.csv"};
  pj["online_b"] = {"online_b.csv"};
  pj["online_c"] = {"online_c.csv"};
  pj["test"] = "test.csv";
  pj["schema"] = "schema.json";
  write_json_file(c.out_dir() / "pipeline.json", pj);
  std::cout << "wrote corpus to " << c.out_dir().string() << '\n';
  return 0;
}

int cmd_ingest(const Command& c) {
  const json j = c.resolve();
  const auto base = c.config_dir();
  const auto hint = hint_from(j, base);
  const auto paths = input_paths(j, base);
  if (paths.empty()) throw UsageError("ingest: no input files");
  begin(c, j);
  auto repo = load_repository(paths, hint, LoadOptions{j.at("require_latency").get<bool>()});
  std::vector<std::string> dropped;
  if (j.at("drop_constant").get<bool>() && !repo.empty()) std::tie(repo, dropped) = drop_constant_columns(repo);
  {
    std::ofstream out(c.out_dir() / "repository.csv", std::ios::binary);
    if (!out) throw IoError("cannot write repository.csv");
    write_csv(out, tables_of(repo));
  }
  json cols = json::array();
  for (const auto& s : repo.schema)
    cols.push_back({{"name", s.name}, {"kind", std::string(to_string(s.kind))},
                    {"encoding", s.encoding == Encoding::BooleanEncoded ? "boolean" : "numeric"}});
  json wl = json::object();
  for (const auto& [id, t] : repo.tables) wl[id] = t.rows();
  write_json_file(c.out_dir() / "ingest.json", {{"columns", cols}, {"workloads", wl}, {"dropped_columns", dropped}});
  std::cout << repo.size() << " workloads, " << repo.schema.size() << " columns, " << dropped.size() << " constant columns dropped\n";
  return 0;
}

int cmd_prune(const Command& c) {
  const json j = c.resolve();
  const auto base = c.config_dir();
  const auto hint = hint_from(j, base);
  const auto paths = input_paths(j, base);
  if (paths.empty()) throw UsageError("prune: no input files");
  ClusterSpec spec{parse_flag<ClustererKind>(j.at("clusterer").get<std::string>(), parse_clusterer), j.at("cluster_restarts").get<int>()};
  const int k_min = j.at("k_min").get<int>(), k_max = j.at("k_max").get<int>();
  if (k_min < 1 || k_max < k_min) throw UsageError("prune: need 1 <= k_min <= k_max");
  begin(c, j);
  const auto [repo, dropped] = drop_constant_columns(load_repository(paths, hint));
  const auto names = repo.names_of(ColumnKind::Metric);
  const Eigen::MatrixXd obs = repo.stacked(names).transpose();
  const auto fm = factor_analysis(obs, names, j.at("retention_threshold").get<double>());
  const auto pruned = prune_metrics(fm, spec, k_range(k_min, k_max), j.at("seed").get<std::uint64_t>());
  write_json_file(c.out_dir() / "pruned_metrics.json", to_json(pruned));
  {
    std::ofstream e(c.out_dir() / "eigenvalues.csv", std::ios::binary);
    write_eigenvalues_csv(e, fm);
    std::ofstream s(c.out_dir() / "selection.csv", std::ios::binary);
    write_selection_csv(s, pruned.selection);
  }
  std::cout << "k=" << pruned.k << " retained_factors=" << fm.n_retained << '\n';
  return 0;
}

int cmd_map(const Command& c) {
  const json j = c.resolve();
  const auto base = c.config_dir();
  const auto hint = hint_from(j, base);
  const auto repo_paths = input_paths(j, base);
  if (repo_paths.empty()) throw UsageError("map: no repository files");
  if (j.at("target").get<std::string>().empty()) throw UsageError("map: --target is required");
  const auto target_path = resolve_path(base, j.at("target").get<std::string>());
  if (!fs::exists(target_path)) throw IoError("no such file: " + target_path.string());
  const auto distance = parse_flag<MappingDistance>(j.at("distance").get<std::string>(), parse_distance);
  begin(c, j);
  const auto [repo, dropped] = drop_constant_columns(load_repository(repo_paths, hint));
  const auto targets = drop_columns(load_repository(std::vector<fs::path>{target_path}, hint), dropped);
  const auto cols = feature_columns(repo, j.at("pruned").get<std::string>(), base);
  const std::vector<std::string> metrics(cols.begin() + static_cast<std::ptrdiff_t>(repo.names_of(ColumnKind::Knob).size()), cols.end());
  const auto scaler = fit_scaler(tables_of(repo), cols);
  json results = json::array();
  for (const auto& [id, t] : targets.tables) {
    const auto m = map_workload(t, repo, std::span<const std::string>(metrics), scaler, distance);
    results.push_back(to_json(m));
    std::cout << id << " -> " << m.chosen << '\n';
  }
  write_json_file(c.out_dir() / "mapping.json", results);
  return 0;
}

RegressorSpec spec_from(const json& j) {
  RegressorSpec s;
  s.kind = parse_flag<RegressorKind>(j.at("model").get<std::string>(), parse_regressor);
  s.seed = j.at("seed").get<std::uint64_t>();
  s.gpr.alpha = j.at("alpha").get<double>();
  s.gpr.length_scale = j.at("length_scale").get<double>();
  s.gpr.signal_variance = j.at("signal_variance").get<double>();
  s.gpr.optimize_kernel = j.at("optimize_kernel").get<bool>();
  s.rf.n_trees = j.at("trees").get<int>();
  s.rf.max_depth = j.at("depth").get<int>();
  s.rf.min_samples_split = j.at("min_samples_split").get<int>();
  s.rf.bootstrap = j.at("bootstrap").get<bool>();
  s.mlp.epochs = j.at("epochs").get<int>();
  s.mlp.adam.learning_rate = j.at("learning_rate").get<double>();
  try {
    validate(s);
  } catch (const InvalidHyperparams& e) {
    throw UsageError(e.what());
  }
  return s;
}

int cmd_train(const Command& c) {
  const json j = c.resolve();
  const auto base = c.config_dir();
  const auto hint = hint_from(j, base);
  const auto paths = input_paths(j, base);
  if (paths.empty()) throw UsageError("train: no input files");
  const auto spec = spec_from(j);
  begin(c, j);
  const auto repo = load_repository(paths, hint);
  const auto cols = feature_columns(repo, j.at("pruned").get<std::string>(), base);
  const auto all = concat_tables("train", tables_of(repo));
  const auto scaler = fit_scaler(std::vector<WorkloadTable>{all}, cols);
  const auto model = fit(spec, scaler.transform(all.select(cols)), all.latency(), cols);
  json doc = to_json(model);
  doc["scaler"] = to_json(scaler);
  write_json_file(c.out_dir() / "model.json", doc);
  std::cout << "trained " << to_string(spec.kind) << " on " << all.rows() << " rows, " << cols.size() << " features\n";
  return 0;
}

int cmd_predict(const Command& c) {
  const json j = c.resolve();
  const auto base = c.config_dir();
  const auto hint = hint_from(j, base);
  const auto paths = input_paths(j, base);
  if (paths.empty()) throw UsageError("predict: no input files");
  if (j.at("model").get<std::string>().empty()) throw UsageError("predict: --model is required");
  begin(c, j);
  const json doc = read_json_file(resolve_path(base, j.at("model").get<std::string>()));
  const auto model = regressor_from_json(doc);
  const auto scaler = scaler_from_json(doc.at("scaler"));
  const auto repo = load_repository(paths, hint, LoadOptions{false});
  std::vector<PredictionRow> rows;
  for (const auto& [id, t] : repo.tables) {
    const Eigen::VectorXd yp = predict(model, scaler.transform(t.select(model.feature_names)));
    const auto lat = t.latency_index();
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      PredictionRow p{id, t.origins[static_cast<std::size_t>(r)].row, std::nullopt, yp(r)};
      if (lat) p.y_true = t.values(r, *lat);
      rows.push_back(std::move(p));
    }
  }
  std::ofstream out(c.out_dir() / "predictions.csv", std::ios::binary);
  if (!out) throw IoError("cannot write predictions.csv");
  write_predictions_csv(out, rows);
  std::cout << rows.size() << " predictions\n";
  return 0;
}

/// Reads either a predictions CSV (workload_id,row_index,y_true,y_pred) or a
/// report CSV (id,y_true,y_pred[,abs_pct_err]).
EvalReport read_predictions(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  std::string header;
  std::getline(in, header);
  const auto h = knobforge::detail::split_csv_line(header);
  if (!(h.size() == 4 && h[0] == "workload_id" && h[1] == "row_index" && h[2] == "y_true" && h[3] == "y_pred")) {
    in.clear();
    in.seekg(0);
    return read_report_csv(in);
  }
  std::vector<EvalRow> rows;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (knobforge::detail::trim(line).empty()) continue;
    const auto cells = knobforge::detail::split_csv_line(line);
    EvalRow e;
    if (cells.size() != 4 || !knobforge::detail::parse_double(cells[2], e.y_true) || !knobforge::detail::parse_double(cells[3], e.y_pred))
      throw ParseError(p.string() + ":" + std::to_string(line_no) + ": expected workload_id,row_index,y_true,y_pred with numeric values");
    e.id = cells[0] + "#" + cells[1];
    rows.push_back(std::move(e));
  }
  return make_report(rows);
}

int cmd_evaluate(const Command& c) {
  const json j = c.resolve();
  const auto base = c.config_dir();
  const auto paths = input_paths(j, base);
  if (paths.size() != 1) throw UsageError("evaluate: expects exactly one predictions file");
  const auto fmt = j.at("format").get<std::string>();
  if (fmt != "json" && fmt != "csv") throw UsageError("evaluate: --format must be json or csv");
  begin(c, j);
  const auto report = read_predictions(paths.front());
  emit_report(report, fmt == "json" ? ReportFormat::Json : ReportFormat::Csv, c.out_dir() / (fmt == "json" ? "report.json" : "report.csv"));
  std::cout << "n=" << report.n;
  if (report.mape) std::cout << " mape=" << *report.mape << " mse=" << *report.mse;
  std::cout << '\n';
  if (!is_finite(report)) {
    std::cerr << "knobforge: evaluate: non-finite metric\n";
    return 2;
  }
  return 0;
}

int cmd_run(const Command& c) {
  json j = c.resolve();
  const auto base = c.config_dir();
  PipelineConfig cfg;
  try {
    cfg = pipeline_config_from_json(j, base);
    validate(cfg);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  } catch (const InvalidHyperparams& e) {
    throw UsageError(e.what());
  }
  const auto resolved = to_json(cfg);
  begin(c, resolved);
  const auto run = run_pipeline(cfg);
  write_run_outputs(run, c.out_dir());
  std::cout << "stage1 n=" << run.stage1.report.n;
  if (run.stage1.report.mape) std::cout << " mape=" << *run.stage1.report.mape << " mse=" << *run.stage1.report.mse;
  std::cout << "; stage2 predictions=" << run.stage2.predictions.size();
  if (run.stage2.report) std::cout << " mape=" << *run.stage2.report->mape;
  std::cout << '\n';
  return 0;
}

json train_defaults() {
  return {{"schema", ""},     {"inputs", json::array()}, {"pruned", ""},       {"model", "gpr"},          {"alpha", 0.1},
          {"length_scale", 1.0}, {"signal_variance", 1.0}, {"optimize_kernel", true}, {"trees", 200},   {"depth", 50},
          {"min_samples_split", 2}, {"bootstrap", true},  {"epochs", 500},      {"learning_rate", 1e-3}, {"seed", 0u}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knobforge: metric pruning, workload mapping and latency prediction for DBMS knob tuning"};
  app.set_version_flag("--version", std::string("knobforge ") + kVersion);
  app.require_subcommand(1);

  const std::vector<Param> regressor_params{{"/model", "--model", "gpr|rf|nn"},
                                            {"/alpha", "--alpha", "GPR noise term"},
                                            {"/length_scale", "--length-scale", "GPR RBF length scale (without kernel optimization)"},
                                            {"/signal_variance", "--signal-variance", "GPR signal variance (without kernel optimization)"},
                                            {"/optimize_kernel", "--optimize-kernel", "GPR: grid-search length scale and signal variance"},
                                            {"/trees", "--trees", "random forest size"},
                                            {"/depth", "--depth", "random forest max depth"},
                                            {"/min_samples_split", "--min-samples-split", "random forest min node size to split"},
                                            {"/bootstrap", "--bootstrap", "random forest bootstrap sampling"},
                                            {"/epochs", "--epochs", "MLP training epochs"},
                                            {"/learning_rate", "--learning-rate", "MLP ADAM learning rate"},
                                            {"/seed", "--seed", "random seed"}};

  std::vector<std::unique_ptr<Command>> cmds;
  std::map<CLI::App*, int (*)(const Command&)> handlers;
  auto add = [&](const std::string& name, const std::string& desc, json defaults, std::vector<Param> params, bool inputs,
                 int (*handler)(const Command&)) {
    cmds.push_back(std::make_unique<Command>(app, name, desc, std::move(defaults), std::move(params), inputs));
    handlers[cmds.back()->app()] = handler;
  };

  add("synth", "generate a synthetic corpus with known ground truth",
      {{"seed", 0u}, {"n_workloads", 16}, {"rows_per_workload", 40}, {"n_knobs", 6}, {"n_metric_groups", 8},
       {"metrics_per_group", 4}, {"noise_sigma", 0.05}, {"workload_family_count", 4}, {"n_online_b", 8}, {"online_b_rows", 6},
       {"n_online_c", 8}, {"online_c_rows", 6}, {"test_rows_per_workload", 2}},
      {{"/seed", "--seed", "random seed"},
       {"/n_workloads", "--workloads", "offline workloads"},
       {"/rows_per_workload", "--rows", "rows per offline workload"},
       {"/n_knobs", "--knobs", "continuous knobs"},
       {"/n_metric_groups", "--groups", "planted metric groups"},
       {"/metrics_per_group", "--metrics-per-group", "metrics per group"},
       {"/noise_sigma", "--noise", "relative noise level"},
       {"/workload_family_count", "--families", "workload families"},
       {"/n_online_b", "--online-b", "online B workloads"},
       {"/online_b_rows", "--online-b-rows", "rows per B workload"},
       {"/n_online_c", "--online-c", "online C workloads"},
       {"/online_c_rows", "--online-c-rows", "rows per C workload"},
       {"/test_rows_per_workload", "--test-rows", "test rows per B workload"}},
      false, cmd_synth);
  add("ingest", "load CSV files, encode booleans, drop constant columns",
      {{"schema", ""}, {"inputs", json::array()}, {"drop_constant", true}, {"require_latency", true}},
      {{"/schema", "--schema", "schema hint JSON"},
       {"/drop_constant", "--drop-constant", "drop columns constant across all rows"},
       {"/require_latency", "--require-latency", "fail when no latency column is present"}},
      true, cmd_ingest);
  add("prune", "factor analysis + clustering metric pruning",
      {{"schema", ""}, {"inputs", json::array()}, {"clusterer", "kmeans"}, {"cluster_restarts", 10}, {"k_min", 2}, {"k_max", 15},
       {"retention_threshold", 1.0}, {"seed", 0u}},
      {{"/schema", "--schema", "schema hint JSON"},
       {"/clusterer", "--clusterer", "kmeans|gmm"},
       {"/cluster_restarts", "--restarts", "clustering restarts per k"},
       {"/k_min", "--k-min", "smallest k"},
       {"/k_max", "--k-max", "largest k"},
       {"/retention_threshold", "--retention-threshold", "eigenvalue retention threshold"},
       {"/seed", "--seed", "random seed"}},
      true, cmd_prune);
  add("map", "map target workloads to their nearest repository workload",
      {{"schema", ""}, {"inputs", json::array()}, {"target", ""}, {"pruned", ""}, {"distance", "euclidean"}},
      {{"/schema", "--schema", "schema hint JSON"},
       {"/target", "--target", "CSV with the workloads to map"},
       {"/pruned", "--pruned", "pruned_metrics.json (default: all metrics)"},
       {"/distance", "--distance", "euclidean|mape"}},
      true, cmd_map);
  {
    auto params = regressor_params;
    params.push_back({"/schema", "--schema", "schema hint JSON"});
    params.push_back({"/pruned", "--pruned", "pruned_metrics.json (default: all metrics)"});
    add("train", "fit a latency regressor on all rows of the input files", train_defaults(), params, true, cmd_train);
  }
  add("predict", "predict latency with a saved model", {{"schema", ""}, {"inputs", json::array()}, {"model", ""}},
      {{"/schema", "--schema", "schema hint JSON"}, {"/model", "--model", "model.json from train"}}, true, cmd_predict);
  add("evaluate", "MAPE/MSE report from a predictions CSV", {{"inputs", json::array()}, {"format", "json"}},
      {{"/format", "--format", "json|csv"}}, true, cmd_evaluate);
  add("run", "full two-stage pipeline", to_json(PipelineConfig{}),
      {{"/seed", "--seed", "random seed"},
       {"/clusterer", "--clusterer", "kmeans|gmm"},
       {"/distance", "--distance", "euclidean|mape"},
       {"/n_map_rows", "--n-map-rows", "mapping rows per B workload"},
       {"/k_min", "--k-min", "smallest k"},
       {"/k_max", "--k-max", "largest k"},
       {"/regressor/model", "--model", "gpr|rf|nn"},
       {"/regressor/gpr/alpha", "--alpha", "GPR noise term"},
       {"/regressor/rf/n_trees", "--trees", "random forest size"},
       {"/regressor/rf/max_depth", "--depth", "random forest max depth"},
       {"/regressor/nn/epochs", "--epochs", "MLP training epochs"}},
      false, cmd_run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code == 0) return 0;
    std::cerr << '\n' << app.help();
    return 1;
  }

  for (const auto& c : cmds) {
    if (!c->app()->parsed()) continue;
    try {
      return handlers.at(c->app())(*c);
    } catch (const UsageError& e) {
      std::cerr << "knobforge " << c->app()->get_name() << ": " << e.what() << "\n\n" << c->app()->help();
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "knobforge " << c->app()->get_name() << ": " << e.what() << '\n';
      return 2;
    }
  }
  return 1;
}
