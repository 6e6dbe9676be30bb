#pragma once

// Synthetic workload corpora with planted metric groups and a known latency
// function per workload family.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "knobforge/detail/rng.hpp"
#include "knobforge/error.hpp"
#include "knobforge/table.hpp"

namespace knobforge {

struct SynthSpec {
  int n_workloads = 16;
  int rows_per_workload = 40;
  int n_knobs = 6;
  int n_metric_groups = 8;
  int metrics_per_group = 4;
  double noise_sigma = 0.05;  // relative: latency noise sd / latency, and metric noise / latent scale
  int workload_family_count = 4;
  std::uint64_t seed = 0;

  // Shape of the planted structure.
  double family_offset_sd = 1.5;  // per-family shift of every latent
  double disturbance_sd = 0.1;    // per-row group-wide metric disturbance, not seen by latency
  bool boolean_knob = true;
  bool constant_metric = true;
};

inline void validate(const SynthSpec& s) {
  if (s.n_workloads < 1 || s.rows_per_workload < 1 || s.n_knobs < 1 || s.n_metric_groups < 1 || s.metrics_per_group < 1 ||
      s.workload_family_count < 1)
    throw ConfigError("synth: all counts must be >= 1");
  if (!(s.noise_sigma >= 0.0)) throw ConfigError("synth: noise_sigma must be >= 0");
}

struct GroundTruth {
  std::vector<std::string> knob_names;  // continuous knobs, then the boolean knob if any
  std::vector<double> knob_lo, knob_hi;
  bool has_flag = false;

  std::vector<std::string> metric_names;
  std::vector<int> metric_group;
  std::vector<double> metric_slope, metric_intercept;

  // Latent g(x) = sig(s1 * w1.(u - 1/2) + b1) + sig(s2 * w2.(u - 1/2) + b2) + family offset.
  std::vector<Eigen::VectorXd> latent_dir1, latent_dir2;
  std::vector<double> latent_bias1, latent_bias2;
  Eigen::MatrixXd family_offset;  // families x groups

  // log latency = log base + sum_g w_g * (latent_g - offset_g) + gamma * u_a * u_b + delta * flag
  std::vector<double> family_base;
  Eigen::MatrixXd family_weight;  // families x groups
  std::vector<double> family_gamma, family_delta;
  int interaction_a = 0, interaction_b = 0;

  double noise_sigma = 0.0;
  double disturbance_sd = 0.0;
  std::map<std::string, int> workload_family;
};

namespace detail {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Knob row (raw units) -> unit cube coordinates for the continuous knobs.
inline Eigen::VectorXd unit_knobs(const GroundTruth& t, const Eigen::VectorXd& knobs) {
  const auto n = static_cast<Eigen::Index>(t.knob_lo.size());
  Eigen::VectorXd u(n);
  for (Eigen::Index i = 0; i < n; ++i) u(i) = (knobs(i) - t.knob_lo[static_cast<std::size_t>(i)]) / (t.knob_hi[static_cast<std::size_t>(i)] - t.knob_lo[static_cast<std::size_t>(i)]);
  return u;
}

inline Eigen::VectorXd expected_latents(const GroundTruth& t, int family, const Eigen::VectorXd& u) {
  const auto g = static_cast<Eigen::Index>(t.latent_dir1.size());
  Eigen::VectorXd out(g);
  const Eigen::VectorXd c = u.array() - 0.5;
  for (Eigen::Index i = 0; i < g; ++i) {
    const auto gi = static_cast<std::size_t>(i);
    out(i) = sigmoid(t.latent_dir1[gi].dot(c) + t.latent_bias1[gi]) + sigmoid(t.latent_dir2[gi].dot(c) + t.latent_bias2[gi]) +
             t.family_offset(family, i);
  }
  return out;
}

inline double latency_of(const GroundTruth& t, int family, const Eigen::VectorXd& knobs) {
  const Eigen::VectorXd u = unit_knobs(t, knobs);
  const Eigen::VectorXd lat = expected_latents(t, family, u) - t.family_offset.row(family).transpose();
  double s = t.family_weight.row(family).dot(lat) + t.family_gamma[static_cast<std::size_t>(family)] * u(t.interaction_a) * u(t.interaction_b);
  if (t.has_flag) s += t.family_delta[static_cast<std::size_t>(family)] * knobs(knobs.size() - 1);
  return std::max(1.0, t.family_base[static_cast<std::size_t>(family)] * std::exp(s));
}

}  // namespace detail

/// Draws the hidden structure (metric groups, latent functions, family latency
/// functions) from spec.seed.
inline GroundTruth make_ground_truth(const SynthSpec& spec) {
  validate(spec);
  auto rng = detail::make_rng(spec.seed, 0x7472757468ULL);
  auto normal = [&] { return detail::standard_normal(rng); };
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * detail::uniform01(rng); };

  GroundTruth t;
  t.noise_sigma = spec.noise_sigma;
  t.disturbance_sd = spec.disturbance_sd;
  for (int k = 0; k < spec.n_knobs; ++k) {
    t.knob_names.push_back("knob_" + std::to_string(k));
    const double lo = std::round(uniform(0.0, 64.0));
    t.knob_lo.push_back(lo);
    t.knob_hi.push_back(lo + std::pow(2.0, std::round(uniform(1.0, 12.0))));
  }
  t.has_flag = spec.boolean_knob;
  if (t.has_flag) t.knob_names.push_back("knob_flag");

  const int groups = spec.n_metric_groups;
  for (int g = 0; g < groups; ++g) {
    Eigen::VectorXd d1(spec.n_knobs), d2(spec.n_knobs);
    for (int k = 0; k < spec.n_knobs; ++k) {
      d1(k) = normal();
      d2(k) = normal();
    }
    t.latent_dir1.push_back(3.0 * d1.normalized());
    t.latent_dir2.push_back(3.0 * d2.normalized());
    t.latent_bias1.push_back(uniform(-1.0, 1.0));
    t.latent_bias2.push_back(uniform(-1.0, 1.0));
  }
  const int n_metrics = groups * spec.metrics_per_group;
  for (int i = 0; i < n_metrics; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "metric_%03d", i);
    t.metric_names.emplace_back(buf);
    t.metric_group.push_back(i % groups);
    const double slope = std::exp(uniform(-1.0, 6.0));
    t.metric_slope.push_back(slope);
    t.metric_intercept.push_back(slope * uniform(0.0, 50.0));
  }

  const int fams = spec.workload_family_count;
  t.family_offset.resize(fams, groups);
  t.family_weight.resize(fams, groups);
  for (int f = 0; f < fams; ++f) {
    t.family_base.push_back(10.0 * uniform(0.6, 1.4));
    t.family_gamma.push_back(uniform(0.4, 0.8));
    t.family_delta.push_back(uniform(-0.2, 0.2));
    for (int g = 0; g < groups; ++g) {
      t.family_offset(f, g) = spec.family_offset_sd * normal();
      t.family_weight(f, g) = 0.5 * normal() / std::sqrt(static_cast<double>(groups));
    }
  }
  t.interaction_a = 0;
  t.interaction_b = spec.n_knobs > 1 ? 1 : 0;
  return t;
}

/// Noise-free latency of a configuration (knob values in column order).
inline double oracle_latency(const GroundTruth& truth, const std::string& workload_id, const Eigen::VectorXd& knob_row) {
  auto it = truth.workload_family.find(workload_id);
  if (it == truth.workload_family.end()) throw KeyError("unknown workload '" + workload_id + "'");
  if (knob_row.size() != static_cast<Eigen::Index>(truth.knob_names.size())) throw ShapeError("oracle_latency: wrong knob count");
  return detail::latency_of(truth, it->second, knob_row);
}

inline Schema synth_schema(const GroundTruth& t, bool constant_metric) {
  Schema s;
  for (std::size_t k = 0; k < t.knob_names.size(); ++k)
    s.push_back({t.knob_names[k], ColumnKind::Knob, t.has_flag && k + 1 == t.knob_names.size() ? Encoding::BooleanEncoded : Encoding::Numeric});
  for (const auto& m : t.metric_names) s.push_back({m, ColumnKind::Metric, Encoding::Numeric});
  if (constant_metric) s.push_back({"const_metric", ColumnKind::Metric, Encoding::Numeric});
  s.push_back({"latency", ColumnKind::Latency, Encoding::Numeric});
  return s;
}

inline SchemaHint synth_schema_hint(const GroundTruth& t, bool constant_metric) {
  SchemaHint h;
  h.kinds["workload_id"] = HintKind::Id;
  for (const auto& c : synth_schema(t, constant_metric))
    h.kinds[c.name] = c.kind == ColumnKind::Knob ? HintKind::Knob : c.kind == ColumnKind::Metric ? HintKind::Metric : HintKind::Latency;
  return h;
}

/// Samples `count` workloads named prefix000.. with `rows` observations each and
/// records their families in `truth`. `stream` separates independent draws.
inline WorkloadRepository sample_workloads(GroundTruth& truth, const SynthSpec& spec, const std::string& prefix, int count, int rows,
                                           std::uint64_t stream, bool round_robin_families = true,
                                           const std::vector<std::string>* reuse_ids = nullptr) {
  auto rng = detail::make_rng(spec.seed, stream);
  WorkloadRepository repo;
  repo.schema = synth_schema(truth, spec.constant_metric);
  const auto n_cont = static_cast<Eigen::Index>(truth.knob_lo.size());
  const auto n_knob = static_cast<Eigen::Index>(truth.knob_names.size());
  const auto groups = static_cast<Eigen::Index>(truth.latent_dir1.size());
  const auto fams = static_cast<int>(truth.family_base.size());
  for (int w = 0; w < count; ++w) {
    std::string id;
    if (reuse_ids) {
      id = (*reuse_ids)[static_cast<std::size_t>(w)];
    } else {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%03d", w);
      id = prefix + buf;
    }
    int family;
    if (auto it = truth.workload_family.find(id); it != truth.workload_family.end()) family = it->second;
    else family = round_robin_families ? w % fams : static_cast<int>(detail::uniform_index(rng, static_cast<std::size_t>(fams)));
    truth.workload_family[id] = family;

    WorkloadTable t{id, repo.schema, Eigen::MatrixXd(rows, static_cast<Eigen::Index>(repo.schema.size())), {}};
    for (int r = 0; r < rows; ++r) {
      Eigen::VectorXd knobs(n_knob);
      for (Eigen::Index k = 0; k < n_cont; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        knobs(k) = truth.knob_lo[kk] + detail::uniform01(rng) * (truth.knob_hi[kk] - truth.knob_lo[kk]);
      }
      if (truth.has_flag) knobs(n_knob - 1) = detail::uniform01(rng) < 0.5 ? 0.0 : 1.0;
      const Eigen::VectorXd u = detail::unit_knobs(truth, knobs);
      Eigen::VectorXd latent = detail::expected_latents(truth, family, u);
      for (Eigen::Index g = 0; g < groups; ++g) latent(g) += truth.disturbance_sd * detail::standard_normal(rng);

      Eigen::Index c = 0;
      for (Eigen::Index k = 0; k < n_knob; ++k) t.values(r, c++) = knobs(k);
      for (std::size_t m = 0; m < truth.metric_names.size(); ++m) {
        const double v = latent(truth.metric_group[m]) + truth.noise_sigma * detail::standard_normal(rng);
        t.values(r, c++) = truth.metric_slope[m] * v + truth.metric_intercept[m];
      }
      if (spec.constant_metric) t.values(r, c++) = 42.0;
      const double y = detail::latency_of(truth, family, knobs);
      t.values(r, c) = std::max(1.0, y * (1.0 + truth.noise_sigma * detail::standard_normal(rng)));
      t.origins.push_back({id, static_cast<std::size_t>(r)});
    }
    repo.tables.emplace(id, std::move(t));
  }
  return repo;
}

/// One offline repository of spec.n_workloads workloads (families round-robin).
inline std::pair<WorkloadRepository, GroundTruth> generate(const SynthSpec& spec) {
  auto truth = make_ground_truth(spec);
  auto repo = sample_workloads(truth, spec, "offline_", spec.n_workloads, spec.rows_per_workload, 1);
  return {std::move(repo), std::move(truth)};
}

/// Full experiment corpus: offline repository, online workloads B (mapping
/// rows + one validation row), online workloads C, and test rows drawn for the
/// B workloads.
struct SynthCorpus {
  WorkloadRepository offline, online_b, online_c, test;
  GroundTruth truth;
};

struct CorpusSpec {
  SynthSpec base;
  int n_online_b = 8;
  int online_b_rows = 6;
  int n_online_c = 8;
  int online_c_rows = 6;
  int test_rows_per_workload = 2;
};

inline SynthCorpus generate_corpus(const CorpusSpec& cs) {
  SynthCorpus c;
  c.truth = make_ground_truth(cs.base);
  c.offline = sample_workloads(c.truth, cs.base, "offline_", cs.base.n_workloads, cs.base.rows_per_workload, 1);
  c.online_b = sample_workloads(c.truth, cs.base, "b_", cs.n_online_b, cs.online_b_rows, 2, false);
  c.online_c = sample_workloads(c.truth, cs.base, "c_", cs.n_online_c, cs.online_c_rows, 3, false);
  std::vector<std::string> b_ids;
  for (const auto& [id, _] : c.online_b.tables) b_ids.push_back(id);
  c.test = sample_workloads(c.truth, cs.base, "", static_cast<int>(b_ids.size()), cs.test_rows_per_workload, 4, false, &b_ids);
  return c;
}

inline nlohmann::json to_json(const GroundTruth& t) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  auto rows = [&](const Eigen::MatrixXd& m) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec(m.row(i).transpose()));
    return a;
  };
  nlohmann::json groups = nlohmann::json::array();
  for (std::size_t g = 0; g < t.latent_dir1.size(); ++g)
    groups.push_back({{"dir1", vec(t.latent_dir1[g])}, {"dir2", vec(t.latent_dir2[g])}, {"bias1", t.latent_bias1[g]}, {"bias2", t.latent_bias2[g]}});
  nlohmann::json metrics = nlohmann::json::array();
  for (std::size_t m = 0; m < t.metric_names.size(); ++m)
    metrics.push_back({{"name", t.metric_names[m]}, {"group", t.metric_group[m]}, {"slope", t.metric_slope[m]}, {"intercept", t.metric_intercept[m]}});
  return {{"knobs", t.knob_names},
          {"knob_lo", t.knob_lo},
          {"knob_hi", t.knob_hi},
          {"has_flag", t.has_flag},
          {"metrics", metrics},
          {"latent_groups", groups},
          {"family_offset", rows(t.family_offset)},
          {"family_weight", rows(t.family_weight)},
          {"family_base", t.family_base},
          {"family_gamma", t.family_gamma},
          {"family_delta", t.family_delta},
          {"interaction", {t.interaction_a, t.interaction_b}},
          {"noise_sigma", t.noise_sigma},
          {"disturbance_sd", t.disturbance_sd},
          {"workload_family", t.workload_family}};
}

namespace detail {

inline void write_repo_csv(const WorkloadRepository& repo, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  std::vector<WorkloadTable> tables;
  for (const auto& [_, t] : repo.tables) tables.push_back(t);
  if (tables.empty()) {
    out << "workload_id";
    for (const auto& c : repo.schema) out << ',' << c.name;
    out << '\n';
  }
  write_csv(out, tables);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace detail

/// Writes offline.csv, online_b.csv, online_c.csv, test.csv, schema.json and
/// ground_truth.json into `dir`.
inline void write_corpus(const SynthCorpus& c, const CorpusSpec& spec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  detail::write_repo_csv(c.offline, dir / "offline.csv");
  detail::write_repo_csv(c.online_b, dir / "online_b.csv");
  detail::write_repo_csv(c.online_c, dir / "online_c.csv");
  detail::write_repo_csv(c.test, dir / "test.csv");
  auto dump = [&](const char* name, const nlohmann::json& j) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / name).string());
    out << j.dump(2) << '\n';
  };
  dump("schema.json", to_json(synth_schema_hint(c.truth, spec.base.constant_metric)));
  dump("ground_truth.json", to_json(c.truth));
}

}  // namespace knobforge
