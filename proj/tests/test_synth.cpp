#include <gtest/gtest.h>

#include <cmath>

#include "knobforge/factor.hpp"
#include "knobforge/synth.hpp"
#include "support.hpp"
#include "synth_checks.hpp"

using namespace knobforge;

namespace {

Eigen::VectorXd knob_row(const WorkloadTable& t, Eigen::Index r, const GroundTruth& truth) {
  Eigen::VectorXd k(static_cast<Eigen::Index>(truth.knob_names.size()));
  for (std::size_t i = 0; i < truth.knob_names.size(); ++i) k(static_cast<Eigen::Index>(i)) = t.values(r, t.column_index(truth.knob_names[i]));
  return k;
}

bool same_repo(const WorkloadRepository& a, const WorkloadRepository& b) {
  if (a.schema != b.schema || a.tables.size() != b.tables.size()) return false;
  for (const auto& [id, t] : a.tables) {
    auto it = b.tables.find(id);
    if (it == b.tables.end() || it->second.values != t.values || it->second.origins != t.origins) return false;
  }
  return true;
}

}  // namespace

TEST(Synth, DeterministicForSeed) {
  CorpusSpec cs;
  cs.base.seed = 11;
  const auto a = generate_corpus(cs), b = generate_corpus(cs);
  EXPECT_TRUE(same_repo(a.offline, b.offline));
  EXPECT_TRUE(same_repo(a.online_b, b.online_b));
  EXPECT_TRUE(same_repo(a.online_c, b.online_c));
  EXPECT_TRUE(same_repo(a.test, b.test));
  EXPECT_EQ(to_json(a.truth), to_json(b.truth));
  cs.base.seed = 12;
  EXPECT_FALSE(same_repo(a.offline, generate_corpus(cs).offline));
}

TEST(Synth, ShapeAndPositivity) {
  CorpusSpec cs;
  const auto c = generate_corpus(cs);
  EXPECT_EQ(c.offline.tables.size(), 16u);
  EXPECT_EQ(c.online_b.tables.size(), 8u);
  EXPECT_EQ(c.online_c.tables.size(), 8u);
  for (const auto* repo : {&c.offline, &c.online_b, &c.online_c, &c.test})
    for (const auto& [id, t] : repo->tables) {
      EXPECT_GT(t.latency().minCoeff(), 0.0) << id;
      EXPECT_TRUE(t.values.allFinite()) << id;
    }
  // Test rows belong to the B workloads.
  for (const auto& [id, t] : c.test.tables) {
    EXPECT_TRUE(c.online_b.tables.contains(id));
    EXPECT_EQ(t.rows(), 2);
  }
  // Offline families are round-robin.
  EXPECT_EQ(c.truth.workload_family.at("offline_000"), 0);
  EXPECT_EQ(c.truth.workload_family.at("offline_005"), 1);
  // Boolean knob only takes 0/1.
  for (const auto& [_, t] : c.offline.tables) {
    const auto flag = t.values.col(t.column_index("knob_flag"));
    EXPECT_TRUE(((flag.array() == 0.0) || (flag.array() == 1.0)).all());
  }
}

TEST(Synth, NoiseFreeGroupsArePerfectlyCorrelated) {
  SynthSpec s;
  s.noise_sigma = 0.0;
  s.seed = 4;
  const auto [repo, truth] = generate(s);
  const Eigen::MatrixXd x = repo.stacked(truth.metric_names);
  std::vector<std::vector<double>> cols;
  for (Eigen::Index m = 0; m < x.cols(); ++m) cols.emplace_back(x.col(m).data(), x.col(m).data() + x.rows());
  for (std::size_t i = 0; i < truth.metric_names.size(); ++i)
    for (std::size_t j = i + 1; j < truth.metric_names.size(); ++j)
      if (truth.metric_group[i] == truth.metric_group[j]) {
        EXPECT_NEAR(std::abs(kf_test::pearson(cols[i], cols[j])), 1.0, 1e-9);
      }
}

TEST(Synth, NoiseFreeLatencyEqualsOracle) {
  SynthSpec s;
  s.noise_sigma = 0.0;
  const auto [repo, truth] = generate(s);
  for (const auto& [id, t] : repo.tables)
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      EXPECT_DOUBLE_EQ(t.latency()(r), std::max(1.0, oracle_latency(truth, id, knob_row(t, r, truth))));
}

TEST(Synth, LatencyResidualMoments) {
  // Relative residual y / oracle - 1 is N(0, sigma^2).
  SynthSpec s;
  s.n_workloads = 50;
  s.rows_per_workload = 200;
  s.seed = 9;
  const auto [repo, truth] = generate(s);
  double sum = 0, sq = 0;
  int n = 0;
  for (const auto& [id, t] : repo.tables)
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      const double o = oracle_latency(truth, id, knob_row(t, r, truth));
      if (o * (1.0 - 6.0 * s.noise_sigma) <= 1.0) continue;  // floor region
      const double e = t.latency()(r) / o - 1.0;
      sum += e;
      sq += e * e;
      ++n;
    }
  ASSERT_GT(n, 9000);
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(mean, 0.0, 4.0 * s.noise_sigma / std::sqrt(n));
  EXPECT_NEAR(sd, s.noise_sigma, 0.003);
}

TEST(Synth, OracleErrors) {
  const auto [repo, truth] = generate({});
  EXPECT_THROW(oracle_latency(truth, "nope", Eigen::VectorXd::Zero(7)), KeyError);
  EXPECT_THROW(oracle_latency(truth, "offline_000", Eigen::VectorXd::Zero(3)), ShapeError);
  SynthSpec bad;
  bad.n_knobs = 0;
  EXPECT_THROW(generate(bad), ConfigError);
  bad = {};
  bad.noise_sigma = -1;
  EXPECT_THROW(generate(bad), ConfigError);
}

TEST(Synth, PlantedGroupsRecoveredByPruning) {
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    SynthSpec s;
    s.seed = seed;
    const auto [repo, truth] = generate(s);
    const auto [clean, dropped] = drop_constant_columns(repo);
    EXPECT_EQ(dropped, (std::vector<std::string>{"const_metric"}));
    const auto names = clean.names_of(ColumnKind::Metric);
    const auto fm = factor_analysis(clean.stacked(names).transpose(), names);
    ok += kf_test::recovers_groups(prune_metrics(fm, {}, k_range(2, 15), seed), truth);
  }
  EXPECT_GE(ok, 3);
}

TEST(Synth, WriteCorpusRoundTrips) {
  CorpusSpec cs;
  cs.base.n_workloads = 4;
  cs.n_online_b = 2;
  cs.n_online_c = 2;
  const auto c = generate_corpus(cs);
  kf_test::TempDir d;
  write_corpus(c, cs, d.path());
  for (const char* f : {"offline.csv", "online_b.csv", "online_c.csv", "test.csv", "schema.json", "ground_truth.json"})
    EXPECT_TRUE(std::filesystem::exists(d / f)) << f;
  const auto hint = load_schema_hint(d / "schema.json");
  EXPECT_TRUE(same_repo(load_repository(std::vector<std::filesystem::path>{d / "offline.csv"}, hint), c.offline));
  EXPECT_TRUE(same_repo(load_repository(std::vector<std::filesystem::path>{d / "test.csv"}, hint), c.test));
  const auto gt = nlohmann::json::parse(kf_test::read_file(d / "ground_truth.json"));
  EXPECT_EQ(gt.at("workload_family").at("b_000").get<int>(), c.truth.workload_family.at("b_000"));
}
