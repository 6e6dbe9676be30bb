#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>

#include "knobforge/knobforge.hpp"
#include "support.hpp"

namespace {

struct CliResult {
  int code;
  std::string output;
};

CliResult cli(const kf_test::TempDir& d, const std::string& args) {
  const auto log = d / "cli.log";
  const std::string cmd = std::string("'") + KNOBFORGE_CLI_PATH + "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, kf_test::read_file(log)};
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

nlohmann::json read_json(const std::filesystem::path& p) { return nlohmann::json::parse(kf_test::read_file(p)); }

}  // namespace

TEST(Cli, Version) {
  kf_test::TempDir d;
  const auto r = cli(d, "--version");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find(std::string("knobforge ") + knobforge::kVersion), std::string::npos);
}

TEST(Cli, UsageErrorsExitOne) {
  kf_test::TempDir d;
  EXPECT_EQ(cli(d, "").code, 1);
  EXPECT_EQ(cli(d, "frobnicate").code, 1);
  EXPECT_EQ(cli(d, "synth").code, 1);  // --out is required
  EXPECT_EQ(cli(d, "synth --out " + q(d / "s") + " --rows banana").code, 1);
  EXPECT_EQ(cli(d, "synth --out " + q(d / "s") + " --workloads 0").code, 1);
  kf_test::write_file(d / "p.csv", "workload_id,row_index,y_true,y_pred\nw,0,1,1\n");
  EXPECT_EQ(cli(d, "evaluate --out " + q(d / "e") + " --format xml " + q(d / "p.csv")).code, 1);
}

TEST(Cli, DataErrorsExitTwo) {
  kf_test::TempDir d;
  kf_test::write_file(d / "schema.json", R"({"workload_id": "id", "k0": "knob", "m0": "metric", "latency": "latency"})");
  EXPECT_EQ(cli(d, "ingest --out " + q(d / "o") + " --schema " + q(d / "schema.json") + " " + q(d / "missing.csv")).code, 2);
  kf_test::write_file(d / "ragged.csv", "workload_id,k0,m0,latency\nw,1,2\n");
  const auto r = cli(d, "ingest --out " + q(d / "o") + " --schema " + q(d / "schema.json") + " " + q(d / "ragged.csv"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("ragged.csv:2"), std::string::npos) << r.output;
}

TEST(Cli, SynthRunEchoesResolvedConfig) {
  kf_test::TempDir d;
  const auto corpus = d / "corpus";
  ASSERT_EQ(cli(d, "synth --out " + q(corpus) + " --seed 4 --workloads 8 --online-b 3 --online-c 2").code, 0);
  EXPECT_EQ(read_json(corpus / "resolved_config.json").at("seed").get<int>(), 4);
  EXPECT_TRUE(std::filesystem::exists(corpus / "pipeline.json"));

  const auto out = d / "run";
  const auto r = cli(d, "run --config " + q(corpus / "pipeline.json") + " --out " + q(out) + " --seed 7 --model rf --trees 20");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto resolved = read_json(out / "resolved_config.json");
  EXPECT_EQ(resolved.at("seed").get<int>(), 7);
  EXPECT_EQ(resolved.at("regressor").at("model").get<std::string>(), "rf");
  EXPECT_EQ(resolved.at("regressor").at("rf").at("n_trees").get<int>(), 20);
  EXPECT_EQ(resolved.at("clusterer").get<std::string>(), "kmeans");
  // Paths are resolved against the config file's directory.
  EXPECT_EQ(std::filesystem::path(resolved.at("offline").at(0).get<std::string>()), corpus / "offline.csv");
  for (const char* f : {"summary.json", "stage1_predictions.csv", "stage2_predictions.csv", "pruned_metrics.json"})
    EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
  EXPECT_EQ(read_json(out / "summary.json").at("stage1").at("report").at("n").get<int>(), 3);

  EXPECT_EQ(cli(d, "run --config " + q(corpus / "pipeline.json") + " --out " + q(d / "bad") + " --clusterer dbscan").code, 1);
}

TEST(Cli, TrainPredictEvaluateChain) {
  kf_test::TempDir d;
  const auto c = d / "c";
  ASSERT_EQ(cli(d, "synth --out " + q(c) + " --workloads 4 --online-b 2 --online-c 1").code, 0);
  const auto schema = " --schema " + q(c / "schema.json") + " ";
  ASSERT_EQ(cli(d, "prune --out " + q(d / "p") + schema + q(c / "offline.csv") + " --k-max 10").code, 0);
  ASSERT_EQ(cli(d, "map --out " + q(d / "m") + schema + "--target " + q(c / "online_b.csv") + " --pruned " + q(d / "p" / "pruned_metrics.json") + " " +
                       q(c / "offline.csv"))
                .code,
            0);
  ASSERT_EQ(cli(d, "train --out " + q(d / "t") + schema + "--model rf --trees 10 " + q(c / "offline.csv")).code, 0);
  ASSERT_EQ(cli(d, "predict --out " + q(d / "pr") + schema + "--model " + q(d / "t" / "model.json") + " " + q(c / "test.csv")).code, 0);
  ASSERT_EQ(cli(d, "evaluate --out " + q(d / "e") + " " + q(d / "pr" / "predictions.csv")).code, 0);
  const auto report = read_json(d / "e" / "report.json");
  EXPECT_EQ(report.at("n").get<int>(), 4);
  EXPECT_GT(report.at("mape").get<double>(), 0.0);
  // A corrupt model file is a data error.
  kf_test::write_file(d / "bad_model.json", "{\"format\": \"other\"}");
  EXPECT_EQ(cli(d, "predict --out " + q(d / "pr2") + schema + "--model " + q(d / "bad_model.json") + " " + q(c / "test.csv")).code, 2);
}
