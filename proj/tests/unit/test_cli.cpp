#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <sstream>

#include <json.hpp>

#include "mvgmn/cli.hpp"
#include "mvgmn/cli_config.hpp"
#include "mvgmn/data.hpp"
#include "mvgmn/errors.hpp"

namespace mvgmn {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliRun {
  int code = -1;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream out, err;
  CliRun r;
  r.code = cli::dispatch(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string digest_line(const std::string& out) {
  const auto p = out.find("digest ");
  return p == std::string::npos ? "" : out.substr(p, out.find('\n', p) - p);
}

json read_json(const fs::path& p) { return json::parse(read_file_bytes(p.string())); }

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "mvgmn_unit_cli";
    fs::remove_all(root_);
    fs::create_directories(root_);
    const json cfg{{"data.views", 2},        {"data.steps", 4},    {"data.patches", 2},
                   {"data.rgb_dim", 6},      {"data.skeleton_dim", 5}, {"data.classes", 3},
                   {"data.subjects", 5},     {"data.samples_per_class", 5},
                   {"model.width", 6},       {"model.key_dim", 4}, {"model.state", 4},
                   {"model.blocks", 2},      {"model.knn_k", 2},   {"train.epochs", 2},
                   {"train.batch", 4},       {"train.lr", 0.05}};
    write_file_bytes(config(), cfg.dump());
    const CliRun r = run({"gen-data", "--config", config(), "--out", (root_ / "data").string(), "--seed", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string config() { return (root_ / "config.json").string(); }
  static std::string manifest() { return (root_ / "data" / "manifest.json").string(); }
  static std::string dir(const std::string& name) { return (root_ / name).string(); }

  static fs::path root_;
};

fs::path CliTest::root_;

TEST(CliExitCodes, UsageErrorsReturnOne) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  const CliRun r = run({"gen-data", "--out", "/tmp/x", "--bogus-flag", "1"});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
  EXPECT_EQ(run({"gen-data"}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, GenDataDigestDependsOnlyOnSeed) {
  const CliRun a = run({"gen-data", "--config", config(), "--out", dir("g1"), "--seed", "3"});
  const CliRun b = run({"gen-data", "--config", config(), "--out", dir("g2"), "--seed", "3"});
  const CliRun c = run({"gen-data", "--config", config(), "--out", dir("g3"), "--seed", "4"});
  ASSERT_EQ(a.code, 0);
  EXPECT_FALSE(digest_line(a.out).empty());
  EXPECT_EQ(digest_line(a.out), digest_line(b.out));
  EXPECT_NE(digest_line(a.out), digest_line(c.out));
  EXPECT_EQ(dataset_digest(manifest()), dataset_digest(dir("g1") + "/manifest.json"));
}

TEST_F(CliTest, InvalidValuesReturnOne) {
  EXPECT_EQ(run({"train", "--config", config(), "--data", manifest(), "--out", dir("bad"), "--blocks", "3"}).code, 1);
  EXPECT_EQ(run({"train", "--config", config(), "--data", manifest(), "--out", dir("bad"), "--aggregator", "rnn"}).code, 1);
  EXPECT_EQ(run({"train", "--config", config(), "--data", dir("nowhere.json"), "--out", dir("bad")}).code, 1);
  const std::string unknown = dir("unknown.json");
  write_file_bytes(unknown, R"({"model.depth": 3})");
  const CliRun r = run({"train", "--config", unknown, "--data", manifest(), "--out", dir("bad")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("model.depth"), std::string::npos) << r.err;
  EXPECT_EQ(run({"ablate", "--config", config(), "--data", manifest(), "--out", dir("bad"), "--ladder", "x"}).code, 1);
}

TEST_F(CliTest, TrainThenEvalAgree) {
  const CliRun t = run({"train", "--config", config(), "--data", manifest(), "--out", dir("t"), "--epochs", "1"});
  ASSERT_EQ(t.code, 0) << t.err;
  for (const char* f : {"config.json", "checkpoint.mvgc", "train_log.jsonl", "summary.json"})
    EXPECT_TRUE(fs::exists(fs::path(dir("t")) / f)) << f;
  const json summary = read_json(fs::path(dir("t")) / "summary.json");
  EXPECT_EQ(summary["epochs"], 1);
  EXPECT_EQ(read_json(fs::path(dir("t")) / "config.json")["train.epochs"], 1);
  EXPECT_EQ(read_json(fs::path(dir("t")) / "config.json")["model.width"], 6);

  const CliRun e = run({"eval", "--config", config(), "--data", manifest(), "--out", dir("e"), "--checkpoint",
                     dir("t") + "/checkpoint.mvgc"});
  ASSERT_EQ(e.code, 0) << e.err;
  const json ev = read_json(fs::path(dir("e")) / "eval.json");
  EXPECT_EQ(ev["top1"].get<double>(), summary["final_top1"].get<double>());
  EXPECT_EQ(ev["samples"], 3);

  const CliRun t2 = run({"train", "--config", config(), "--data", manifest(), "--out", dir("t2"), "--epochs", "1"});
  ASSERT_EQ(t2.code, 0);
  EXPECT_EQ(read_file_bytes(dir("t") + "/checkpoint.mvgc"), read_file_bytes(dir("t2") + "/checkpoint.mvgc"));
}

TEST_F(CliTest, InspectGraphDumpsEdgeSets) {
  const CliRun r = run({"inspect-graph", "--config", config(), "--data", manifest(), "--out", dir("ig"), "--sample",
                     "4", "--block", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json g = read_json(fs::path(dir("ig")) / "graph_sample4_block1.json");
  EXPECT_EQ(g["n"], 8);
  EXPECT_EQ(g["rule_time"].size(), 12u);
  EXPECT_EQ(g["rule_view"].size(), 4u);
  EXPECT_EQ(g["knn"].size(), 16u);
  EXPECT_EQ(run({"inspect-graph", "--config", config(), "--data", manifest(), "--out", dir("ig"), "--sample", "4",
                 "--block", "2"})
                .code,
            1);
  EXPECT_EQ(run({"inspect-graph", "--config", config(), "--data", manifest(), "--out", dir("ig"), "--sample",
                 "999"})
                .code,
            1);
}

TEST_F(CliTest, AblateCoversEveryVariant) {
  const CliRun r = run({"ablate", "--config", config(), "--data", manifest(), "--out", dir("ab"), "--ladder", "all",
                     "--epochs", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = read_json(fs::path(dir("ab")) / "ablation.json");
  ASSERT_EQ(j["rows"].size(), 10u);
  std::map<std::string, std::size_t> params;
  for (const auto& row : j["rows"])
    if (row["ladder"] == "aggregator") params[row["variant"]] = row["params"];
  EXPECT_LT(params["linear"], params["gcn_rule"]);
  EXPECT_EQ(params["gcn_rule"], params["gcn_rule_knn"]);
  EXPECT_LT(params["gcn_rule_knn"], params["ssm"]);
  EXPECT_LT(params["ssm"], params["mvgmn"]);
  const std::string csv = read_file_bytes(dir("ab") + "/ablation.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "ladder,variant,params,top1");
}

TEST_F(CliTest, BenchWritesCsvAndSummary) {
  const CliRun r = run({"bench", "--out", dir("b"), "--lengths", "8,16,32,64", "--repeats", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = read_file_bytes(dir("b") + "/bench.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 9);
  const json s = read_json(fs::path(dir("b")) / "bench_summary.json");
  EXPECT_TRUE(s["aggregators"].contains("ssm"));
  EXPECT_TRUE(s["aggregators"].contains("attention"));
  EXPECT_EQ(run({"bench", "--out", dir("b"), "--lengths", "8,16", "--repeats", "2"}).code, 1);
  EXPECT_EQ(run({"bench", "--out", dir("b"), "--lengths", "7"}).code, 1);
}

TEST(CliConfig, LayeringDefaultsFileFlags) {
  cli::CliConfig c;
  EXPECT_EQ(c.get("train.epochs"), 64);
  EXPECT_EQ(c.get("model.knn_k"), 3);
  c.merge(json{{"train.epochs", 7}, {"model.aggregator", "ssm"}});
  EXPECT_EQ(c.train.epochs, 7u);
  EXPECT_EQ(c.model.aggregator, Aggregator::Ssm);
  c.set("train.epochs", 2);
  EXPECT_EQ(c.get("train.epochs"), 2);
  EXPECT_EQ(c.get("model.aggregator"), "ssm");
  EXPECT_THROW(c.set("train.epochs", "many"), ConfigError);
  EXPECT_THROW(c.set("train.nope", 1), ConfigError);
  EXPECT_THROW(c.set("model.aggregator", "rnn"), ConfigError);
  EXPECT_THROW(c.merge_file("/nonexistent/config.json"), InputError);
}

TEST(CliConfig, EveryKeyRoundTrips) {
  const cli::CliConfig c;
  const auto j = c.to_json();
  EXPECT_EQ(j.size(), cli::CliConfig::keys().size());
  cli::CliConfig d;
  for (const auto& k : cli::CliConfig::keys()) d.set(k, c.get(k));
  EXPECT_EQ(d.to_json(), j);
}

TEST(CliConfig, ModelShapeComesFromDataSpec) {
  cli::CliConfig c;
  SyntheticSpec s;
  s.views = 2;
  s.steps = 5;
  s.classes = 4;
  s.rgb_dim = 7;
  const ModelConfig m = c.model_for(s);
  EXPECT_EQ(m.views, 2u);
  EXPECT_EQ(m.steps, 5u);
  EXPECT_EQ(m.classes, 4u);
  EXPECT_EQ(m.rgb_dim, 7u);
}

}  // namespace
}  // namespace mvgmn
