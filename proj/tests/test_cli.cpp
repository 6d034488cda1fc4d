// Copyright 2026 The asymoe Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "asymoe/datagen.hpp"
#include "asymoe/errors.hpp"
#include "asymoe/gradcheck_suite.hpp"
#include "asymoe/io.hpp"
#include "asymoe/objectives.hpp"
#include "cli.hpp"
#include "json.hpp"

namespace asymoe {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Invocation {
  int code = 0;
  std::string out;
  std::string err;
};

Invocation run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Invocation r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("asymoe_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string gen(const std::string& name, const std::string& seed = "2") {
    const Invocation r = run_cli({"gen", "--out", path(name), "--seed", seed, "--num-classes", "4",
                                  "--tokens", "2", "--prompt-tokens", "2", "--token-width", "6",
                                  "--train-per-class", "4", "--test-per-class", "3"});
    EXPECT_EQ(r.code, cli::kExitOk) << r.err;
    return path(name) + "/dataset.bin";
  }

  std::vector<std::string> small_train(const std::string& dataset, const std::string& out) const {
    return {"train", "--dataset", dataset, "--out", path(out), "--shots", "2", "--batch-size", "2",
            "--epochs", "2", "--hidden", "8", "--shared-dim", "4", "--rank", "2", "--layers", "1"};
  }

  fs::path dir_;
};

TEST_F(CliTest, GenWritesDatasetAndManifest) {
  const std::string ds = gen("g");
  EXPECT_TRUE(fs::exists(ds));
  const json m = read_json(path("g") + "/manifest.json");
  EXPECT_EQ(m["status"], "ok");
  EXPECT_EQ(m["command"], "gen");
  EXPECT_EQ(m["seed"], 2);
  EXPECT_EQ(m["config"]["num_classes"], 4);
  EXPECT_EQ(read_dataset(ds).base_train.size(), 8u);
}

TEST_F(CliTest, GenRerunIsByteIdentical) {
  const std::string a = gen("a"), b = gen("b");
  EXPECT_EQ(read_text(a), read_text(b));
  EXPECT_NE(read_text(a), read_text(gen("c", "3")));
}

TEST_F(CliTest, MissingConfigNamesThePath) {
  const std::string missing = path("absent.json");
  const Invocation r = run_cli({"gen", "--config", missing, "--out", path("g")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find(missing), std::string::npos);
  EXPECT_EQ(read_json(path("g") + "/manifest.json")["status"], "failed");
}

TEST_F(CliTest, ConfigFileFeedsGenerator) {
  std::ofstream(path("task.json")) << R"({"num_classes": 6, "token_width": 5, "seed": 9})";
  const Invocation r = run_cli({"gen", "--config", path("task.json"), "--out", path("g")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const Dataset d = read_dataset(path("g") + "/dataset.bin");
  EXPECT_EQ(d.config.num_classes, 6u);
  EXPECT_EQ(d.config.token_width, 5u);
  EXPECT_EQ(d.config.seed, 9u);
}

TEST_F(CliTest, UnknownConfigKeyIsConfigError) {
  std::ofstream(path("task.json")) << R"({"num_clases": 6})";
  const Invocation r = run_cli({"gen", "--config", path("task.json"), "--out", path("g")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("num_clases"), std::string::npos);
}

TEST_F(CliTest, UnknownFlagIsUsageError) {
  EXPECT_EQ(run_cli({"gen", "--bogus", "1"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"nosuchcommand"}).code, cli::kExitUsage);
}

TEST_F(CliTest, TrainWritesArtifactsWithConsistentSummary) {
  const std::string ds = gen("g");
  const Invocation r = run_cli(small_train(ds, "t"));
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  for (const char* f : {"metrics.ndjson", "checkpoint.bin", "summary.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(path("t") + "/" + f)) << f;
  const json s = read_json(path("t") + "/summary.json");
  const double hm = harmonic_mean(s["base_accuracy"].get<double>(), s["novel_accuracy"].get<double>());
  EXPECT_NEAR(s["hm"].get<double>(), hm, 1e-9);
  std::ifstream log(path("t") + "/metrics.ndjson");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(log, line)) {
    EXPECT_NO_THROW(json::parse(line));
    ++lines;
  }
  EXPECT_GT(lines, 0u);
}

TEST_F(CliTest, TrainRerunLogsAreIdentical) {
  const std::string ds = gen("g");
  ASSERT_EQ(run_cli(small_train(ds, "a")).code, cli::kExitOk);
  ASSERT_EQ(run_cli(small_train(ds, "b")).code, cli::kExitOk);
  EXPECT_EQ(read_text(path("a") + "/metrics.ndjson"), read_text(path("b") + "/metrics.ndjson"));
  EXPECT_EQ(read_text(path("a") + "/checkpoint.bin"), read_text(path("b") + "/checkpoint.bin"));
}

TEST_F(CliTest, TrainRequiresDataset) {
  EXPECT_EQ(run_cli({"train", "--out", path("t")}).code, cli::kExitUsage);
}

TEST_F(CliTest, RankSingleExpertAndZeroUp) {
  ASSERT_EQ(run_cli({"rank", "--out", path("r1"), "--experts", "1", "--trials", "5"}).code, cli::kExitOk);
  EXPECT_EQ(read_json(path("r1") + "/rank.json")["equal"], 5);
  ASSERT_EQ(run_cli({"rank", "--out", path("r0"), "--zero-up", "--trials", "3"}).code, cli::kExitOk);
  std::ifstream csv(path("r0") + "/rank.csv");
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) EXPECT_EQ(line.substr(line.size() - 4), ",0,0") << line;
}

TEST_F(CliTest, RankDefaultFavoursOneDownManyUps) {
  ASSERT_EQ(run_cli({"rank", "--out", path("r"), "--trials", "10"}).code, cli::kExitOk);
  const json j = read_json(path("r") + "/rank.json");
  EXPECT_EQ(j["one_down_greater"], 10);
  EXPECT_LE(j["max_many_downs_one_up_rank"].get<int>(), 2);
}

TEST_F(CliTest, BiasSameCheckpointTwiceGivesIdenticalReports) {
  const std::string ds = gen("g");
  ASSERT_EQ(run_cli(small_train(ds, "t")).code, cli::kExitOk);
  const std::string ck = path("t") + "/checkpoint.bin";
  const Invocation r =
      run_cli({"bias", "--checkpoint", ck, "--checkpoint", ck, "--dataset", ds, "--out", path("b")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const json j = read_json(path("b") + "/bias.json");
  ASSERT_EQ(j["reports"].size(), 2u);
  EXPECT_EQ(j["reports"][0]["report"], j["reports"][1]["report"]);
  EXPECT_TRUE(j["suppression"]["inequality_holds"].get<bool>());
}

TEST_F(CliTest, BiasOnEmptySplitFails) {
  const std::string ds = gen("g");
  ASSERT_EQ(run_cli(small_train(ds, "t")).code, cli::kExitOk);
  Dataset d = read_dataset(ds);
  d.ood_test.clear();
  write_dataset(d, path("empty.bin"));
  const Invocation r = run_cli({"bias", "--checkpoint", path("t") + "/checkpoint.bin", "--dataset",
                                path("empty.bin"), "--out", path("b")});
  EXPECT_NE(r.code, cli::kExitOk);
  EXPECT_EQ(read_json(path("b") + "/manifest.json")["status"], "failed");
}

TEST_F(CliTest, SweepWritesOneRowPerValue) {
  const std::string ds = gen("g");
  std::vector<std::string> args = small_train(ds, "s");
  args[0] = "sweep";
  args.insert(args.end(), {"--axis", "n", "--values", "3"});
  ASSERT_EQ(run_cli(args).code, cli::kExitOk);
  std::ifstream csv(path("s") + "/sweep.csv");
  std::string line;
  std::size_t rows = 0;
  std::getline(csv, line);
  EXPECT_EQ(line, "value,base,novel,hm");
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 1u);
}

TEST_F(CliTest, GradcheckReportsEveryBlock) {
  const Invocation r = run_cli({"gradcheck", "--out", path("gc"), "--scope", "losses", "--instances", "3"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const json j = read_json(path("gc") + "/gradcheck.json");
  EXPECT_EQ(j["blocks"].size(), 3u);
}

TEST_F(CliTest, GradcheckFailsAtImpossibleTolerance) {
  const Invocation r = run_cli(
      {"gradcheck", "--out", path("gc"), "--scope", "adapter", "--instances", "2", "--tolerance", "1e-30"});
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_NE(r.err.find("adapter/"), std::string::npos);
}

TEST(GradCheckSuite, AllBlocksPass) {
  GradCheckSuiteConfig c;
  c.instances = 5;
  const GradCheckReport r = run_gradcheck(c);
  EXPECT_TRUE(r.passed()) << ::testing::PrintToString(r.failed_blocks());
  EXPECT_GE(r.blocks.size(), 40u);
  for (const BlockReport& b : r.blocks) EXPECT_LE(b.max_relative_error, 1e-4) << b.block;
}

TEST(GradCheckSuite, CorruptedBackwardIsNamed) {
  GradCheckSuiteConfig c;
  c.scope = GradCheckScope::Adapter;
  c.instances = 3;
  c.fault = [](const std::string& block, Tensor& g) {
    if (block == "adapter/one-down-many-ups/router") g *= 1.5;
  };
  const GradCheckReport r = run_gradcheck(c);
  EXPECT_FALSE(r.passed());
  EXPECT_EQ(r.failed_blocks(), std::vector<std::string>{"adapter/one-down-many-ups/router"});
}

TEST(GradCheckSuite, LossScopeHasThreeBlocks) {
  GradCheckSuiteConfig c;
  c.scope = GradCheckScope::Losses;
  c.instances = 3;
  const GradCheckReport r = run_gradcheck(c);
  ASSERT_EQ(r.blocks.size(), 3u);
  EXPECT_EQ(r.blocks[0].block, "losses/ce");
  EXPECT_EQ(r.blocks[1].block, "losses/bias");
  EXPECT_EQ(r.blocks[2].block, "losses/bal");
  EXPECT_THROW(gradcheck_scope_from_string("everything"), UsageError);
}

}  // namespace
}  // namespace asymoe
