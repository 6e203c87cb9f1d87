#include <gtest/gtest.h>
#include <unistd.h>

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "pd4ml/cli.hpp"
#include "pd4ml/codec.hpp"

using namespace pd4ml;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_command(args, out, err);
  return {code, out.str(), err.str()};
}

json read_json(const fs::path& file) {
  const auto bytes = read_bytes(file);
  return json::parse(bytes.begin(), bytes.end());
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("pd4ml_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string at(const std::string& rel) const { return (dir_ / rel).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, ListAndDescribe) {
  const Result list = run({"list"});
  EXPECT_EQ(list.code, 0);
  for (const char* name : {"TopTagging", "SmartBkg", "Spinodal", "EoS", "AirShowers"})
    EXPECT_NE(list.out.find(name), std::string::npos) << name;
  const Result d = run({"describe", "Spinodal"});
  EXPECT_EQ(d.code, 0);
  EXPECT_NE(d.out.find("16.3k/4k/8.7k"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"list", "--bogus"}).code, 2);
  EXPECT_EQ(run({"train", "Spinodal"}).code, 2);  // --out is required
  EXPECT_EQ(run({"train", "Spinodal", "--out", at("r"), "--model", "cnn"}).code, 2);
  EXPECT_EQ(run({"train", "Spinodal", "--out", at("r"), "--batch-size", "1"}).code, 2);
  EXPECT_EQ(run({"synth", "grid20-like", "--n", "10,20"}).code, 2);
  EXPECT_EQ(run({"synth", "grid20-like", "--n", "ten"}).code, 2);
  EXPECT_EQ(run({"evaluate", at("r"), "--split", "dev"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(Cli, DataErrorsExitOne) {
  const Result d = run({"describe", "Nope"});
  EXPECT_EQ(d.code, 1);
  EXPECT_NE(d.err.find("Spinodal"), std::string::npos);
  EXPECT_EQ(run({"synth", "grid30-like", "--out", at("data")}).code, 1);
  // Registered datasets have no download URL until a manifest provides one.
  EXPECT_EQ(run({"fetch", "EoS", "--path", at("data")}).code, 1);
  EXPECT_EQ(run({"evaluate", at("missing")}).code, 1);
}

TEST_F(Cli, TrainWritesSelfDescribingRunThatEvaluateReproduces) {
  ASSERT_EQ(run({"synth", "shower-like", "--n", "60,30,30", "--seed", "4", "--out", at("data")}).code, 0);
  const Result t = run({"train", "AirShowers", "--model", "graphnet", "--path", at("data"), "--seed", "2", "--width",
                        "8", "--epochs", "3", "--out", at("run")});
  ASSERT_EQ(t.code, 0) << t.err;
  for (const char* f : {kConfigFile, kCheckpointFile, kPreprocessFile, kMetricsFile, kLogFile})
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;

  const json m = read_json(dir_ / "run" / kMetricsFile);
  EXPECT_EQ(m["dataset"], "AirShowers");
  EXPECT_EQ(m["model"], "graphnet");
  EXPECT_EQ(m["seed"], 2);
  EXPECT_EQ(m["epochs_run"], 3);
  EXPECT_TRUE(m.contains("final_lr"));
  EXPECT_TRUE(m["metrics"].contains("resolution"));

  const auto log = read_bytes(dir_ / "run" / kLogFile);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);
  EXPECT_EQ(std::string(log.begin(), log.begin() + 3), "1, ");

  // The stored config carries the data location, so evaluate works from anywhere.
  const Result e = run({"evaluate", at("run"), "--split", "test"});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(json::parse(e.out)["metrics"], m["metrics"]);
  const Result v = run({"evaluate", at("run"), "--split", "validation"});
  ASSERT_EQ(v.code, 0) << v.err;
  EXPECT_EQ(json::parse(v.out)["split"], "validation");
}

TEST_F(Cli, FlagsOverridePresets) {
  ASSERT_EQ(run({"synth", "grid20-like", "--n", "40,20,20", "--out", at("data")}).code, 0);
  ASSERT_EQ(run({"train", "Spinodal", "--model", "fcn", "--path", at("data"), "--width", "4", "--epochs", "2",
                 "--batch-size", "16", "--patience", "3", "--lr", "0.01", "--out", at("run")})
                .code,
            0);
  const json c = read_json(dir_ / "run" / kConfigFile);
  EXPECT_EQ(c["width"], 4);
  EXPECT_EQ(c["max_epochs"], 2);
  EXPECT_EQ(c["batch_size"], 16);
  EXPECT_EQ(c["patience"], 3);
  EXPECT_EQ(c["learning_rate"], 0.01);
  EXPECT_EQ(c["plateau_patience"], 8);
}

TEST_F(Cli, MultiSeedSummaryAndDeterminism) {
  ASSERT_EQ(run({"synth", "grid20-like", "--n", "40,20,20", "--seed", "1", "--out", at("data")}).code, 0);
  const std::vector<std::string> args = {"train", "Spinodal", "--model", "fcn", "--path", at("data"), "--seed", "5",
                                         "--seeds", "3", "--width", "8", "--epochs", "2", "--out", at("multi")};
  ASSERT_EQ(run(args).code, 0);
  const json s = read_json(dir_ / "multi" / kSummaryFile);
  EXPECT_EQ(s["seeds"], json::array({5, 6, 7}));
  for (const char* metric : {"auc", "accuracy", "loss"}) {
    EXPECT_TRUE(s["metrics"][metric].contains("mean")) << metric;
    EXPECT_GE(s["metrics"][metric]["std"].get<double>(), 0.0) << metric;
  }
  double mean = 0;
  for (int seed : {5, 6, 7})
    mean += read_json(dir_ / "multi" / ("seed_" + std::to_string(seed)) / kMetricsFile)["metrics"]["auc"].get<double>();
  EXPECT_NEAR(s["metrics"]["auc"]["mean"].get<double>(), mean / 3, 1e-15);

  const auto checkpoint = read_bytes(dir_ / "multi" / "seed_6" / kCheckpointFile);
  const auto summary = read_bytes(dir_ / "multi" / kSummaryFile);
  ASSERT_EQ(run(args).code, 0);
  EXPECT_EQ(read_bytes(dir_ / "multi" / "seed_6" / kCheckpointFile), checkpoint);
  EXPECT_EQ(read_bytes(dir_ / "multi" / kSummaryFile), summary);

  const Result e = run({"evaluate", at("multi")});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(json::parse(e.out)["metrics"], s["metrics"]);
}
