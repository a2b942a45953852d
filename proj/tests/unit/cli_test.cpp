#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cli/commands.hpp"
#include "cli/config.hpp"
#include "deferral/io.hpp"

namespace deferral::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("deferral_cli_" +
             std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  std::string Config(const std::string& name, const json& doc) {
    const fs::path p = root_ / name;
    std::ofstream(p) << doc.dump(2);
    return p.string();
  }

  int Invoke(const std::string& command, const std::string& config,
             const std::string& out, std::optional<std::uint64_t> seed = {},
             int jobs = 1) {
    Options o;
    o.config_path = config;
    o.out_dir = (root_ / out).string();
    o.seed = seed;
    o.jobs = jobs;
    stdout_.str("");
    stderr_.str("");
    return cli::Run(command, o, stdout_, stderr_);
  }

  std::string Slurp(const std::string& out, const std::string& file) {
    std::ifstream in(root_ / out / file);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path root_;
  std::ostringstream stdout_;
  std::ostringstream stderr_;
};

TEST_F(CliTest, GenDataIsReproducible) {
  const auto cfg = Config(
      "gen.json", {{"version", 1},
                   {"generator", {{"kind", "mog"}, {"samples", 200}, {"seed", 7}}}});
  ASSERT_EQ(Invoke("gen-data", cfg, "a"), kExitOk);
  ASSERT_EQ(Invoke("gen-data", cfg, "b"), kExitOk);
  const auto ma = json::parse(Slurp("a", "manifest.json"));
  const auto mb = json::parse(Slurp("b", "manifest.json"));
  EXPECT_EQ(ma.at("dataset_hash"), mb.at("dataset_hash"));
  EXPECT_EQ(ma.at("seed"), 7);
  EXPECT_EQ(ma.at("generator_version"), 1);
  EXPECT_EQ(Slurp("a", "dataset.json"), Slurp("b", "dataset.json"));

  ASSERT_EQ(Invoke("gen-data", cfg, "c", 8), kExitOk);
  const auto mc = json::parse(Slurp("c", "manifest.json"));
  EXPECT_NE(ma.at("dataset_hash"), mc.at("dataset_hash"));
}

TEST_F(CliTest, GenDataOtherGenerators) {
  const auto two = Config(
      "two.json", {{"version", 1},
                   {"generator", {{"kind", "two_stage"}, {"n_e", 3}, {"samples", 50}}}});
  ASSERT_EQ(Invoke("gen-data", two, "two"), kExitOk);
  const auto data = io::DatasetFromJson(json::parse(Slurp("two", "dataset.json")));
  EXPECT_EQ(data.shape.n_e(), 3);

  const auto task = Config(
      "task.json", {{"version", 1},
                    {"generator", {{"kind", "task"},
                                   {"constraint", "theorem7_premise"},
                                   {"ne_min", 2},
                                   {"seed", 4}}}});
  ASSERT_EQ(Invoke("gen-data", task, "task"), kExitOk) << stderr_.str();
  EXPECT_NO_THROW(io::TaskFromJson(json::parse(Slurp("task", "task.json"))));
}

TEST_F(CliTest, InvalidConfigsExitOne) {
  const auto zero = Config(
      "zero.json", {{"version", 1}, {"generator", {{"kind", "mog"}, {"samples", 0}}}});
  EXPECT_EQ(Invoke("gen-data", zero, "o"), kExitInvalidConfig);

  const auto unknown = Config(
      "unknown.json",
      {{"version", 1}, {"generator", {{"kind", "mog"}, {"colour", "red"}}}});
  EXPECT_EQ(Invoke("gen-data", unknown, "o"), kExitInvalidConfig);
  EXPECT_NE(stderr_.str().find("colour"), std::string::npos);

  const auto no_version = Config("nv.json", {{"generator", {{"kind", "mog"}}}});
  EXPECT_EQ(Invoke("gen-data", no_version, "o"), kExitInvalidConfig);

  EXPECT_EQ(Invoke("gen-data", (root_ / "absent.json").string(), "o"),
            kExitInvalidConfig);
}

class TrainCliTest : public CliTest {
 protected:
  void SetUp() override {
    CliTest::SetUp();
    const auto gen = Config(
        "gen.json", {{"version", 1},
                     {"generator", {{"kind", "mog"}, {"samples", 300}, {"seed", 2}}}});
    ASSERT_EQ(Invoke("gen-data", gen, "data"), kExitOk);
  }

  json TrainDoc(double lr) {
    return {{"version", 1},
            {"dataset", "data/dataset.json"},
            {"loss", {{"name", "surrogate_single"}, {"q", 1.0}}},
            {"train", {{"learning_rate", lr}, {"epochs", 20}}}};
  }
};

TEST_F(TrainCliTest, ZeroLearningRateGivesFlatMetrics) {
  const auto cfg = Config("train.json", TrainDoc(0.0));
  ASSERT_EQ(Invoke("train", cfg, "t"), kExitOk) << stderr_.str();
  std::istringstream csv(Slurp("t", "metrics.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "epoch,surrogate_loss,deferral_loss,system_accuracy");
  std::string first_values;
  int rows = 0;
  while (std::getline(csv, line)) {
    const std::string values = line.substr(line.find(',') + 1);
    if (rows == 0) first_values = values;
    EXPECT_EQ(values, first_values);
    ++rows;
  }
  EXPECT_EQ(rows, 21);
}

TEST_F(TrainCliTest, SameConfigGivesIdenticalBytes) {
  const auto cfg = Config("train.json", TrainDoc(0.5));
  ASSERT_EQ(Invoke("train", cfg, "a"), kExitOk);
  ASSERT_EQ(Invoke("train", cfg, "b"), kExitOk);
  EXPECT_EQ(Slurp("a", "metrics.csv"), Slurp("b", "metrics.csv"));
  EXPECT_EQ(Slurp("a", "model.json"), Slurp("b", "model.json"));
  const auto model = io::ScorerFromJson(json::parse(Slurp("a", "model.json")));
  EXPECT_EQ(models::OutputWidth(model), 6);
}

TEST_F(TrainCliTest, MlpAndTestDataset) {
  auto doc = TrainDoc(0.5);
  doc["model"] = {{"kind", "mlp"}, {"hidden_dim", 8}};
  doc["test_dataset"] = "data/dataset.json";
  const auto cfg = Config("train.json", doc);
  ASSERT_EQ(Invoke("train", cfg, "m"), kExitOk) << stderr_.str();
  const auto manifest = json::parse(Slurp("m", "manifest.json"));
  EXPECT_EQ(manifest.at("test_system_accuracy"),
            manifest.at("train_system_accuracy"));
  EXPECT_EQ(json::parse(Slurp("m", "model.json")).at("kind"), "mlp");
}

TEST_F(TrainCliTest, MissingDatasetIsRuntimeFailure) {
  auto doc = TrainDoc(0.5);
  doc["dataset"] = "nowhere.json";
  EXPECT_EQ(Invoke("train", Config("train.json", doc), "x"), kExitRuntimeFailure);
}

TEST_F(TrainCliTest, TargetLossIsRejected) {
  auto doc = TrainDoc(0.5);
  doc["loss"] = {{"name", "deferral"}};
  EXPECT_EQ(Invoke("train", Config("train.json", doc), "x"), kExitInvalidConfig);
}

json SmallSweep() {
  return {{"version", 1},
          {"generator", {{"input_dim", 4}}},
          {"sweep", {{"sample_sizes", {40, 80}},
                     {"trials", 2},
                     {"test_samples", 100},
                     {"seed", 3}}},
          {"train", {{"epochs", 10}}}};
}

TEST_F(CliTest, SweepRowCountAndParallelBytes) {
  const auto cfg = Config("sweep.json", SmallSweep());
  ASSERT_EQ(Invoke("sweep", cfg, "one", {}, 1), kExitOk) << stderr_.str();
  ASSERT_EQ(Invoke("sweep", cfg, "two", {}, 3), kExitOk);
  const std::string csv = Slurp("one", "sweep.csv");
  EXPECT_EQ(csv, Slurp("two", "sweep.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 4 * 2 * 2);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,sample_size,trial,system_accuracy");
}

TEST_F(CliTest, SweepRowsAreSorted) {
  SweepSpec spec;
  spec.mog.input_dim = 4;
  spec.sample_sizes = {60, 30};
  spec.methods = {"verma23", "ours_q1"};
  spec.trials = 2;
  spec.test_samples = 50;
  spec.train.epochs = 5;
  const auto rows = RunSweep(spec, 2);
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows.front().method, "ours_q1");
  EXPECT_EQ(rows.front().sample_size, 30);
  EXPECT_EQ(rows.back().method, "verma23");
  EXPECT_EQ(rows.back().sample_size, 60);
  EXPECT_EQ(rows.back().trial, 1);
}

TEST_F(CliTest, SweepUnknownMethod) {
  auto doc = SmallSweep();
  doc["sweep"]["methods"] = {"ours_q1", "random_forest"};
  EXPECT_EQ(Invoke("sweep", Config("sweep.json", doc), "o"), kExitInvalidConfig);
  EXPECT_THROW(MethodLoss("random_forest"), Error);
}

TEST_F(CliTest, VerifySuitesReportNoViolations) {
  for (const char* suite : {"theorem3", "theorem7_q1"}) {
    const auto cfg = Config(std::string(suite) + ".json",
                            {{"version", 1},
                             {"suite", suite},
                             {"instances", 1000},
                             {"hypotheses", 2},
                             {"seed", 1}});
    ASSERT_EQ(Invoke("verify", cfg, suite, {}, 2), kExitOk) << stderr_.str();
    const std::string summary = Slurp(suite, "summary.csv");
    EXPECT_EQ(summary, "suite,instances,violations,max_negative_slack,premise_unmet\n" +
                           std::string(suite) + ",1000,0,0,0\n");
    EXPECT_EQ(stdout_.str(), summary);
  }
}

TEST_F(CliTest, VerifyJobsDoNotChangeBytes) {
  const auto cfg = Config("v.json", {{"version", 1},
                                     {"suite", "enhanced_multi"},
                                     {"instances", 30},
                                     {"stage", "two"}});
  ASSERT_EQ(Invoke("verify", cfg, "a", {}, 1), kExitOk) << stderr_.str();
  ASSERT_EQ(Invoke("verify", cfg, "b", {}, 4), kExitOk);
  EXPECT_EQ(Slurp("a", "report.csv"), Slurp("b", "report.csv"));
  EXPECT_EQ(Slurp("a", "report.csv").rfind("task_id,point,lhs,rhs,slack,verdict\n", 0),
            0u);
}

TEST_F(CliTest, VerifyZeroMarginTaskFails) {
  json task = {{"version", 1},
               {"n", 2},
               {"n_e", 1},
               {"mu", {1.0}},
               {"conditionals", {{0.5, 0.5}}},
               {"costs", {{{1.0}, {1.0}}}}};
  const auto cfg = Config("v.json", {{"version", 1},
                                     {"suite", "lemma_noise"},
                                     {"instances", 1},
                                     {"task", task}});
  const int code = Invoke("verify", cfg, "o");
  EXPECT_NE(code, kExitOk);
  EXPECT_NE(stderr_.str().find("zero margin"), std::string::npos);
}

TEST_F(CliTest, VerifyUnknownSuite) {
  const auto cfg = Config("v.json", {{"version", 1}, {"suite", "theorem42"}});
  EXPECT_EQ(Invoke("verify", cfg, "o"), kExitInvalidConfig);
}

TEST(Config, FormattingHelpers) {
  EXPECT_EQ(FormatDouble(0.1), "0.10000000000000001");
  EXPECT_EQ(FormatDouble(1.0), "1");
  EXPECT_EQ(HashHex(""), "cbf29ce484222325");
}

}  // namespace
}  // namespace deferral::cli
