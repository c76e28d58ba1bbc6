// Copyright 2026  The wafersemi Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wafersemi/experiment.h"

namespace wafersemi {
namespace {

namespace fs = std::filesystem;

const char* const kTinyConfig = R"({
  "data": {"num_maps": 90},
  "vae": {"latent_dim": 4, "epochs": 1, "channels": [4, 4, 4]},
  "network": {"stem_channels": 4, "widths": [4, 4, 8, 8], "expansion": 2,
              "block_counts": [1, 1, 1, 1]},
  "train": {"teacher_epochs": 1, "student_epochs": 1},
  "semisup": {"confidence_threshold": 0.12, "top_k": 3, "fine_tune_epochs": 1},
  "seeds": [1, 2, 3]
})";

std::string ReadFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::ordered_json ReadJson(const fs::path& p) {
  return nlohmann::ordered_json::parse(ReadFile(p));
}

class Scratch : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() /
           (std::string("wafersemi_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  ExperimentConfig Tiny(const fs::path& out) const {
    ExperimentConfig c = ParseExperimentConfig(kTinyConfig);
    c.output_dir = dir_ / out;
    return c;
  }

  fs::path dir_;
};

TEST(Config, DefaultsAndStrictness) {
  const ExperimentConfig d = ParseExperimentConfig("{}");
  EXPECT_EQ(d.seeds, std::vector<std::uint64_t>{1});
  EXPECT_EQ(d.network.fusion_point, FusionPoint::kAfterStage2);
  EXPECT_THROW(ParseExperimentConfig(R"({"sedes": [1]})"), ConfigError);
  EXPECT_THROW(ParseExperimentConfig(R"({"vae": {"latent": 4}})"), ConfigError);
  EXPECT_THROW(ParseExperimentConfig(R"({"vae": {"epochs": -3}})"), ConfigError);
  EXPECT_THROW(ParseExperimentConfig(R"({"vae": {"epochs": "ten"}})"), ConfigError);
  EXPECT_THROW(ParseExperimentConfig(R"({"semisup": {"confidence_threshold": 1.5}})"),
               ConfigError);
  EXPECT_THROW(ParseExperimentConfig(R"({"network": {"fusion_point": "stage9"}})"),
               std::invalid_argument);
  EXPECT_THROW(ParseExperimentConfig(R"({"seeds": []})"), ConfigError);
  EXPECT_THROW(ParseExperimentConfig("not json"), ConfigError);
  EXPECT_THROW(LoadExperimentConfig("/nonexistent/config.json"), std::exception);
}

TEST(Config, EchoRoundTrips) {
  ExperimentConfig c = ParseExperimentConfig(kTinyConfig);
  c.data.class_weights = Wm811kClassWeights();
  c.ablate_fusion_points = {FusionPoint::kNone, FusionPoint::kAfterStage3};
  const auto echo = ExperimentConfigToJson(c);
  const ExperimentConfig back = ParseExperimentConfig(echo.dump());
  EXPECT_EQ(ExperimentConfigToJson(back).dump(), echo.dump());
  const ExperimentConfig named = ParseExperimentConfig(R"({"data": {"class_weights": "wm811k"}})");
  EXPECT_EQ(named.data.class_weights, Wm811kClassWeights());
}

TEST_F(Scratch, GenerateIsDeterministicAndCounts) {
  ExperimentConfig c = Tiny("gen");
  c.data.num_maps = 1000;
  c.data.class_weights = Wm811kClassWeights();
  CmdGenerate(c);
  const std::string first = ReadFile(c.output_dir / files::kDataset);
  const std::string stats_text = ReadFile(c.output_dir / files::kStats);
  CmdGenerate(c);
  EXPECT_EQ(ReadFile(c.output_dir / files::kDataset), first);
  EXPECT_EQ(ReadFile(c.output_dir / files::kStats), stats_text);

  const auto stats = ReadJson(c.output_dir / files::kStats);
  std::size_t total = 0, i = 0;
  double weight_sum = 0;
  for (double w : c.data.class_weights) weight_sum += w;
  for (const auto& [name, count] : stats["class_counts"].items()) {
    const auto n = count.get<std::size_t>();
    total += n;
    const double expect = c.data.class_weights[i++] * 1000.0 / weight_sum;
    EXPECT_LE(std::abs(static_cast<double>(n) - expect), 1.0) << name;
  }
  EXPECT_EQ(i, 9u);
  EXPECT_EQ(total, 1000u);
  EXPECT_EQ(Ingest(c.output_dir / files::kDataset).size(), 1000u);
}

TEST_F(Scratch, RunWritesReportsAndIsDeterministic) {
  const ExperimentConfig a = Tiny("a");
  const auto summary = CmdRun(a);
  for (std::uint64_t s : {1, 2, 3}) {
    EXPECT_TRUE(fs::exists(a.output_dir / files::SeedReport(s))) << s;
  }
  std::size_t files_written = 0;
  for (const auto& e : fs::directory_iterator(a.output_dir)) {
    files_written += e.path().filename().string().rfind("report_seed", 0) == 0;
  }
  EXPECT_EQ(files_written, 3u);
  EXPECT_TRUE(fs::exists(a.output_dir / files::kSummary));
  EXPECT_TRUE(fs::exists(a.output_dir / files::kSummaryTable));

  for (const char* model : {"teacher", "student"}) {
    for (const auto& [metric, s] : summary[model].items()) {
      const double mean = s["mean"], lo = s["min"], hi = s["max"];
      EXPECT_LE(lo, mean) << model << " " << metric;
      EXPECT_LE(mean, hi) << model << " " << metric;
      EXPECT_GE(s["std"].get<double>(), 0.0);
      EXPECT_EQ(s["values"].size(), 3u);
    }
  }
  const auto report = ReadJson(a.output_dir / files::SeedReport(2));
  EXPECT_EQ(report["seed"], 2);
  EXPECT_TRUE(report.contains("experiment"));

  const std::string first = ReadFile(a.output_dir / files::kSummary);
  CmdRun(a);
  EXPECT_EQ(ReadFile(a.output_dir / files::kSummary), first);
}

TEST_F(Scratch, StepwiseMatchesRun) {
  ExperimentConfig c = Tiny("steps");
  c.seeds = {2};
  CmdGenerate(c);
  CmdPretrainVae(c);
  CmdTrainTeacher(c);
  CmdPseudoLabel(c);
  CmdTrainStudent(c);
  CmdEvaluate(c);
  const auto eval = ReadJson(c.output_dir / files::kEvaluation);

  ExperimentConfig r = Tiny("whole");
  r.seeds = {2};
  CmdRun(r);
  const auto report = ReadJson(r.output_dir / files::SeedReport(2));
  EXPECT_EQ(eval["teacher"].dump(), report["teacher"].dump());
  EXPECT_EQ(eval["student"].dump(), report["student"].dump());
  EXPECT_EQ(eval["pseudo_labels"].dump(), report["pseudo_labels"].dump());
}

TEST_F(Scratch, StepwiseChecksPrerequisitesAndSeeds) {
  ExperimentConfig c = Tiny("pre");
  c.seeds = {1};
  try {
    CmdTrainTeacher(c);
    FAIL() << "expected a step error";
  } catch (const StepError& e) {
    EXPECT_EQ(e.step(), "load-vae");
  }
  CmdPretrainVae(c);
  c.seeds = {5};
  EXPECT_THROW(CmdTrainTeacher(c), StepError);
}

TEST_F(Scratch, AblateRowsAndBaseline) {
  ExperimentConfig c = Tiny("ablate");
  c.seeds = {1, 2};
  c.ablate_fusion_points = {FusionPoint::kNone, FusionPoint::kAfterStage2};
  const auto table = CmdAblate(c);
  ASSERT_EQ(table["rows"].size(), 2u);
  for (const auto& row : table["rows"]) {
    for (const char* col : {"P", "R", "F1", "A"}) EXPECT_TRUE(row.contains(col));
    EXPECT_EQ(row["seeds"], table["rows"][0]["seeds"]);
    EXPECT_EQ(row["data"], table["rows"][0]["data"]);
  }
  const std::string csv = ReadFile(c.output_dir / files::kAblationCsv);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "fusion_point,P,R,F1,A");

  ExperimentConfig base = c;
  base.network.fusion_point = FusionPoint::kNone;
  base.output_dir = dir_ / "baseline";
  const auto summary = CmdRun(base);
  EXPECT_EQ(table["rows"][0]["fusion_point"], "none");
  EXPECT_EQ(table["rows"][0]["F1"].dump(), summary["student"]["macro_f1"].dump());
  EXPECT_EQ(table["rows"][0]["A"].dump(), summary["student"]["accuracy"].dump());

  c.ablate_fusion_points = {FusionPoint::kNone};
  EXPECT_THROW(CmdAblate(c), StepError);
}

#ifdef WAFERSEMI_CLI
int Cli(const std::string& args, const fs::path& err) {
  const std::string cmd = std::string(WAFERSEMI_CLI) + " " + args + " 2>" + err.string() +
                          " >/dev/null";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

TEST_F(Scratch, CliExitStatus) {
  const fs::path err = dir_ / "stderr.txt";
  const fs::path good = dir_ / "good.json", bad = dir_ / "bad.json";
  std::ofstream(good) << kTinyConfig;
  std::ofstream(bad) << R"({"vae": {"epochz": 1}})";

  EXPECT_EQ(Cli("generate --config " + good.string() + " --out " + (dir_ / "g").string(), err), 0);
  EXPECT_TRUE(fs::exists(dir_ / "g" / files::kDataset));

  EXPECT_EQ(Cli("generate --config " + bad.string(), err), 1);
  EXPECT_NE(ReadFile(err).find("epochz"), std::string::npos);

  EXPECT_EQ(Cli("train-teacher --config " + good.string() + " --out " + (dir_ / "t").string(), err), 1);
  EXPECT_NE(ReadFile(err).find("step load-vae"), std::string::npos);

  EXPECT_NE(Cli("", err), 0);
  EXPECT_NE(Cli("no-such-command", err), 0);
}
#endif

}  // namespace
}  // namespace wafersemi
