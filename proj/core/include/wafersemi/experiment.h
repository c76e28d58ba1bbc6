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

#ifndef WAFERSEMI_EXPERIMENT_H_
#define WAFERSEMI_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wafersemi/classifier.h"
#include "wafersemi/metrics.h"
#include "wafersemi/semisup.h"
#include "wafersemi/vae.h"
#include "wafersemi/wafer_data.h"

namespace wafersemi {

struct DataSection {
  std::string source = "synthetic";  // "synthetic" or "jsonl"
  std::filesystem::path path;         // jsonl only
  std::size_t num_maps = 1000;
  std::size_t grid_size = 27;
  double noise_rate = 0.02;
  ClassWeights class_weights = UniformClassWeights();
  SplitFractions split;
  // Per-class count for the labelled portion; 0 leaves it as drawn.
  std::size_t balance_target = 0;
  // Generation seed; the data stay fixed across run seeds.
  std::uint64_t seed = 2024;
};

struct VaeSection {
  std::size_t latent_dim = 16;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 0.002;
  double kl_weight = 1.0;
  bool recenter_latents = true;
  std::array<std::size_t, 3> channels = {16, 32, 32};
};

struct NetworkSection {
  std::size_t stem_channels = 8;
  std::array<std::size_t, 4> block_counts = {1, 1, 2, 1};
  std::array<std::size_t, 4> widths = {8, 16, 32, 64};
  std::size_t expansion = 4;
  FusionPoint fusion_point = FusionPoint::kAfterStage2;
};

struct TrainSection {
  std::size_t teacher_epochs = 25;
  std::size_t student_epochs = 25;
  std::size_t batch_size = 32;
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
};

struct SemisupSection {
  double confidence_threshold = 0.9;
  std::size_t top_k = 50;
  std::size_t fine_tune_epochs = 5;
  double fine_tune_lr_divisor = 10.0;
};

struct ExperimentConfig {
  DataSection data;
  VaeSection vae;
  NetworkSection network;
  TrainSection train;
  SemisupSection semisup;
  std::vector<std::uint64_t> seeds = {1};
  std::filesystem::path output_dir = "out";
  // Insertion points compared by the ablate command.
  std::vector<FusionPoint> ablate_fusion_points = {
      FusionPoint::kNone, FusionPoint::kAfterStage1, FusionPoint::kAfterStage2,
      FusionPoint::kAfterStage3, FusionPoint::kAfterStage4};
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// JSON config. Every key is optional; unknown keys and out-of-range values
// throw ConfigError.
ExperimentConfig ParseExperimentConfig(const std::string& text);
ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path);
void ValidateExperimentConfig(const ExperimentConfig& config);
// Complete echo; parsing it yields the same config.
nlohmann::ordered_json ExperimentConfigToJson(const ExperimentConfig& config);

// Failure inside one named pipeline step.
class StepError : public std::runtime_error {
 public:
  StepError(std::string step, const std::string& message);
  const std::string& step() const { return step_; }

 private:
  std::string step_;
};

std::vector<WaferMap> LoadDataset(const ExperimentConfig& config);
// Split with the run seed, then balance the labelled portion.
DatasetSplit PrepareSplit(const ExperimentConfig& config,
                          std::span<const WaferMap> data, std::uint64_t seed);
// Maps the VAE is fitted on: labelled plus unlabelled, never test.
std::vector<WaferMap> VaeTrainingMaps(const DatasetSplit& split);

VaeConfig MakeVaeConfig(const ExperimentConfig& config, std::size_t rows,
                        std::size_t cols);
VaeTrainConfig MakeVaeTrainConfig(const ExperimentConfig& config,
                                  std::uint64_t seed);
PipelineConfig MakePipelineConfig(const ExperimentConfig& config,
                                  std::size_t rows, std::size_t cols,
                                  std::uint64_t seed);

struct SeedOutcome {
  std::uint64_t seed = 0;
  MetricsReport teacher;
  MetricsReport student;
  PseudoLabelStats pseudo;
  std::size_t selected = 0;
  nlohmann::ordered_json report;
};

// Full pipeline for one seed on an already loaded dataset. Progress lines
// go to `log` when given.
SeedOutcome RunSeed(const ExperimentConfig& config,
                    std::span<const WaferMap> data, std::uint64_t seed,
                    std::ostream* log = nullptr);

// Mean, population standard deviation, min and max of every reported
// metric across seeds.
nlohmann::ordered_json SummarizeSeeds(const ExperimentConfig& config,
                                      std::span<const SeedOutcome> runs);

// Subcommands. Each reads `config`, writes into config.output_dir and
// throws on failure. Stepwise commands use config.seeds.front().
void CmdGenerate(const ExperimentConfig& config, std::ostream* log = nullptr);
void CmdPretrainVae(const ExperimentConfig& config,
                    std::ostream* log = nullptr);
void CmdTrainTeacher(const ExperimentConfig& config,
                     std::ostream* log = nullptr);
void CmdPseudoLabel(const ExperimentConfig& config,
                    std::ostream* log = nullptr);
void CmdTrainStudent(const ExperimentConfig& config,
                     std::ostream* log = nullptr);
void CmdEvaluate(const ExperimentConfig& config, std::ostream* log = nullptr);
// Writes report_seed<S>.json per seed plus summary.json and summary.txt.
nlohmann::ordered_json CmdRun(const ExperimentConfig& config,
                              std::ostream* log = nullptr);
// Runs CmdRun per fusion point into <output_dir>/<point>/ and writes
// ablation.{txt,csv,json}.
nlohmann::ordered_json CmdAblate(const ExperimentConfig& config,
                                 std::ostream* log = nullptr);

namespace files {
inline constexpr const char* kDataset = "dataset.jsonl";
inline constexpr const char* kStats = "stats.json";
inline constexpr const char* kVae = "vae.ckpt.json";
inline constexpr const char* kVaeReport = "vae_report.json";
inline constexpr const char* kTeacher = "teacher.ckpt.json";
inline constexpr const char* kTeacherReport = "teacher_report.json";
inline constexpr const char* kPseudoLabels = "pseudo_labels.json";
inline constexpr const char* kStudent = "student.ckpt.json";
inline constexpr const char* kStudentReport = "student_report.json";
inline constexpr const char* kEvaluation = "evaluation.json";
inline constexpr const char* kEvaluationTable = "evaluation.txt";
inline constexpr const char* kSummary = "summary.json";
inline constexpr const char* kSummaryTable = "summary.txt";
inline constexpr const char* kAblationJson = "ablation.json";
inline constexpr const char* kAblationCsv = "ablation.csv";
inline constexpr const char* kAblationTable = "ablation.txt";
std::string SeedReport(std::uint64_t seed);
}  // namespace files

}  // namespace wafersemi

#endif  // WAFERSEMI_EXPERIMENT_H_
