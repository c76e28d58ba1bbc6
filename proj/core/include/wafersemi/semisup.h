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

#ifndef WAFERSEMI_SEMISUP_H_
#define WAFERSEMI_SEMISUP_H_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "wafersemi/classifier.h"
#include "wafersemi/metrics.h"
#include "wafersemi/vae.h"
#include "wafersemi/wafer_data.h"

namespace wafersemi {

struct PseudoLabel {
  std::string example_id;
  int predicted_class = 0;
  double confidence = 0.0;  // teacher's max softmax probability

  friend bool operator==(const PseudoLabel&, const PseudoLabel&) = default;
};

struct PipelineConfig {
  double confidence_threshold = 0.9;
  std::size_t top_k = 50;  // per predicted class
  NetworkConfig teacher_network;
  NetworkConfig student_network;
  TrainConfig teacher_train;
  TrainConfig student_train;
  std::size_t fine_tune_epochs = 5;
  // Fine-tuning runs at student_train.adam.lr / fine_tune_lr_divisor.
  double fine_tune_lr_divisor = 10.0;
  std::uint64_t seed = 1;
};

void ValidatePipelineConfig(const PipelineConfig& config);

// Step 2a: one pseudo-label per unlabelled map, in pool order.
std::vector<PseudoLabel> ScoreUnlabeled(const ResidualClassifier& teacher,
                                        const Vae* vae,
                                        const UnlabeledPool& pool);

// Step 2b: per predicted class, keep entries with confidence >= threshold,
// order by confidence descending then id ascending, and keep the first k.
// Result is grouped by class ascending in that order.
std::vector<PseudoLabel> SelectTopK(std::span<const PseudoLabel> pseudo,
                                    std::size_t k, double threshold);

// Original labelled maps (true labels) followed by the selected pool maps
// carrying their pseudo-labels.
std::vector<TrainingExample> BuildStudentSet(
    std::span<const WaferMap> labeled, std::span<const PseudoLabel> selected,
    const UnlabeledPool& pool);

// Step 3: a freshly initialised student trained on the combined set.
ResidualClassifier TrainStudent(const NetworkConfig& config, const Vae* vae,
                                std::span<const TrainingExample> student_set,
                                const TrainConfig& train,
                                std::uint64_t init_seed,
                                TrainHistory* history = nullptr);

// Step 4: continued training on true labels only, with a fresh optimizer at
// the given (already reduced) learning rate. epochs == 0 is a no-op.
TrainHistory FineTune(ResidualClassifier& student, const Vae* vae,
                      std::span<const WaferMap> labeled, std::size_t epochs,
                      const TrainConfig& train);

// Step 1 with the pipeline's seed streams.
ResidualClassifier TrainTeacher(const PipelineConfig& config,
                                std::span<const WaferMap> labeled,
                                const Vae* vae,
                                TrainHistory* history = nullptr);

struct StudentOutcome {
  ResidualClassifier student;
  TrainHistory training;
  TrainHistory fine_tune;
};

// Steps 3 and 4 with the pipeline's seed streams.
StudentOutcome TrainStudentPhase(const PipelineConfig& config,
                                 std::span<const WaferMap> labeled,
                                 std::span<const PseudoLabel> selected,
                                 const UnlabeledPool& pool, const Vae* vae);

struct PseudoLabelStats {
  std::array<std::size_t, kNumClasses> selected_per_class{};
  // Fraction of selected pseudo-labels that match the hidden truth; 0 when
  // nothing was selected.
  double accuracy_selected = 0.0;
  // Same, over every scored unlabelled map.
  double accuracy_all = 0.0;
};

// Reporting only: reads hidden labels through EvaluationAccess.
PseudoLabelStats ScorePseudoLabels(std::span<const PseudoLabel> scored,
                                   std::span<const PseudoLabel> selected,
                                   const UnlabeledPool& pool);

struct PipelineResult {
  PipelineResult(ResidualClassifier t, ResidualClassifier s)
      : teacher(std::move(t)), student(std::move(s)) {}

  ResidualClassifier teacher;
  ResidualClassifier student;
  TrainHistory teacher_history;
  TrainHistory student_history;
  TrainHistory fine_tune_history;
  std::vector<PseudoLabel> pseudo_labels;
  std::vector<PseudoLabel> selected;
  PseudoLabelStats pseudo_stats;
  MetricsReport teacher_metrics;
  MetricsReport student_metrics;
};

// Teacher -> score -> top-K -> student -> fine-tune, then evaluation of
// teacher and student on split.test. `vae` may be null when neither network
// fuses latents.
PipelineResult RunPipeline(const PipelineConfig& config,
                           const DatasetSplit& split, const Vae* vae);

nlohmann::ordered_json PipelineConfigToJson(const PipelineConfig& config);
nlohmann::ordered_json TrainHistoryToJson(const TrainHistory& history);
nlohmann::ordered_json PseudoLabelStatsToJson(const PseudoLabelStats& stats,
                                              std::size_t scored,
                                              std::size_t selected);
nlohmann::ordered_json PipelineReportToJson(const PipelineResult& result,
                                            const PipelineConfig& config);

}  // namespace wafersemi

#endif  // WAFERSEMI_SEMISUP_H_
