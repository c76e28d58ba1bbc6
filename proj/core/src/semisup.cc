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

#include "wafersemi/semisup.h"

#include <algorithm>
#include <map>
#include <set>

namespace wafersemi {

void ValidatePipelineConfig(const PipelineConfig& config) {
  RequireArg(config.confidence_threshold > 1.0 / kNumClasses &&
                 config.confidence_threshold < 1.0,
             "confidence threshold must lie in (1/9, 1)");
  RequireArg(config.top_k >= 1, "top_k must be at least 1");
  RequireArg(config.fine_tune_lr_divisor > 0.0,
             "fine-tune learning-rate divisor must be positive");
  ValidateNetworkConfig(config.teacher_network);
  ValidateNetworkConfig(config.student_network);
}

std::vector<PseudoLabel> ScoreUnlabeled(const ResidualClassifier& teacher,
                                        const Vae* vae,
                                        const UnlabeledPool& pool) {
  RequireArg(pool.size() > 0, "score_unlabeled: empty unlabeled pool");
  const auto predictions = Predict(teacher, vae, pool.maps());
  std::vector<PseudoLabel> out;
  out.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    out.push_back({pool.maps()[i].id(), predictions[i].label,
                   predictions[i].confidence});
  }
  return out;
}

std::vector<PseudoLabel> SelectTopK(std::span<const PseudoLabel> pseudo,
                                    std::size_t k, double threshold) {
  RequireArg(k >= 1, "select_topk: k must be at least 1");
  RequireArg(threshold > 0.0 && threshold < 1.0,
             "select_topk: threshold must lie in (0, 1)");
  std::map<int, std::vector<PseudoLabel>> by_class;
  for (const PseudoLabel& p : pseudo) {
    if (p.confidence >= threshold) by_class[p.predicted_class].push_back(p);
  }
  std::vector<PseudoLabel> out;
  for (auto& [cls, members] : by_class) {
    std::sort(members.begin(), members.end(),
              [](const PseudoLabel& a, const PseudoLabel& b) {
                if (a.confidence != b.confidence) {
                  return a.confidence > b.confidence;
                }
                return a.example_id < b.example_id;
              });
    if (members.size() > k) members.resize(k);
    out.insert(out.end(), members.begin(), members.end());
  }
  return out;
}

std::vector<TrainingExample> BuildStudentSet(
    std::span<const WaferMap> labeled, std::span<const PseudoLabel> selected,
    const UnlabeledPool& pool) {
  std::vector<TrainingExample> out = FromLabeled(labeled);
  std::set<std::string> ids;
  for (const WaferMap& m : labeled) ids.insert(m.id());
  for (const PseudoLabel& p : selected) {
    const WaferMap& map = pool.Find(p.example_id);
    RequireArg(ids.insert(p.example_id).second,
               "build_student_set: id " + p.example_id + " appears twice");
    RequireArg(IsValidLabel(p.predicted_class),
               "build_student_set: invalid pseudo-label class");
    out.push_back({map, p.predicted_class, LabelSource::kPseudo});
  }
  return out;
}

ResidualClassifier TrainStudent(const NetworkConfig& config, const Vae* vae,
                                std::span<const TrainingExample> student_set,
                                const TrainConfig& train,
                                std::uint64_t init_seed,
                                TrainHistory* history) {
  ResidualClassifier student(config, init_seed);
  TrainHistory h = TrainSupervised(student, vae, student_set, train);
  if (history) *history = std::move(h);
  return student;
}

TrainHistory FineTune(ResidualClassifier& student, const Vae* vae,
                      std::span<const WaferMap> labeled, std::size_t epochs,
                      const TrainConfig& train) {
  RequireArg(!labeled.empty(), "fine_tune: empty labeled set");
  if (epochs == 0) return {};
  TrainConfig config = train;
  config.epochs = epochs;
  const auto examples = FromLabeled(labeled);
  return TrainSupervised(student, vae, examples, config);
}

ResidualClassifier TrainTeacher(const PipelineConfig& config,
                                std::span<const WaferMap> labeled,
                                const Vae* vae, TrainHistory* history) {
  RequireArg(!labeled.empty(), "train_teacher: no labeled maps");
  ResidualClassifier teacher(config.teacher_network,
                             DeriveSeed(config.seed, "teacher-init"));
  TrainConfig train = config.teacher_train;
  train.seed = DeriveSeed(config.seed, "teacher-train");
  const auto examples = FromLabeled(labeled);
  TrainHistory h = TrainSupervised(teacher, vae, examples, train);
  if (history) *history = std::move(h);
  return teacher;
}

StudentOutcome TrainStudentPhase(const PipelineConfig& config,
                                 std::span<const WaferMap> labeled,
                                 std::span<const PseudoLabel> selected,
                                 const UnlabeledPool& pool, const Vae* vae) {
  const auto student_set = BuildStudentSet(labeled, selected, pool);
  TrainConfig train = config.student_train;
  train.seed = DeriveSeed(config.seed, "student-train");
  TrainHistory training;
  ResidualClassifier student =
      TrainStudent(config.student_network, vae, student_set, train,
                   DeriveSeed(config.seed, "student-init"), &training);

  TrainConfig fine_tune = config.student_train;
  fine_tune.adam.lr /= config.fine_tune_lr_divisor;
  fine_tune.seed = DeriveSeed(config.seed, "fine-tune");
  TrainHistory tuned =
      FineTune(student, vae, labeled, config.fine_tune_epochs, fine_tune);
  return {std::move(student), std::move(training), std::move(tuned)};
}

PseudoLabelStats ScorePseudoLabels(std::span<const PseudoLabel> scored,
                                   std::span<const PseudoLabel> selected,
                                   const UnlabeledPool& pool) {
  auto accuracy = [&pool](std::span<const PseudoLabel> labels) {
    std::size_t hits = 0, known = 0;
    for (const PseudoLabel& p : labels) {
      const auto truth = EvaluationAccess::HiddenLabel(pool, p.example_id);
      if (!truth) continue;
      ++known;
      hits += *truth == p.predicted_class;
    }
    return known ? static_cast<double>(hits) / static_cast<double>(known)
                 : 0.0;
  };
  PseudoLabelStats stats;
  for (const PseudoLabel& p : selected) {
    RequireArg(IsValidLabel(p.predicted_class), "invalid pseudo-label class");
    ++stats.selected_per_class[static_cast<std::size_t>(p.predicted_class)];
  }
  stats.accuracy_selected = accuracy(selected);
  stats.accuracy_all = accuracy(scored);
  return stats;
}

PipelineResult RunPipeline(const PipelineConfig& config,
                           const DatasetSplit& split, const Vae* vae) {
  ValidatePipelineConfig(config);
  RequireArg(!split.test.empty(), "pipeline: no test maps");

  TrainHistory teacher_history;
  ResidualClassifier teacher =
      TrainTeacher(config, split.labeled, vae, &teacher_history);

  std::vector<PseudoLabel> pseudo;
  std::vector<PseudoLabel> selected;
  if (split.unlabeled.size() > 0) {
    pseudo = ScoreUnlabeled(teacher, vae, split.unlabeled);
    selected = SelectTopK(pseudo, config.top_k, config.confidence_threshold);
  }

  StudentOutcome student = TrainStudentPhase(config, split.labeled, selected,
                                             split.unlabeled, vae);

  PipelineResult result(std::move(teacher), std::move(student.student));
  result.teacher_history = std::move(teacher_history);
  result.student_history = std::move(student.training);
  result.fine_tune_history = std::move(student.fine_tune);
  result.pseudo_stats = ScorePseudoLabels(pseudo, selected, split.unlabeled);
  result.pseudo_labels = std::move(pseudo);
  result.selected = std::move(selected);
  result.teacher_metrics = Evaluate(result.teacher, vae, split.test);
  result.student_metrics = Evaluate(result.student, vae, split.test);
  return result;
}

namespace {

nlohmann::ordered_json TrainConfigToJson(const TrainConfig& t) {
  nlohmann::ordered_json j;
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["lr"] = t.adam.lr;
  j["beta1"] = t.adam.beta1;
  j["beta2"] = t.adam.beta2;
  j["epsilon"] = t.adam.epsilon;
  return j;
}

}  // namespace

nlohmann::ordered_json TrainHistoryToJson(const TrainHistory& h) {
  nlohmann::ordered_json j;
  auto loss = nlohmann::ordered_json::array();
  auto acc = nlohmann::ordered_json::array();
  for (const EpochStats& e : h.epochs) {
    loss.push_back(e.loss);
    acc.push_back(e.accuracy);
  }
  j["loss"] = std::move(loss);
  j["accuracy"] = std::move(acc);
  j["optimizer_steps"] = h.optimizer_steps;
  return j;
}

nlohmann::ordered_json PseudoLabelStatsToJson(const PseudoLabelStats& stats,
                                              std::size_t scored,
                                              std::size_t selected) {
  nlohmann::ordered_json j;
  j["scored"] = scored;
  j["selected"] = selected;
  auto per_class = nlohmann::ordered_json::object();
  for (int c = 0; c < kNumClasses; ++c) {
    per_class[std::string(PatternName(c))] =
        stats.selected_per_class[static_cast<std::size_t>(c)];
  }
  j["selected_per_class"] = std::move(per_class);
  j["accuracy_selected"] = stats.accuracy_selected;
  j["accuracy_all"] = stats.accuracy_all;
  return j;
}

nlohmann::ordered_json PipelineConfigToJson(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["confidence_threshold"] = c.confidence_threshold;
  j["top_k"] = c.top_k;
  j["fine_tune_epochs"] = c.fine_tune_epochs;
  j["fine_tune_lr_divisor"] = c.fine_tune_lr_divisor;
  j["teacher_network"] = NetworkConfigToJson(c.teacher_network);
  j["student_network"] = NetworkConfigToJson(c.student_network);
  j["teacher_train"] = TrainConfigToJson(c.teacher_train);
  j["student_train"] = TrainConfigToJson(c.student_train);
  j["seed"] = c.seed;
  return j;
}

nlohmann::ordered_json PipelineReportToJson(const PipelineResult& r,
                                            const PipelineConfig& config) {
  nlohmann::ordered_json j;
  j["seed"] = config.seed;
  j["teacher"] = MetricsToJson(r.teacher_metrics);
  j["student"] = MetricsToJson(r.student_metrics);
  j["pseudo_labels"] = PseudoLabelStatsToJson(
      r.pseudo_stats, r.pseudo_labels.size(), r.selected.size());
  nlohmann::ordered_json hist;
  hist["teacher"] = TrainHistoryToJson(r.teacher_history);
  hist["student"] = TrainHistoryToJson(r.student_history);
  hist["fine_tune"] = TrainHistoryToJson(r.fine_tune_history);
  j["history"] = std::move(hist);
  j["config"] = PipelineConfigToJson(config);
  return j;
}

}  // namespace wafersemi
