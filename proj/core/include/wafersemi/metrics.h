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

#ifndef WAFERSEMI_METRICS_H_
#define WAFERSEMI_METRICS_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wafersemi/classifier.h"
#include "wafersemi/wafer_data.h"

namespace wafersemi {

// K×K counts; rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  ConfusionMatrix() : ConfusionMatrix(kNumClasses) {}
  explicit ConfusionMatrix(std::size_t num_classes);

  std::size_t num_classes() const { return k_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * k_ + predicted];
  }
  void Add(std::size_t truth, std::size_t predicted) {
    ++counts_[truth * k_ + predicted];
  }
  std::uint64_t Total() const;
  std::uint64_t Trace() const;
  std::uint64_t RowSum(std::size_t truth) const;
  std::uint64_t ColumnSum(std::size_t predicted) const;

  friend bool operator==(const ConfusionMatrix&,
                         const ConfusionMatrix&) = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

// Throws std::invalid_argument on length mismatch or labels outside 0..K-1.
ConfusionMatrix BuildConfusion(std::span<const int> truth,
                               std::span<const int> predicted,
                               std::size_t num_classes);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;    // TP + FN
  std::uint64_t predicted = 0;  // TP + FP
  // No predicted positives: precision reported as 0.
  bool precision_undefined = false;
  // No true examples: recall reported as 0 and the class is left out of the
  // macro averages.
  bool no_support = false;
};

struct MetricsReport {
  ConfusionMatrix confusion;
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::size_t macro_classes = 0;  // classes contributing to the macro means
};

// One-vs-rest TP/FP/FN per class from the confusion matrix:
// precision = TP/(TP+FP), recall = TP/(TP+FN), f1 = 2PR/(P+R),
// accuracy = trace/total; macro values are unweighted class means.
MetricsReport ComputeMetrics(const ConfusionMatrix& confusion);

MetricsReport Evaluate(const ResidualClassifier& model, const Vae* vae,
                       std::span<const WaferMap> test);

nlohmann::ordered_json MetricsToJson(const MetricsReport& report);
// Aligned plain-text table: one row per class plus macro and accuracy lines.
std::string RenderMetricsTable(const MetricsReport& report);

// The only reader of labels stripped from an UnlabeledPool. Evaluation and
// reporting code use it to score pseudo-labels; training code must not.
class EvaluationAccess {
 public:
  static std::optional<int> HiddenLabel(const UnlabeledPool& pool,
                                        const std::string& id);
  static std::vector<std::optional<int>> HiddenLabels(const UnlabeledPool& pool);
};

}  // namespace wafersemi

#endif  // WAFERSEMI_METRICS_H_
