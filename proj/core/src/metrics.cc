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

#include "wafersemi/metrics.h"

#include <cstdio>
#include <numeric>

namespace wafersemi {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : k_(num_classes), counts_(num_classes * num_classes, 0) {
  RequireArg(num_classes > 0, "confusion matrix needs at least one class");
}

std::uint64_t ConfusionMatrix::Total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::Trace() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < k_; ++i) t += at(i, i);
  return t;
}

std::uint64_t ConfusionMatrix::RowSum(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < k_; ++j) s += at(truth, j);
  return s;
}

std::uint64_t ConfusionMatrix::ColumnSum(std::size_t predicted) const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < k_; ++i) s += at(i, predicted);
  return s;
}

ConfusionMatrix BuildConfusion(std::span<const int> truth,
                               std::span<const int> predicted,
                               std::size_t num_classes) {
  RequireArg(truth.size() == predicted.size(),
             "confusion: " + std::to_string(truth.size()) + " true labels vs " +
                 std::to_string(predicted.size()) + " predictions");
  ConfusionMatrix m(num_classes);
  const auto k = static_cast<int>(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    RequireArg(truth[i] >= 0 && truth[i] < k && predicted[i] >= 0 &&
                   predicted[i] < k,
               "confusion: label out of range at position " +
                   std::to_string(i));
    m.Add(static_cast<std::size_t>(truth[i]),
          static_cast<std::size_t>(predicted[i]));
  }
  return m;
}

MetricsReport ComputeMetrics(const ConfusionMatrix& confusion) {
  MetricsReport report;
  report.confusion = confusion;
  const std::size_t k = confusion.num_classes();
  double sum_p = 0.0, sum_r = 0.0, sum_f = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    ClassMetrics m;
    const auto tp = static_cast<double>(confusion.at(c, c));
    m.support = confusion.RowSum(c);
    m.predicted = confusion.ColumnSum(c);
    m.precision_undefined = m.predicted == 0;
    m.no_support = m.support == 0;
    m.precision = m.precision_undefined ? 0.0 : tp / static_cast<double>(m.predicted);
    m.recall = m.no_support ? 0.0 : tp / static_cast<double>(m.support);
    const double denom = m.precision + m.recall;
    m.f1 = denom > 0.0 ? 2.0 * m.precision * m.recall / denom : 0.0;
    if (!m.no_support) {
      sum_p += m.precision;
      sum_r += m.recall;
      sum_f += m.f1;
      ++report.macro_classes;
    }
    report.per_class.push_back(m);
  }
  if (report.macro_classes > 0) {
    const auto n = static_cast<double>(report.macro_classes);
    report.macro_precision = sum_p / n;
    report.macro_recall = sum_r / n;
    report.macro_f1 = sum_f / n;
  }
  const std::uint64_t total = confusion.Total();
  report.accuracy = total ? static_cast<double>(confusion.Trace()) /
                                static_cast<double>(total)
                          : 0.0;
  return report;
}

MetricsReport Evaluate(const ResidualClassifier& model, const Vae* vae,
                       std::span<const WaferMap> test) {
  RequireArg(!test.empty(), "evaluate: empty test set");
  std::vector<int> truth;
  truth.reserve(test.size());
  for (const WaferMap& m : test) {
    RequireArg(m.label().has_value(),
               "evaluate: test map " + m.id() + " has no label");
    truth.push_back(*m.label());
  }
  std::vector<int> predicted;
  predicted.reserve(test.size());
  for (const Prediction& p : Predict(model, vae, test)) {
    predicted.push_back(p.label);
  }
  return ComputeMetrics(
      BuildConfusion(truth, predicted, model.config().num_classes));
}

nlohmann::ordered_json MetricsToJson(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["accuracy"] = r.accuracy;
  j["macro_precision"] = r.macro_precision;
  j["macro_recall"] = r.macro_recall;
  j["macro_f1"] = r.macro_f1;
  j["macro_classes"] = r.macro_classes;
  j["examples"] = r.confusion.Total();
  auto& classes = j["per_class"] = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const ClassMetrics& m = r.per_class[c];
    nlohmann::ordered_json e;
    e["class"] = c;
    e["name"] = c < kNumClasses ? std::string(PatternName(static_cast<int>(c)))
                                : std::to_string(c);
    e["precision"] = m.precision;
    e["recall"] = m.recall;
    e["f1"] = m.f1;
    e["support"] = m.support;
    e["predicted"] = m.predicted;
    e["precision_undefined"] = m.precision_undefined;
    e["no_support"] = m.no_support;
    classes.push_back(std::move(e));
  }
  auto& rows = j["confusion"] = nlohmann::ordered_json::array();
  const std::size_t k = r.confusion.num_classes();
  for (std::size_t i = 0; i < k; ++i) {
    auto row = nlohmann::ordered_json::array();
    for (std::size_t jx = 0; jx < k; ++jx) row.push_back(r.confusion.at(i, jx));
    rows.push_back(std::move(row));
  }
  return j;
}

std::string RenderMetricsTable(const MetricsReport& r) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %9s %9s %9s %8s\n", "class",
                "precision", "recall", "f1", "support");
  out += line;
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const ClassMetrics& m = r.per_class[c];
    const std::string name = c < kNumClasses
                                 ? std::string(PatternName(static_cast<int>(c)))
                                 : std::to_string(c);
    std::snprintf(line, sizeof(line), "%-10s %9.4f %9.4f %9.4f %8llu%s\n",
                  name.c_str(), m.precision, m.recall, m.f1,
                  static_cast<unsigned long long>(m.support),
                  m.no_support ? "  (no support)"
                  : m.precision_undefined ? "  (no predictions)"
                                          : "");
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-10s %9.4f %9.4f %9.4f %8llu\n", "macro",
                r.macro_precision, r.macro_recall, r.macro_f1,
                static_cast<unsigned long long>(r.confusion.Total()));
  out += line;
  std::snprintf(line, sizeof(line), "%-10s %9.4f\n", "accuracy", r.accuracy);
  out += line;
  return out;
}

std::optional<int> EvaluationAccess::HiddenLabel(const UnlabeledPool& pool,
                                                 const std::string& id) {
  for (std::size_t i = 0; i < pool.maps_.size(); ++i) {
    if (pool.maps_[i].id() == id) return pool.hidden_labels_[i];
  }
  throw std::invalid_argument("unknown unlabeled id " + id);
}

std::vector<std::optional<int>> EvaluationAccess::HiddenLabels(
    const UnlabeledPool& pool) {
  return pool.hidden_labels_;
}

}  // namespace wafersemi
