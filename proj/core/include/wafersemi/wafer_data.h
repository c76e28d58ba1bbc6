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

#ifndef WAFERSEMI_WAFER_DATA_H_
#define WAFERSEMI_WAFER_DATA_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wafersemi/wafer_map.h"

namespace wafersemi {

using ClassWeights = std::array<double, kNumClasses>;
using ClassHistogram = std::array<std::size_t, kNumClasses>;

ClassWeights UniformClassWeights();

// Class mix of the labelled WM-811K subset: 85.2% defect-free, Donut 0.3%,
// Near-full 0.1%, the remaining defect classes in between.
ClassWeights Wm811kClassWeights();

// Per-class counts summing to `total`, by largest remainder (each count is
// within one of weight * total / sum(weights)).
std::vector<std::size_t> ApportionCounts(const ClassWeights& weights,
                                         std::size_t total);

struct SyntheticDatasetOptions {
  std::size_t num_maps = 1000;
  GeneratorOptions generator;
  ClassWeights class_weights = UniformClassWeights();
  std::uint64_t seed = 2024;
};

// Labelled synthetic corpus with ids "w000000", "w000001", ... in a
// seed-determined class order.
std::vector<WaferMap> GenerateDataset(const SyntheticDatasetOptions& options);

ClassHistogram CountClasses(std::span<const WaferMap> maps);

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// JSON-lines ingestion: one object per line with `grid` (rows of 0/1/2),
// optional `id` and optional `label` (0..8 or a class name). Other fields
// are ignored. Records without an id get "line-<n>". Blank lines are skipped.
std::vector<WaferMap> ParseJsonl(const std::string& text);
std::vector<WaferMap> Ingest(const std::filesystem::path& path);

// Inverse of ParseJsonl; output bytes depend only on the input sequence.
std::string ExportJsonl(std::span<const WaferMap> maps);
void WriteJsonl(const std::filesystem::path& path,
                std::span<const WaferMap> maps);

// Resamples a labelled list to exactly `target_per_class` maps per class.
// Over-represented classes are subsampled without replacement; rare classes
// keep every original plus duplicates drawn with replacement, each under a
// random dihedral symmetry and renamed "<id>~aug<k>". `classes` lists the
// classes to balance (all nine when empty); each must be present and every
// example must belong to one of them.
std::vector<WaferMap> Balance(std::span<const WaferMap> examples,
                              std::size_t target_per_class,
                              std::uint64_t seed,
                              std::span<const int> classes = {});

class EvaluationAccess;

// Maps whose labels were stripped for semi-supervised training. The
// stripped labels are kept privately and can only be read through
// EvaluationAccess, which training code never touches.
class UnlabeledPool {
 public:
  UnlabeledPool() = default;
  // Strips labels from `maps`, remembering them for evaluation.
  static UnlabeledPool FromLabeled(std::span<const WaferMap> maps);
  // Wraps maps that have no ground truth.
  static UnlabeledPool FromUnlabeled(std::vector<WaferMap> maps);

  const std::vector<WaferMap>& maps() const { return maps_; }
  std::size_t size() const { return maps_.size(); }
  const WaferMap& Find(const std::string& id) const;

 private:
  friend class EvaluationAccess;
  std::vector<WaferMap> maps_;
  std::vector<std::optional<int>> hidden_labels_;
};

struct DatasetSplit {
  std::vector<WaferMap> labeled;
  UnlabeledPool unlabeled;
  std::vector<WaferMap> test;
  std::uint64_t seed = 0;
};

struct SplitFractions {
  double labeled = 0.2;
  double unlabeled = 0.6;
  double test = 0.2;
};

// Deterministic shuffle-and-cut. Sizes are round(f*n) for the labelled and
// unlabelled parts, the remainder goes to test. Every input map must carry
// a label.
DatasetSplit Split(std::span<const WaferMap> maps,
                   const SplitFractions& fractions, std::uint64_t seed);

}  // namespace wafersemi

#endif  // WAFERSEMI_WAFER_DATA_H_
