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

#ifndef WAFERSEMI_WAFER_MAP_H_
#define WAFERSEMI_WAFER_MAP_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wafersemi/tensor.h"

namespace wafersemi {

enum class DieState : std::uint8_t { kOffWafer = 0, kPass = 1, kFail = 2 };

inline constexpr int kNumClasses = 9;

// WM-811K failure-type indices. kNone (8) is the defect-free class.
enum class DefectPattern : int {
  kCenter = 0,
  kDonut = 1,
  kEdgeLoc = 2,
  kEdgeRing = 3,
  kLoc = 4,
  kRandom = 5,
  kScratch = 6,
  kNearFull = 7,
  kNone = 8,
};

std::string_view PatternName(int label);
std::optional<int> PatternFromName(std::string_view name);

inline bool IsValidLabel(int label) { return label >= 0 && label < kNumClasses; }

class WaferMap {
 public:
  WaferMap() = default;
  // Throws std::invalid_argument unless every cell is 0/1/2, the grid is
  // non-empty and consistent with rows*cols, and the label is in 0..8.
  WaferMap(std::string id, std::size_t rows, std::size_t cols,
           std::vector<std::uint8_t> cells,
           std::optional<int> label = std::nullopt);

  const std::string& id() const { return id_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const std::vector<std::uint8_t>& cells() const { return cells_; }
  const std::optional<int>& label() const { return label_; }

  DieState at(std::size_t r, std::size_t c) const {
    return static_cast<DieState>(cells_[r * cols_ + c]);
  }
  std::size_t Count(DieState state) const;

  WaferMap WithId(std::string id) const;
  WaferMap WithLabel(std::optional<int> label) const;

  friend bool operator==(const WaferMap&, const WaferMap&) = default;

 private:
  std::string id_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> cells_;
  std::optional<int> label_;
};

struct GeneratorOptions {
  std::size_t size = 27;
  double noise_rate = 0.02;
};

// Geometry of the synthetic wafer disk on a size×size grid.
struct DiskGeometry {
  explicit DiskGeometry(std::size_t size);
  double center;
  double radius;
  double Distance(std::size_t r, std::size_t c) const;
  bool Inside(std::size_t r, std::size_t c) const;
};

// Draws one synthetic wafer with the geometric signature of `pattern` plus
// i.i.d. fail-die noise. Deterministic in (pattern, options, seed).
WaferMap Generate(int pattern, const GeneratorOptions& options,
                  std::uint64_t seed);

// Applies one of the 8 dihedral symmetries (0 = identity, 1..3 = rotations
// by 90/180/270 degrees, 4..7 = the rotations composed with a horizontal
// flip). Non-square maps accept only 0, 2, 4 and 6.
WaferMap ApplySymmetry(const WaferMap& map, int transform);

// One-hot die-state encoding [3,H,W]: channel k is 1 where the die state is k.
Tensor ToTensor(const WaferMap& map);

// Stacks maps into [N,3,canvas,canvas], centring each grid in an off-wafer
// border. All maps must share one shape; canvas = 0 means no framing.
Tensor EncodeBatch(std::span<const WaferMap* const> maps,
                   std::size_t canvas = 0);

// Centres one-hot batches [N,3,H,W] in a canvas×canvas off-wafer frame.
Tensor FrameBatch(const Tensor& batch, std::size_t canvas);

// Smallest extent >= size, with the same parity, that stays odd through
// `halvings` successive n -> (n + 1) / 2 reductions. Stride-2 windows then
// tile every intermediate map exactly.
std::size_t CanvasForHalvings(std::size_t size, int halvings);

}  // namespace wafersemi

#endif  // WAFERSEMI_WAFER_MAP_H_
