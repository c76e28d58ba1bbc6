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

#include "wafersemi/wafer_map.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "wafersemi/random.h"

namespace wafersemi {
namespace {

constexpr std::array<std::string_view, kNumClasses> kPatternNames = {
    "Center", "Donut",   "Edge-Loc",  "Edge-Ring", "Loc",
    "Random", "Scratch", "Near-full", "none"};

double AngleDiff(double a, double b) {
  double d = std::fmod(std::abs(a - b), 2.0 * std::numbers::pi);
  return d > std::numbers::pi ? 2.0 * std::numbers::pi - d : d;
}

// Marks exactly round-up(fraction * |disk|) disk cells as failing.
void FailExactFraction(const std::vector<std::size_t>& disk, double fraction,
                       std::vector<std::uint8_t>& cells, Rng& rng) {
  std::vector<std::size_t> order = disk;
  std::shuffle(order.begin(), order.end(), rng);
  const auto count = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(disk.size())));
  for (std::size_t i = 0; i < std::min(count, order.size()); ++i) {
    cells[order[i]] = static_cast<std::uint8_t>(DieState::kFail);
  }
}

void DrawScratch(const DiskGeometry& disk, std::size_t size,
                 std::vector<std::uint8_t>& cells, Rng& rng) {
  const double r = disk.radius;
  const double length = UniformReal(rng, 0.5, 1.2) * r;
  const double start_radius = UniformReal(rng, 0.0, 0.3) * r;
  const double start_angle = UniformReal(rng, 0.0, 2.0 * std::numbers::pi);
  const double heading = UniformReal(rng, 0.0, 2.0 * std::numbers::pi);
  const double sy = disk.center + start_radius * std::sin(start_angle);
  const double sx = disk.center + start_radius * std::cos(start_angle);
  const double limit = 0.92 * r;

  double walked = 0.0;
  // Walk forward from the start; if the rim stops the walk early, continue
  // from the start in the opposite direction.
  for (int pass = 0; pass < 2 && walked < length; ++pass) {
    double y = sy, x = sx;
    double theta = heading + (pass == 0 ? 0.0 : std::numbers::pi);
    while (walked < length) {
      const auto ry = static_cast<long>(std::lround(y));
      const auto rx = static_cast<long>(std::lround(x));
      cells[static_cast<std::size_t>(ry) * size + static_cast<std::size_t>(rx)] =
          static_cast<std::uint8_t>(DieState::kFail);
      theta += 0.12 * StandardNormal(rng);
      const double ny = y + 0.5 * std::sin(theta);
      const double nx = x + 0.5 * std::cos(theta);
      if (std::hypot(ny - disk.center, nx - disk.center) > limit) break;
      y = ny;
      x = nx;
      walked += 0.5;
    }
  }
}

}  // namespace

std::string_view PatternName(int label) {
  RequireArg(IsValidLabel(label), "invalid class index " +
                                      std::to_string(label));
  return kPatternNames[static_cast<std::size_t>(label)];
}

std::optional<int> PatternFromName(std::string_view name) {
  for (std::size_t i = 0; i < kPatternNames.size(); ++i) {
    if (kPatternNames[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

WaferMap::WaferMap(std::string id, std::size_t rows, std::size_t cols,
                   std::vector<std::uint8_t> cells, std::optional<int> label)
    : id_(std::move(id)),
      rows_(rows),
      cols_(cols),
      cells_(std::move(cells)),
      label_(label) {
  RequireArg(rows_ > 0 && cols_ > 0, "wafer map must be non-empty");
  RequireArg(cells_.size() == rows_ * cols_,
             "wafer map cell count does not match rows*cols");
  for (std::uint8_t v : cells_) {
    RequireArg(v <= 2, "wafer map cell value " + std::to_string(v) +
                           " is not a die state");
  }
  RequireArg(!label_ || IsValidLabel(*label_),
             "wafer map label " + std::to_string(label_.value_or(-1)) +
                 " outside 0..8");
}

std::size_t WaferMap::Count(DieState state) const {
  return static_cast<std::size_t>(std::count(
      cells_.begin(), cells_.end(), static_cast<std::uint8_t>(state)));
}

WaferMap WaferMap::WithId(std::string id) const {
  WaferMap copy = *this;
  copy.id_ = std::move(id);
  return copy;
}

WaferMap WaferMap::WithLabel(std::optional<int> label) const {
  return WaferMap(id_, rows_, cols_, cells_, label);
}

DiskGeometry::DiskGeometry(std::size_t size)
    : center((static_cast<double>(size) - 1.0) / 2.0),
      radius(static_cast<double>(size) / 2.0) {}

double DiskGeometry::Distance(std::size_t r, std::size_t c) const {
  return std::hypot(static_cast<double>(r) - center,
                    static_cast<double>(c) - center);
}

bool DiskGeometry::Inside(std::size_t r, std::size_t c) const {
  return Distance(r, c) <= radius;
}

WaferMap Generate(int pattern, const GeneratorOptions& options,
                  std::uint64_t seed) {
  RequireArg(IsValidLabel(pattern),
             "invalid class index " + std::to_string(pattern));
  const std::size_t size = options.size;
  RequireArg(size >= 15 && size % 2 == 1 && size <= 255,
             "wafer size must be an odd integer in [15, 255], got " +
                 std::to_string(size));
  RequireArg(options.noise_rate >= 0.0 && options.noise_rate <= 0.2,
             "noise rate must lie in [0, 0.2]");

  Rng rng(DeriveSeed(seed, "wafer-generate") + static_cast<std::uint64_t>(pattern));
  const DiskGeometry disk(size);
  const double r = disk.radius;
  std::vector<std::uint8_t> cells(size * size,
                                  static_cast<std::uint8_t>(DieState::kOffWafer));
  std::vector<std::size_t> in_disk;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      if (disk.Inside(y, x)) {
        cells[y * size + x] = static_cast<std::uint8_t>(DieState::kPass);
        in_disk.push_back(y * size + x);
      }
    }
  }
  auto fail_where = [&](auto&& predicate) {
    for (std::size_t idx : in_disk) {
      const std::size_t y = idx / size, x = idx % size;
      if (predicate(y, x)) {
        cells[idx] = static_cast<std::uint8_t>(DieState::kFail);
      }
    }
  };
  auto angle_of = [&](std::size_t y, std::size_t x) {
    return std::atan2(static_cast<double>(y) - disk.center,
                      static_cast<double>(x) - disk.center);
  };

  switch (static_cast<DefectPattern>(pattern)) {
    case DefectPattern::kCenter: {
      const double rho = UniformReal(rng, 0.25, 0.35) * r;
      fail_where([&](auto y, auto x) { return disk.Distance(y, x) <= rho; });
      break;
    }
    case DefectPattern::kDonut: {
      const double inner = UniformReal(rng, 0.35, 0.42) * r;
      const double outer = UniformReal(rng, 0.53, 0.60) * r;
      fail_where([&](auto y, auto x) {
        const double d = disk.Distance(y, x);
        return d >= inner && d <= outer;
      });
      break;
    }
    case DefectPattern::kEdgeLoc: {
      const double mid = UniformReal(rng, 0.0, 2.0 * std::numbers::pi);
      const double half_span =
          UniformReal(rng, 30.0, 90.0) / 2.0 * std::numbers::pi / 180.0;
      const double depth = UniformReal(rng, 2.0, 4.0);
      fail_where([&](auto y, auto x) {
        return disk.Distance(y, x) > r - depth &&
               AngleDiff(angle_of(y, x), mid) <= half_span;
      });
      break;
    }
    case DefectPattern::kEdgeRing: {
      const double width = UniformReal(rng, 2.0, 3.0);
      fail_where([&](auto y, auto x) { return disk.Distance(y, x) > r - width; });
      break;
    }
    case DefectPattern::kLoc: {
      const double offset = UniformReal(rng, 0.3, 0.6) * r;
      const double angle = UniformReal(rng, 0.0, 2.0 * std::numbers::pi);
      const double blob = UniformReal(rng, 0.1, 0.2) * r;
      const double cy = disk.center + offset * std::sin(angle);
      const double cx = disk.center + offset * std::cos(angle);
      fail_where([&](auto y, auto x) {
        return std::hypot(static_cast<double>(y) - cy,
                          static_cast<double>(x) - cx) <= blob;
      });
      break;
    }
    case DefectPattern::kRandom:
      FailExactFraction(in_disk, UniformReal(rng, 0.15, 0.30), cells, rng);
      break;
    case DefectPattern::kScratch:
      DrawScratch(disk, size, cells, rng);
      break;
    case DefectPattern::kNearFull:
      FailExactFraction(in_disk, UniformReal(rng, 0.55, 0.80), cells, rng);
      break;
    case DefectPattern::kNone:
      break;
  }

  if (options.noise_rate > 0.0) {
    std::bernoulli_distribution salt(options.noise_rate);
    for (std::size_t idx : in_disk) {
      if (salt(rng)) cells[idx] = static_cast<std::uint8_t>(DieState::kFail);
    }
  }
  return WaferMap("syn-" + std::to_string(pattern) + "-" + std::to_string(seed),
                  size, size, std::move(cells), pattern);
}

WaferMap ApplySymmetry(const WaferMap& map, int transform) {
  RequireArg(transform >= 0 && transform < 8,
             "symmetry index must be in 0..7");
  const std::size_t rows = map.rows(), cols = map.cols();
  const int rotation = transform % 4;
  const bool flip = transform >= 4;
  RequireArg(rows == cols || rotation % 2 == 0,
             "90-degree rotations require a square map");
  std::vector<std::uint8_t> out(map.cells().size());
  const std::size_t out_rows = rotation % 2 ? cols : rows;
  const std::size_t out_cols = rotation % 2 ? rows : cols;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t fc = flip ? cols - 1 - c : c;
      std::size_t nr = r, nc = fc;
      switch (rotation) {
        case 1:  // 90 degrees clockwise
          nr = fc;
          nc = rows - 1 - r;
          break;
        case 2:
          nr = rows - 1 - r;
          nc = cols - 1 - fc;
          break;
        case 3:
          nr = cols - 1 - fc;
          nc = r;
          break;
        default:
          break;
      }
      out[nr * out_cols + nc] = map.cells()[r * cols + c];
    }
  }
  return WaferMap(map.id(), out_rows, out_cols, std::move(out), map.label());
}

Tensor ToTensor(const WaferMap& map) {
  const std::size_t area = map.rows() * map.cols();
  Tensor out({3, map.rows(), map.cols()});
  for (std::size_t i = 0; i < area; ++i) out[map.cells()[i] * area + i] = 1.0;
  return out;
}

Tensor EncodeBatch(std::span<const WaferMap* const> maps, std::size_t canvas) {
  RequireArg(!maps.empty(), "cannot encode an empty batch");
  const std::size_t rows = maps[0]->rows(), cols = maps[0]->cols();
  const std::size_t out_h = canvas ? canvas : rows;
  const std::size_t out_w = canvas ? canvas : cols;
  RequireArg(out_h >= rows && out_w >= cols && (out_h - rows) % 2 == 0 &&
                 (out_w - cols) % 2 == 0,
             "canvas " + std::to_string(canvas) +
                 " cannot centre a " + std::to_string(rows) + "x" +
                 std::to_string(cols) + " map");
  const std::size_t top = (out_h - rows) / 2, left = (out_w - cols) / 2;
  const std::size_t area = out_h * out_w;
  Tensor out({maps.size(), 3, out_h, out_w});
  double* data = out.data().data();
  for (std::size_t n = 0; n < maps.size(); ++n) {
    const WaferMap& m = *maps[n];
    RequireArg(m.rows() == rows && m.cols() == cols,
               "all maps in a batch must share one shape");
    double* base = data + n * 3 * area;
    // Border cells are off-wafer.
    std::fill(base, base + area, 1.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t pos = (r + top) * out_w + (c + left);
        base[pos] = 0.0;
        base[m.cells()[r * cols + c] * area + pos] = 1.0;
      }
    }
  }
  return out;
}

Tensor FrameBatch(const Tensor& batch, std::size_t canvas) {
  RequireArg(batch.rank() == 4 && batch.dim(1) == 3,
             "frame expects a one-hot batch [N,3,H,W], got " +
                 ShapeToString(batch.shape()));
  const std::size_t n = batch.dim(0), rows = batch.dim(2), cols = batch.dim(3);
  if (canvas == rows && canvas == cols) return batch;
  RequireArg(canvas >= rows && canvas >= cols && (canvas - rows) % 2 == 0 &&
                 (canvas - cols) % 2 == 0,
             "canvas " + std::to_string(canvas) + " cannot centre a " +
                 std::to_string(rows) + "x" + std::to_string(cols) + " map");
  const std::size_t top = (canvas - rows) / 2, left = (canvas - cols) / 2;
  const std::size_t area = canvas * canvas, in_area = rows * cols;
  Tensor out({n, 3, canvas, canvas});
  for (std::size_t i = 0; i < n; ++i) {
    double* base = out.data().data() + i * 3 * area;
    std::fill(base, base + area, 1.0);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double* src = batch.data().data() + (i * 3 + ch) * in_area;
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          base[ch * area + (r + top) * canvas + c + left] = src[r * cols + c];
        }
      }
    }
  }
  return out;
}

std::size_t CanvasForHalvings(std::size_t size, int halvings) {
  RequireArg(size > 0 && halvings >= 0, "invalid canvas request");
  for (std::size_t canvas = size;; canvas += 2) {
    std::size_t s = canvas;
    bool ok = true;
    for (int h = 0; h < halvings; ++h) {
      if (s % 2 == 0) {
        ok = false;
        break;
      }
      s = (s + 1) / 2;
    }
    if (ok) return canvas;
  }
}

}  // namespace wafersemi
