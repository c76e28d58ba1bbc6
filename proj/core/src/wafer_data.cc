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

#include "wafersemi/wafer_data.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wafersemi/random.h"

namespace wafersemi {

ClassWeights UniformClassWeights() {
  ClassWeights w;
  w.fill(1.0 / kNumClasses);
  return w;
}

ClassWeights Wm811kClassWeights() {
  // Center, Donut, Edge-Loc, Edge-Ring, Loc, Random, Scratch, Near-full, none
  return {0.025, 0.003, 0.030, 0.056, 0.021, 0.005, 0.007, 0.001, 0.852};
}

std::vector<std::size_t> ApportionCounts(const ClassWeights& weights,
                                         std::size_t total) {
  double sum = 0.0;
  for (double w : weights) {
    RequireArg(w >= 0.0 && std::isfinite(w), "class weights must be >= 0");
    sum += w;
  }
  RequireArg(sum > 0.0, "class weights must not all be zero");
  std::vector<std::size_t> counts(kNumClasses);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const double exact = weights[c] / sum * static_cast<double>(total);
    counts[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) {
    ++counts[remainders[i % kNumClasses].second];
  }
  return counts;
}

std::vector<WaferMap> GenerateDataset(const SyntheticDatasetOptions& options) {
  const auto counts = ApportionCounts(options.class_weights, options.num_maps);
  std::vector<int> labels;
  labels.reserve(options.num_maps);
  for (int c = 0; c < kNumClasses; ++c) {
    labels.insert(labels.end(), counts[static_cast<std::size_t>(c)], c);
  }
  Rng rng = MakeRng(options.seed, "dataset-order");
  std::shuffle(labels.begin(), labels.end(), rng);

  std::vector<WaferMap> maps;
  maps.reserve(labels.size());
  char id[32];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::snprintf(id, sizeof(id), "w%06zu", i);
    const std::uint64_t map_seed = DeriveSeed(options.seed, id);
    maps.push_back(Generate(labels[i], options.generator, map_seed).WithId(id));
  }
  return maps;
}

ClassHistogram CountClasses(std::span<const WaferMap> maps) {
  ClassHistogram hist{};
  for (const WaferMap& m : maps) {
    if (m.label()) ++hist[static_cast<std::size_t>(*m.label())];
  }
  return hist;
}

ParseError::ParseError(std::size_t line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message),
      line_(line) {}

namespace {

WaferMap ParseRecord(const std::string& text, std::size_t line) {
  nlohmann::json record;
  try {
    record = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(line, std::string("invalid JSON: ") + e.what());
  }
  if (!record.is_object()) throw ParseError(line, "record is not an object");
  auto grid_it = record.find("grid");
  if (grid_it == record.end()) throw ParseError(line, "missing grid");
  const auto& grid = *grid_it;
  if (!grid.is_array() || grid.empty()) {
    throw ParseError(line, "grid must be a non-empty array of rows");
  }
  const std::size_t rows = grid.size();
  std::size_t cols = 0;
  std::vector<std::uint8_t> cells;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& row = grid[r];
    if (!row.is_array() || row.empty()) {
      throw ParseError(line, "grid row " + std::to_string(r) +
                                 " is not a non-empty array");
    }
    if (r == 0) cols = row.size();
    if (row.size() != cols) {
      throw ParseError(line, "grid row " + std::to_string(r) + " has " +
                                 std::to_string(row.size()) +
                                 " cells, expected " + std::to_string(cols));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      const auto& cell = row[c];
      if (!cell.is_number_integer() || cell.get<long>() < 0 ||
          cell.get<long>() > 2) {
        throw ParseError(line, "grid[" + std::to_string(r) + "][" +
                                   std::to_string(c) + "] = " + cell.dump() +
                                   " is not a die state (0, 1 or 2)");
      }
      cells.push_back(static_cast<std::uint8_t>(cell.get<long>()));
    }
  }

  std::optional<int> label;
  if (auto it = record.find("label"); it != record.end() && !it->is_null()) {
    if (it->is_number_integer()) {
      const long v = it->get<long>();
      if (v < 0 || v >= kNumClasses) {
        throw ParseError(line, "label " + std::to_string(v) + " outside 0..8");
      }
      label = static_cast<int>(v);
    } else if (it->is_string()) {
      label = PatternFromName(it->get<std::string>());
      if (!label) throw ParseError(line, "unknown label name " + it->dump());
    } else {
      throw ParseError(line, "label must be an integer or class name");
    }
  }

  std::string id = "line-" + std::to_string(line);
  if (auto it = record.find("id"); it != record.end()) {
    if (!it->is_string()) throw ParseError(line, "id must be a string");
    id = it->get<std::string>();
  }
  return WaferMap(std::move(id), rows, cols, std::move(cells), label);
}

}  // namespace

std::vector<WaferMap> ParseJsonl(const std::string& text) {
  std::vector<WaferMap> maps;
  std::set<std::string> ids;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    WaferMap map = ParseRecord(line, number);
    if (!ids.insert(map.id()).second) {
      throw ParseError(number, "duplicate id " + map.id());
    }
    maps.push_back(std::move(map));
  }
  return maps;
}

std::vector<WaferMap> Ingest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return ParseJsonl(buffer.str());
}

std::string ExportJsonl(std::span<const WaferMap> maps) {
  std::string out;
  for (const WaferMap& m : maps) {
    out += "{\"id\":";
    out += nlohmann::json(m.id()).dump();
    out += ",\"grid\":[";
    for (std::size_t r = 0; r < m.rows(); ++r) {
      if (r) out += ',';
      out += '[';
      for (std::size_t c = 0; c < m.cols(); ++c) {
        if (c) out += ',';
        out += static_cast<char>('0' + m.cells()[r * m.cols() + c]);
      }
      out += ']';
    }
    out += ']';
    if (m.label()) out += ",\"label\":" + std::to_string(*m.label());
    out += "}\n";
  }
  return out;
}

void WriteJsonl(const std::filesystem::path& path,
                std::span<const WaferMap> maps) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << ExportJsonl(maps);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<WaferMap> Balance(std::span<const WaferMap> examples,
                              std::size_t target_per_class,
                              std::uint64_t seed,
                              std::span<const int> classes) {
  RequireArg(target_per_class > 0, "balance target must be positive");
  std::array<bool, kNumClasses> wanted{};
  if (classes.empty()) {
    wanted.fill(true);
  }
  for (int c : classes) {
    RequireArg(IsValidLabel(c), "balance: invalid class " + std::to_string(c));
    wanted[static_cast<std::size_t>(c)] = true;
  }
  std::array<std::vector<const WaferMap*>, kNumClasses> by_class;
  for (const WaferMap& m : examples) {
    RequireArg(m.label().has_value(), "balance requires labelled maps; " +
                                          m.id() + " has no label");
    RequireArg(wanted[static_cast<std::size_t>(*m.label())],
               "balance: " + m.id() + " has a class outside the balanced set");
    by_class[static_cast<std::size_t>(*m.label())].push_back(&m);
  }
  std::string missing;
  for (int c = 0; c < kNumClasses; ++c) {
    if (wanted[static_cast<std::size_t>(c)] &&
        by_class[static_cast<std::size_t>(c)].empty()) {
      missing += (missing.empty() ? "" : ", ") + std::to_string(c) + " (" +
                 std::string(PatternName(c)) + ")";
    }
  }
  RequireArg(missing.empty(), "balance: classes absent: " + missing);

  Rng rng = MakeRng(seed, "balance");
  std::vector<WaferMap> out;
  out.reserve(target_per_class * kNumClasses);
  for (auto& members : by_class) {
    if (members.empty()) continue;
    if (members.size() >= target_per_class) {
      std::shuffle(members.begin(), members.end(), rng);
      for (std::size_t i = 0; i < target_per_class; ++i) {
        out.push_back(*members[i]);
      }
      continue;
    }
    for (const WaferMap* m : members) out.push_back(*m);
    const bool square = members.front()->rows() == members.front()->cols();
    for (std::size_t k = 0; k < target_per_class - members.size(); ++k) {
      const WaferMap& src = *members[static_cast<std::size_t>(
          UniformInt(rng, 0, static_cast<long>(members.size()) - 1))];
      int transform = static_cast<int>(UniformInt(rng, 0, 7));
      if (!square) transform = 2 * static_cast<int>(UniformInt(rng, 0, 3));
      out.push_back(ApplySymmetry(src, transform)
                        .WithId(src.id() + "~aug" + std::to_string(k)));
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

UnlabeledPool UnlabeledPool::FromLabeled(std::span<const WaferMap> maps) {
  UnlabeledPool pool;
  pool.maps_.reserve(maps.size());
  pool.hidden_labels_.reserve(maps.size());
  for (const WaferMap& m : maps) {
    pool.maps_.push_back(m.WithLabel(std::nullopt));
    pool.hidden_labels_.push_back(m.label());
  }
  return pool;
}

UnlabeledPool UnlabeledPool::FromUnlabeled(std::vector<WaferMap> maps) {
  UnlabeledPool pool;
  pool.hidden_labels_.assign(maps.size(), std::nullopt);
  for (WaferMap& m : maps) m = m.WithLabel(std::nullopt);
  pool.maps_ = std::move(maps);
  return pool;
}

const WaferMap& UnlabeledPool::Find(const std::string& id) const {
  for (const WaferMap& m : maps_) {
    if (m.id() == id) return m;
  }
  throw std::invalid_argument("unknown unlabeled id " + id);
}

DatasetSplit Split(std::span<const WaferMap> maps,
                   const SplitFractions& fractions, std::uint64_t seed) {
  RequireArg(fractions.labeled > 0.0 && fractions.unlabeled > 0.0 &&
                 fractions.test > 0.0,
             "split fractions must be positive");
  const double sum = fractions.labeled + fractions.unlabeled + fractions.test;
  RequireArg(std::abs(sum - 1.0) <= 1e-9,
             "split fractions sum to " + std::to_string(sum) + ", not 1");
  for (const WaferMap& m : maps) {
    RequireArg(m.label().has_value(),
               "split requires labelled maps; " + m.id() + " has no label");
  }
  const std::size_t n = maps.size();
  const auto n_labeled = static_cast<std::size_t>(
      std::llround(fractions.labeled * static_cast<double>(n)));
  const auto n_unlabeled = std::min(
      n - n_labeled, static_cast<std::size_t>(std::llround(
                         fractions.unlabeled * static_cast<double>(n))));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = MakeRng(seed, "split");
  std::shuffle(order.begin(), order.end(), rng);

  DatasetSplit split;
  split.seed = seed;
  std::vector<WaferMap> unlabeled;
  for (std::size_t i = 0; i < n; ++i) {
    const WaferMap& m = maps[order[i]];
    if (i < n_labeled) {
      split.labeled.push_back(m);
    } else if (i < n_labeled + n_unlabeled) {
      unlabeled.push_back(m);
    } else {
      split.test.push_back(m);
    }
  }
  split.unlabeled = UnlabeledPool::FromLabeled(unlabeled);
  return split;
}

}  // namespace wafersemi
