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

#include "wafersemi/checkpoint.h"

#include <fstream>
#include <set>
#include <sstream>

namespace wafersemi {

namespace {
constexpr const char* kFormat = "wafersemi-checkpoint";
constexpr int kVersion = 1;
}  // namespace

Variable ParameterStore::Add(std::string name, Tensor init) {
  RequireArg(!Contains(name), "duplicate parameter name " + name);
  Variable v(std::move(init), /*requires_grad=*/true);
  entries_.push_back({std::move(name), v});
  return v;
}

std::vector<Variable> ParameterStore::Variables() const {
  std::vector<Variable> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.variable);
  return out;
}

Variable ParameterStore::Get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.variable;
  }
  throw std::invalid_argument("unknown parameter " + name);
}

bool ParameterStore::Contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

std::size_t ParameterStore::TotalSize() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.variable.value().size();
  return n;
}

ParameterStore ParameterStore::Clone() const {
  ParameterStore copy;
  for (const auto& e : entries_) copy.Add(e.name, e.variable.value());
  return copy;
}

Checkpoint MakeCheckpoint(const ParameterStore& store,
                          nlohmann::ordered_json header) {
  Checkpoint cp;
  cp.header = std::move(header);
  for (const auto& e : store.entries()) {
    cp.tensors.emplace_back(e.name, e.variable.value());
  }
  return cp;
}

std::string SerializeCheckpoint(const Checkpoint& checkpoint) {
  nlohmann::ordered_json doc;
  doc["format"] = kFormat;
  doc["version"] = kVersion;
  doc["header"] = checkpoint.header;
  auto& params = doc["parameters"] = nlohmann::ordered_json::array();
  for (const auto& [name, tensor] : checkpoint.tensors) {
    nlohmann::ordered_json entry;
    entry["name"] = name;
    entry["shape"] = tensor.shape();
    entry["data"] = tensor.storage();
    params.push_back(std::move(entry));
  }
  // nlohmann emits the shortest decimal form that parses back to the same
  // double, so the text round-trips bit-exactly.
  return doc.dump() + "\n";
}

Checkpoint ParseCheckpoint(const std::string& text) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("checkpoint is not valid JSON: ") +
                             e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != kFormat) {
    throw std::runtime_error("not a wafersemi checkpoint");
  }
  if (doc.value("version", 0) != kVersion) {
    throw std::runtime_error("unsupported checkpoint version");
  }
  Checkpoint cp;
  cp.header = doc.at("header");
  std::set<std::string> seen;
  for (const auto& entry : doc.at("parameters")) {
    auto name = entry.at("name").get<std::string>();
    if (!seen.insert(name).second) {
      throw std::runtime_error("duplicate tensor " + name + " in checkpoint");
    }
    auto shape = entry.at("shape").get<Shape>();
    auto data = entry.at("data").get<std::vector<double>>();
    if (NumElements(shape) != data.size()) {
      throw std::runtime_error("tensor " + name +
                               " has data length inconsistent with shape");
    }
    cp.tensors.emplace_back(std::move(name),
                            Tensor(std::move(shape), std::move(data)));
  }
  return cp;
}

void SaveCheckpoint(const std::filesystem::path& path,
                    const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << SerializeCheckpoint(checkpoint);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return ParseCheckpoint(buffer.str());
}

void RestoreParameters(const Checkpoint& checkpoint, ParameterStore& store) {
  RequireArg(checkpoint.tensors.size() == store.entries().size(),
             "checkpoint holds " + std::to_string(checkpoint.tensors.size()) +
                 " tensors, model expects " +
                 std::to_string(store.entries().size()));
  for (const auto& [name, tensor] : checkpoint.tensors) {
    Variable v = store.Get(name);
    RequireArg(v.shape() == tensor.shape(),
               "shape mismatch for " + name + ": checkpoint " +
                   ShapeToString(tensor.shape()) + ", model " +
                   ShapeToString(v.shape()));
    v.mutable_value() = tensor;
  }
}

}  // namespace wafersemi
