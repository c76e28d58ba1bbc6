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

#ifndef WAFERSEMI_CHECKPOINT_H_
#define WAFERSEMI_CHECKPOINT_H_

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "wafersemi/autograd.h"

namespace wafersemi {

struct NamedParameter {
  std::string name;
  Variable variable;
};

// Ordered collection of trainable leaves addressed by path-like names
// ("stage2.block0.conv1.weight").
class ParameterStore {
 public:
  Variable Add(std::string name, Tensor init);

  const std::vector<NamedParameter>& entries() const { return entries_; }
  std::vector<Variable> Variables() const;
  Variable Get(const std::string& name) const;
  bool Contains(const std::string& name) const;
  std::size_t TotalSize() const;

  // Deep copy of the current values into fresh leaves.
  ParameterStore Clone() const;

 private:
  std::vector<NamedParameter> entries_;
};

// In-memory form of a checkpoint file: a free-form JSON header plus tensors
// in file order.
struct Checkpoint {
  nlohmann::ordered_json header = nlohmann::ordered_json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;
};

Checkpoint MakeCheckpoint(const ParameterStore& store,
                          nlohmann::ordered_json header);

std::string SerializeCheckpoint(const Checkpoint& checkpoint);
Checkpoint ParseCheckpoint(const std::string& text);

void SaveCheckpoint(const std::filesystem::path& path,
                    const Checkpoint& checkpoint);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

// Copies checkpoint tensors into `store`; names and shapes must match
// exactly, in any order.
void RestoreParameters(const Checkpoint& checkpoint, ParameterStore& store);

}  // namespace wafersemi

#endif  // WAFERSEMI_CHECKPOINT_H_
