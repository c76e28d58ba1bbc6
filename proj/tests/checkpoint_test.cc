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

#include <gtest/gtest.h>

#include <filesystem>
#include <stdexcept>

#include "test_support.h"
#include "wafersemi/checkpoint.h"

namespace wafersemi {
namespace {

ParameterStore RandomStore(std::uint64_t seed) {
  Rng rng(seed);
  ParameterStore store;
  store.Add("a.weight", testing::RandomTensor({3, 4}, rng, -1e3, 1e3));
  store.Add("a.bias", testing::RandomTensor({4}, rng, -1e-300, 1e-300));
  store.Add("b", testing::RandomTensor({2, 2, 3, 3}, rng));
  return store;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const ParameterStore store = RandomStore(1);
  nlohmann::ordered_json header;
  header["model"] = "test";
  const std::string text = SerializeCheckpoint(MakeCheckpoint(store, header));
  const Checkpoint back = ParseCheckpoint(text);
  EXPECT_EQ(back.header, header);
  ParameterStore target = RandomStore(2);
  RestoreParameters(back, target);
  for (std::size_t i = 0; i < store.entries().size(); ++i) {
    EXPECT_EQ(target.entries()[i].variable.value(),
              store.entries()[i].variable.value());
  }
  EXPECT_EQ(SerializeCheckpoint(back), text);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "ws_ckpt_test.json";
  const ParameterStore store = RandomStore(3);
  SaveCheckpoint(path, MakeCheckpoint(store, {}));
  ParameterStore target = RandomStore(4);
  RestoreParameters(LoadCheckpoint(path), target);
  EXPECT_EQ(target.Get("b").value(), store.Get("b").value());
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsMismatches) {
  const Checkpoint ck = MakeCheckpoint(RandomStore(5), {});
  ParameterStore missing;
  missing.Add("a.weight", Tensor({3, 4}));
  EXPECT_THROW(RestoreParameters(ck, missing), std::invalid_argument);

  ParameterStore wrong_shape;
  wrong_shape.Add("a.weight", Tensor({4, 3}));
  wrong_shape.Add("a.bias", Tensor({4}));
  wrong_shape.Add("b", Tensor({2, 2, 3, 3}));
  EXPECT_THROW(RestoreParameters(ck, wrong_shape), std::invalid_argument);

  EXPECT_THROW(ParseCheckpoint("{}"), std::runtime_error);
  EXPECT_THROW(ParseCheckpoint("not json"), std::runtime_error);
  EXPECT_THROW(LoadCheckpoint("/nonexistent/ckpt.json"), std::runtime_error);
}

TEST(ParameterStore, DuplicateNamesRejected) {
  ParameterStore s;
  s.Add("x", Tensor({1}));
  EXPECT_THROW(s.Add("x", Tensor({1})), std::invalid_argument);
  EXPECT_TRUE(s.Contains("x"));
  EXPECT_EQ(s.TotalSize(), 1u);
}

TEST(ParameterStore, CloneIsIndependent) {
  ParameterStore s = RandomStore(6);
  ParameterStore c = s.Clone();
  Variable v = s.Get("b");
  v.mutable_value()[0] += 1.0;
  EXPECT_NE(c.Get("b").value()[0], s.Get("b").value()[0]);
}

}  // namespace
}  // namespace wafersemi
