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

#include <cmath>
#include <stdexcept>

#include "gradcheck_cases.h"
#include "oracles.h"
#include "test_support.h"
#include "wafersemi/ops.h"

namespace wafersemi {
namespace {

using testing::RandomTensor;

double MaxAbsDiff(const Tensor& a, const Tensor& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

TEST(Ops, WindowOutputSizeIsStrict) {
  EXPECT_EQ(ops::WindowOutputSize(5, 3, 1, 0), 3u);
  EXPECT_EQ(ops::WindowOutputSize(33, 7, 2, 3), 17u);
  EXPECT_EQ(ops::WindowOutputSize(3, 3, 1, 0), 1u);
  EXPECT_THROW(ops::WindowOutputSize(6, 3, 2, 0), std::invalid_argument);
  EXPECT_THROW(ops::WindowOutputSize(2, 3, 1, 0), std::invalid_argument);
  EXPECT_THROW(ops::WindowOutputSize(5, 3, 0, 0), std::invalid_argument);
}

TEST(Ops, ConvMatchesNaiveLoops) {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t k = testing::Pick(rng, 1, 3) * 2 - 1;  // 1, 3 or 5
    const std::size_t s = testing::Pick(rng, 1, 2);
    const std::size_t p = testing::Pick(rng, 0, k / 2);
    const std::size_t c = testing::Pick(rng, 1, 4), f = testing::Pick(rng, 1, 4);
    const Tensor x = RandomTensor({testing::Pick(rng, 1, 3), c,
                                   testing::TiledExtent(rng, k, s, p),
                                   testing::TiledExtent(rng, k, s, p)}, rng);
    const Tensor w = RandomTensor({f, c, k, k}, rng);
    const Tensor got = ops::Conv2d(Variable(x), Variable(w), s, p).value();
    EXPECT_LT(MaxAbsDiff(got, testing::NaiveConv2d(x, w, s, p)), 1e-12);
  }
}

TEST(Ops, ConvHandCase) {
  // 1x1x3x3 input, 2x2 all-ones kernel: each output sums a 2x2 window.
  Tensor x({1, 1, 3, 3}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor w({1, 1, 2, 2}, 1.0);
  const Tensor y = ops::Conv2d(Variable(x), Variable(w), 1, 0).value();
  EXPECT_EQ(y.storage(), (std::vector<double>{12, 16, 24, 28}));
}

TEST(Ops, ConvRejectsBadShapes) {
  Variable x(Tensor({1, 2, 5, 5}));
  EXPECT_THROW(ops::Conv2d(x, Variable(Tensor({1, 3, 3, 3})), 1, 0),
               std::invalid_argument);
  EXPECT_THROW(ops::Conv2d(Variable(Tensor({1, 2, 6, 6})),
                           Variable(Tensor({1, 2, 3, 3})), 2, 0),
               std::invalid_argument);
}

TEST(Ops, MaxPoolMatchesNaiveLoops) {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t k = testing::Pick(rng, 1, 3), s = testing::Pick(rng, 1, 2);
    const std::size_t p = testing::Pick(rng, 0, k / 2);
    const Tensor x = RandomTensor({testing::Pick(rng, 1, 2), testing::Pick(rng, 1, 3),
                                   testing::TiledExtent(rng, k, s, p),
                                   testing::TiledExtent(rng, k, s, p)}, rng);
    const Tensor got = ops::MaxPool2d(Variable(x), k, s, p).value();
    EXPECT_LT(MaxAbsDiff(got, testing::NaiveMaxPool(x, k, s, p)), 1e-12);
  }
}

TEST(Ops, SoftmaxRowsSumToOne) {
  Rng rng(13);
  const Tensor logits = RandomTensor({4, 9}, rng, -20, 20);
  const Tensor p = ops::Softmax(Variable(logits)).value();
  for (std::size_t r = 0; r < 4; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 9; ++c) sum += p[r * 9 + c];
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Ops, CrossEntropyHandValue) {
  // Uniform logits over K classes give loss log K.
  const Variable logits(Tensor({2, 4}, 0.0));
  const std::vector<int> labels = {1, 3};
  EXPECT_NEAR(ops::CrossEntropy(logits, labels).value().item(), std::log(4.0),
              1e-15);
  const std::vector<int> bad = {1, 4};
  EXPECT_THROW(ops::CrossEntropy(logits, bad), std::invalid_argument);
}

TEST(Ops, CrossEntropyStableForLargeLogits) {
  Tensor t({1, 2}, std::vector<double>{1000.0, 0.0});
  const std::vector<int> label = {0};
  EXPECT_NEAR(ops::CrossEntropy(Variable(t), label).value().item(), 0.0, 1e-12);
}

TEST(Ops, UpsampleNearestIndices) {
  Tensor x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  const Tensor y = ops::UpsampleNearest(Variable(x), 3, 3).value();
  // src = floor(o * in / out): rows 0,0,1 and cols 0,0,1.
  EXPECT_EQ(y.storage(), (std::vector<double>{1, 1, 2, 1, 1, 2, 3, 3, 4}));
}

class OpGradients : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpGradients, FiniteDifferenceAgreement) {
  const auto cases = testing::OpGradCases();
  const auto& c = cases.at(GetParam());
  Rng rng(DeriveSeed(100, c.name));
  for (int instance = 0; instance < 20; ++instance) {
    EXPECT_LT(c.run(rng), 1e-4) << c.name << " instance " << instance;
  }
}

INSTANTIATE_TEST_SUITE_P(
    AllOps, OpGradients,
    ::testing::Range<std::size_t>(0, testing::OpGradCases().size()),
    [](const ::testing::TestParamInfo<std::size_t>& info) {
      return testing::OpGradCases().at(info.param).name;
    });

}  // namespace
}  // namespace wafersemi
