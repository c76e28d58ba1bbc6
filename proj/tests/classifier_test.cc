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

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gradcheck_cases.h"
#include "test_support.h"
#include "wafersemi/classifier.h"
#include "wafersemi/wafer_data.h"

namespace wafersemi {
namespace {

std::vector<WaferMap> SmallSet(std::size_t n, std::uint64_t seed = 2024) {
  SyntheticDatasetOptions o;
  o.num_maps = n;
  o.seed = seed;
  return GenerateDataset(o);
}

Tensor Batch(const std::vector<WaferMap>& maps) {
  std::vector<const WaferMap*> ptrs;
  for (const WaferMap& m : maps) ptrs.push_back(&m);
  return EncodeBatch(ptrs);
}

TEST(NetworkConfig, Validation) {
  NetworkConfig c;
  EXPECT_NO_THROW(ValidateNetworkConfig(c));
  c.widths = {8, 4, 32, 64};
  EXPECT_THROW(ValidateNetworkConfig(c), std::invalid_argument);
  c = {};
  c.block_counts[2] = 0;
  EXPECT_THROW(ValidateNetworkConfig(c), std::invalid_argument);
  EXPECT_EQ(ParseFusionPoint("after_stage2"), FusionPoint::kAfterStage2);
  EXPECT_EQ(FusionPointName(FusionPoint::kNone), "none");
  EXPECT_THROW(ParseFusionPoint("stage2"), std::invalid_argument);
  EXPECT_EQ(NetworkConfigFromJson(NetworkConfigToJson(c)).widths, c.widths);
}

TEST(Classifier, ForwardShapeAndLatentContract) {
  NetworkConfig c;
  const ResidualClassifier plain(c, 1);
  const auto maps = SmallSet(9);
  const Tensor x = Batch(maps);
  EXPECT_EQ(plain.Forward(x, nullptr).shape(), (Shape{9, 9}));
  const Tensor z({9, 16});
  EXPECT_THROW(plain.Forward(x, &z), std::invalid_argument);

  c.fusion_point = FusionPoint::kAfterStage3;
  const ResidualClassifier fused(c, 1);
  EXPECT_THROW(fused.Forward(x, nullptr), std::invalid_argument);
  const Tensor wrong({9, 15});
  EXPECT_THROW(fused.Forward(x, &wrong), std::invalid_argument);
  EXPECT_EQ(fused.Forward(x, &z).shape(), (Shape{9, 9}));
  EXPECT_THROW(plain.Forward(Tensor({1, 3, 25, 25}), nullptr), std::invalid_argument);
}

TEST(Classifier, ZeroAdapterIsBitExactNoOp) {
  Rng rng(31);
  const auto maps = SmallSet(18);
  const Tensor x = Batch(maps);
  const Tensor z = testing::RandomTensor({18, 16}, rng, -3, 3);
  const ResidualClassifier base(NetworkConfig{}, 77);
  const Tensor expect = base.Forward(x, nullptr).value();
  for (int p = 1; p <= 4; ++p) {
    NetworkConfig c;
    c.fusion_point = static_cast<FusionPoint>(p);
    const ResidualClassifier fused(c, 77);
    EXPECT_EQ(fused.Forward(x, &z).value(), expect) << "fusion point " << p;
  }
}

TEST(Classifier, SingleMapLogitsMatchBatch) {
  NetworkConfig c;
  c.fusion_point = FusionPoint::kAfterStage1;
  ResidualClassifier model(c, 3);
  Rng rng(4);
  for (const auto& e : model.parameters().entries()) {
    if (e.name.rfind("fusion", 0) != 0) continue;
    Variable v = e.variable;
    for (double& w : v.mutable_value().data()) w = UniformReal(rng, -0.5, 0.5);
  }
  const auto maps = SmallSet(9);
  const Tensor z = testing::RandomTensor({9, 16}, rng);
  const Tensor batch = model.Forward(Batch(maps), &z).value();
  for (std::size_t i = 0; i < 9; ++i) {
    const std::vector<double> latent(z.data().begin() + static_cast<long>(i * 16),
                                     z.data().begin() + static_cast<long>(i * 16 + 16));
    const auto logits = model.Logits(ToTensor(maps[i]), latent);
    for (std::size_t k = 0; k < 9; ++k) {
      EXPECT_NEAR(logits[k], batch[i * 9 + k], 1e-12);
    }
  }
}

TEST(Classifier, CloneAndCheckpointPreserveOutputs) {
  NetworkConfig c;
  c.fusion_point = FusionPoint::kAfterStage4;
  ResidualClassifier model(c, 8);
  const auto maps = SmallSet(9);
  const Tensor x = Batch(maps);
  Rng rng(5);
  const Tensor z = testing::RandomTensor({9, 16}, rng);
  const Tensor expect = model.Forward(x, &z).value();

  ResidualClassifier clone = model.Clone();
  EXPECT_EQ(clone.Forward(x, &z).value(), expect);
  Variable w = clone.parameters().Get("head.bias");
  w.mutable_value()[0] += 1.0;
  EXPECT_EQ(model.Forward(x, &z).value(), expect);

  const ResidualClassifier loaded = LoadClassifier(
      ParseCheckpoint(SerializeCheckpoint(SaveClassifier(model))));
  EXPECT_EQ(loaded.config().fusion_point, c.fusion_point);
  EXPECT_EQ(loaded.Forward(x, &z).value(), expect);
}

TEST(Classifier, BackboneIndependentOfFusion) {
  NetworkConfig c;
  const ResidualClassifier plain(c, 12);
  c.fusion_point = FusionPoint::kAfterStage2;
  const ResidualClassifier fused(c, 12);
  for (const auto& e : plain.parameters().entries()) {
    EXPECT_EQ(fused.parameters().Get(e.name).value(), e.variable.value()) << e.name;
  }
  EXPECT_EQ(fused.parameters().entries().size(), plain.parameters().entries().size() + 2);
}

TEST(Classifier, FusionParameterCount) {
  auto count = [](const ResidualClassifier& m) {
    std::size_t n = 0;
    for (const auto& e : m.parameters().entries()) n += e.variable.value().size();
    return n;
  };
  NetworkConfig c;
  const std::size_t base = count(ResidualClassifier(c, 1));
  for (int stage = 1; stage <= 4; ++stage) {
    c.fusion_point = static_cast<FusionPoint>(stage);
    const std::size_t ch = c.StageChannels(stage);
    EXPECT_EQ(count(ResidualClassifier(c, 1)), base + c.latent_dim * ch + ch);
  }
}

TEST(Classifier, ZeroBranchBlockIsIdentityOrProjection) {
  Rng rng(9);
  const Tensor x = testing::RandomTensor({2, 4, 5, 5}, rng, 0, 1);  // post-relu input
  auto zeros = [](Shape s) { return Variable(Tensor(std::move(s))); };
  BottleneckParams p{zeros({2, 4, 1, 1}), zeros({2}), zeros({2, 2, 3, 3}), zeros({2}),
                     zeros({4, 2, 1, 1}), zeros({4}), {}, {}};
  EXPECT_EQ(BottleneckBlock(Variable(x), p, 1).value(), x);

  const Variable pw(testing::RandomTensor({6, 4, 1, 1}, rng));
  const Variable pb(testing::RandomTensor({6}, rng));
  p.expand_w = zeros({6, 2, 1, 1});
  p.expand_b = zeros({6});
  p.project_w = pw;
  p.project_b = pb;
  const Tensor expect =
      ops::Relu(ops::AddChannelBias(ops::Conv2d(Variable(x), pw, 1, 0), pb)).value();
  EXPECT_EQ(BottleneckBlock(Variable(x), p, 1).value(), expect);
}

TEST(Classifier, TrainedAdapterRespondsSmoothlyToLatents) {
  NetworkConfig c;
  c.fusion_point = FusionPoint::kAfterStage2;
  ResidualClassifier model(c, 6);
  Rng rng(10);
  Variable w = model.parameters().Get("fusion.weight");
  for (double& v : w.mutable_value().data()) v = UniformReal(rng, -0.5, 0.5);
  const Tensor x = ToTensor(Generate(4, {}, 8));
  const std::vector<double> zero(16, 0.0);
  const auto base = model.Logits(x, zero);
  auto delta = [&](const std::vector<double>& l) {
    const auto y = model.Logits(x, l);
    double d = 0;
    for (std::size_t k = 0; k < 9; ++k) d += (y[k] - base[k]) * (y[k] - base[k]);
    return std::sqrt(d);
  };
  auto norm = [](const std::vector<double>& l) {
    double n = 0;
    for (double v : l) n += v * v;
    return std::sqrt(n);
  };
  // Empirical Lipschitz constant from 50 unit-scale draws.
  std::vector<std::vector<double>> draws;
  double lipschitz = 0;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> l(16);
    for (double& v : l) v = StandardNormal(rng);
    const double d = delta(l);
    EXPECT_GT(d, 0.0);
    lipschitz = std::max(lipschitz, d / norm(l));
    draws.push_back(std::move(l));
  }
  for (const auto& l : draws) {
    double previous = INFINITY;
    for (double scale : {0.5, 1e-1, 1e-2, 1e-3, 1e-4}) {
      std::vector<double> small = l;
      for (double& v : small) v *= scale;
      const double d = delta(small);
      EXPECT_LE(d, 1.5 * lipschitz * norm(small));
      EXPECT_LT(d, previous);
      previous = d;
    }
  }
}

TEST(Training, InitialLossNearUniformAndDeskFit) {
  SyntheticDatasetOptions o;
  o.num_maps = 450;
  const auto maps = GenerateDataset(o);
  const auto examples = FromLabeled(maps);
  ResidualClassifier model(NetworkConfig{}, 1);
  EXPECT_NEAR(MeanLoss(model, nullptr, examples), std::log(9.0), 0.3);
  TrainSupervised(model, nullptr, examples, TrainConfig{});
  std::size_t hits = 0;
  const auto preds = Predict(model, nullptr, maps);
  for (std::size_t i = 0; i < maps.size(); ++i) hits += preds[i].label == *maps[i].label();
  EXPECT_GE(static_cast<double>(hits) / 450.0, 0.95);
}

TEST(Training, DeterministicAndLearns) {
  const auto maps = SmallSet(90);
  const auto examples = FromLabeled(maps);
  TrainConfig t;
  t.epochs = 6;
  ResidualClassifier a(NetworkConfig{}, 1), b(NetworkConfig{}, 1);
  const TrainHistory ha = TrainSupervised(a, nullptr, examples, t);
  const TrainHistory hb = TrainSupervised(b, nullptr, examples, t);
  EXPECT_EQ(ha.epochs.back().loss, hb.epochs.back().loss);
  EXPECT_EQ(ha.optimizer_steps, 6u * 3u);  // ceil(90 / 32) = 3 per epoch
  EXPECT_LT(ha.epochs.back().loss, ha.epochs.front().loss);
  const auto x = Batch(maps);
  EXPECT_EQ(a.Forward(x, nullptr).value(), b.Forward(x, nullptr).value());
}

TEST(Training, RequiresLatentSourceForFusion) {
  NetworkConfig c;
  c.fusion_point = FusionPoint::kAfterStage2;
  ResidualClassifier model(c, 1);
  const auto examples = FromLabeled(SmallSet(9));
  EXPECT_THROW(TrainSupervised(model, nullptr, examples, {}), std::invalid_argument);
  ResidualClassifier plain(NetworkConfig{}, 1);
  EXPECT_THROW(TrainSupervised(plain, nullptr, std::span<const TrainingExample>(), {}),
               std::invalid_argument);
}

TEST(Predict, ConfidenceBoundsAndAgreement) {
  const ResidualClassifier model(NetworkConfig{}, 2);
  const auto maps = SmallSet(18);
  const auto preds = Predict(model, nullptr, maps);
  ASSERT_EQ(preds.size(), 18u);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    EXPECT_GE(preds[i].confidence, 1.0 / 9.0);
    EXPECT_LE(preds[i].confidence, 1.0);
    const Prediction one = PredictOne(model, nullptr, maps[i]);
    const auto logits = model.Logits(ToTensor(maps[i]), std::nullopt);
    EXPECT_EQ(std::max_element(logits.begin(), logits.end()) - logits.begin(), one.label);
    EXPECT_EQ(one.label, preds[i].label);
    EXPECT_NEAR(one.confidence, preds[i].confidence, 1e-12);
  }
  const double loss = MeanLoss(model, nullptr, FromLabeled(maps));
  EXPECT_GT(loss, 0.0);
}

TEST(Gradients, TinyClassifierAllFusionPoints) {
  Rng rng(41);
  const auto cases = testing::ModelGradCases(0);
  for (int i = 0; i < 5; ++i) EXPECT_LT(cases[1].run(rng), 1e-4);
}

TEST(Gradients, TinyVae) {
  Rng rng(42);
  const auto cases = testing::ModelGradCases(0);
  for (int i = 0; i < 5; ++i) EXPECT_LT(cases[0].run(rng), 1e-4);
}

}  // namespace
}  // namespace wafersemi
