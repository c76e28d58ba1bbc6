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

#ifndef WAFERSEMI_CLASSIFIER_H_
#define WAFERSEMI_CLASSIFIER_H_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wafersemi/adam.h"
#include "wafersemi/checkpoint.h"
#include "wafersemi/vae.h"
#include "wafersemi/wafer_map.h"

namespace wafersemi {

// Where the projected latent vector is added to the feature maps.
enum class FusionPoint {
  kNone = 0,
  kAfterStage1 = 1,
  kAfterStage2 = 2,
  kAfterStage3 = 3,
  kAfterStage4 = 4,
};

std::string_view FusionPointName(FusionPoint point);
// Accepts "none", "after_stage1" .. "after_stage4".
FusionPoint ParseFusionPoint(std::string_view name);

struct NetworkConfig {
  std::size_t input_rows = 27;
  std::size_t input_cols = 27;
  std::size_t stem_channels = 8;
  std::array<std::size_t, 4> block_counts = {1, 1, 2, 1};
  // Bottleneck (3x3) widths per stage; stage outputs are width * expansion.
  std::array<std::size_t, 4> widths = {8, 16, 32, 64};
  std::size_t expansion = 4;
  FusionPoint fusion_point = FusionPoint::kNone;
  std::size_t num_classes = kNumClasses;
  std::size_t latent_dim = 16;

  // Channel count of the feature map leaving `stage` (1..4).
  std::size_t StageChannels(int stage) const;
};

// Throws std::invalid_argument on a malformed config.
void ValidateNetworkConfig(const NetworkConfig& config);

struct BottleneckParams {
  Variable reduce_w, reduce_b;    // 1x1, in -> width
  Variable spatial_w, spatial_b;  // 3x3, width -> width, carries the stride
  Variable expand_w, expand_b;    // 1x1, width -> out
  std::optional<Variable> project_w, project_b;  // 1x1 shortcut on shape change
};

// relu(branch(x) + shortcut(x)), where the branch is
// 1x1 -> relu -> 3x3(stride) -> relu -> 1x1 and the shortcut is the identity
// or a strided 1x1 projection.
Variable BottleneckBlock(const Variable& x, const BottleneckParams& params,
                         std::size_t stride);

// Staged residual network: 7x7/2 stem, 3x3/2 max pool, four stages of
// bottleneck blocks, global average pool and a linear head. With fusion
// enabled, a zero-initialised linear adapter maps the latent vector to one
// bias per channel, added to the feature map leaving the chosen stage.
class ResidualClassifier {
 public:
  ResidualClassifier(const NetworkConfig& config, std::uint64_t seed);
  // Copies would share parameter storage; use Clone() instead.
  ResidualClassifier(const ResidualClassifier&) = delete;
  ResidualClassifier& operator=(const ResidualClassifier&) = delete;
  ResidualClassifier(ResidualClassifier&&) = default;
  ResidualClassifier& operator=(ResidualClassifier&&) = default;

  const NetworkConfig& config() const { return config_; }
  bool has_fusion() const { return config_.fusion_point != FusionPoint::kNone; }
  std::size_t canvas() const { return canvas_; }

  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }

  // batch: one-hot [N,3,rows,cols]; latents: [N,D], required iff fusion is
  // enabled. Returns logits [N,num_classes].
  Variable Forward(const Tensor& batch, const Tensor* latents) const;

  // Single-map convenience: x is [3,rows,cols].
  std::vector<double> Logits(const Tensor& x,
                             std::optional<std::span<const double>> latent) const;

  // Independent copy of the current parameters.
  ResidualClassifier Clone() const;

 private:
  struct Block {
    BottleneckParams params;
    std::size_t stride;
  };
  Variable Param(const std::string& name, Tensor init);

  NetworkConfig config_;
  ParameterStore params_;
  std::size_t canvas_ = 0;
  Variable stem_w_, stem_b_;
  std::array<std::vector<Block>, 4> stages_;
  Variable head_w_, head_b_;
  std::optional<Variable> fusion_w_, fusion_b_;
};

enum class LabelSource { kTrue, kPseudo };

struct TrainingExample {
  WaferMap map;
  int label = 0;
  LabelSource source = LabelSource::kTrue;
};

// Wraps labelled maps as true-label training examples.
std::vector<TrainingExample> FromLabeled(std::span<const WaferMap> maps);

struct TrainConfig {
  std::size_t epochs = 25;
  std::size_t batch_size = 32;
  AdamOptions adam;
  std::uint64_t seed = 1;
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::uint64_t optimizer_steps = 0;
};

// Minimises mean cross-entropy with Adam. Latents (when the model fuses)
// are extracted once per map up front. Loss/accuracy are running averages
// over each epoch's minibatches.
TrainHistory TrainSupervised(ResidualClassifier& model, const Vae* vae,
                             std::span<const TrainingExample> examples,
                             const TrainConfig& config);

struct Prediction {
  int label = 0;
  double confidence = 0.0;
};

Prediction PredictOne(const ResidualClassifier& model, const Vae* vae,
                      const WaferMap& map);
std::vector<Prediction> Predict(const ResidualClassifier& model,
                                const Vae* vae,
                                std::span<const WaferMap> maps);

// Mean cross-entropy over `examples` without updating anything.
double MeanLoss(const ResidualClassifier& model, const Vae* vae,
                std::span<const TrainingExample> examples);

Checkpoint SaveClassifier(const ResidualClassifier& model);
ResidualClassifier LoadClassifier(const Checkpoint& checkpoint);

nlohmann::ordered_json NetworkConfigToJson(const NetworkConfig& config);
NetworkConfig NetworkConfigFromJson(const nlohmann::ordered_json& json);

}  // namespace wafersemi

#endif  // WAFERSEMI_CLASSIFIER_H_
