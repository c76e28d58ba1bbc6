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

#include "wafersemi/classifier.h"

#include <cmath>
#include <numeric>

#include "wafersemi/ops.h"

namespace wafersemi {
namespace {

// Stem, max pool and the stride-2 entries of stages 2-4.
constexpr int kHalvings = 5;
constexpr std::size_t kInferenceChunk = 64;

Variable ConvBias(const Variable& x, const Variable& w, const Variable& b,
                  std::size_t stride, std::size_t padding) {
  return ops::AddChannelBias(ops::Conv2d(x, w, stride, padding), b);
}

Tensor HeNormal(Shape shape, double gain, Rng& rng) {
  std::size_t fan_in = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  const double stddev = gain * std::sqrt(2.0 / static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = stddev * StandardNormal(rng);
  return t;
}

Tensor GatherRows(const Tensor& source, std::span<const std::size_t> rows) {
  Shape shape = source.shape();
  const std::size_t stride = source.size() / shape[0];
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(source.data().data() + rows[i] * stride, stride,
                out.data().data() + i * stride);
  }
  return out;
}

Tensor EncodeExamples(std::span<const TrainingExample> examples) {
  std::vector<const WaferMap*> maps;
  maps.reserve(examples.size());
  for (const auto& e : examples) maps.push_back(&e.map);
  return EncodeBatch(maps);
}

std::vector<WaferMap> MapsOf(std::span<const TrainingExample> examples) {
  std::vector<WaferMap> maps;
  maps.reserve(examples.size());
  for (const auto& e : examples) maps.push_back(e.map);
  return maps;
}

std::optional<Tensor> LatentsFor(const ResidualClassifier& model,
                                 const Vae* vae,
                                 std::span<const WaferMap> maps) {
  if (!model.has_fusion()) return std::nullopt;
  RequireArg(vae != nullptr, "a fused classifier needs a VAE for latents");
  RequireArg(vae->latent_dim() == model.config().latent_dim,
             "VAE latent_dim " + std::to_string(vae->latent_dim()) +
                 " does not match classifier latent_dim " +
                 std::to_string(model.config().latent_dim));
  return vae->ExtractLatents(maps);
}

}  // namespace

std::string_view FusionPointName(FusionPoint point) {
  switch (point) {
    case FusionPoint::kNone: return "none";
    case FusionPoint::kAfterStage1: return "after_stage1";
    case FusionPoint::kAfterStage2: return "after_stage2";
    case FusionPoint::kAfterStage3: return "after_stage3";
    case FusionPoint::kAfterStage4: return "after_stage4";
  }
  throw std::invalid_argument("invalid fusion point");
}

FusionPoint ParseFusionPoint(std::string_view name) {
  for (int i = 0; i <= 4; ++i) {
    const auto point = static_cast<FusionPoint>(i);
    if (FusionPointName(point) == name) return point;
  }
  throw std::invalid_argument("invalid fusion point '" + std::string(name) +
                              "' (expected none or after_stage1..4)");
}

std::size_t NetworkConfig::StageChannels(int stage) const {
  RequireArg(stage >= 1 && stage <= 4, "stage index must be 1..4");
  return widths[static_cast<std::size_t>(stage - 1)] * expansion;
}

void ValidateNetworkConfig(const NetworkConfig& config) {
  RequireArg(config.input_rows > 0 && config.input_cols > 0,
             "network input must be non-empty");
  RequireArg(config.stem_channels > 0, "stem channels must be positive");
  RequireArg(config.expansion > 0, "expansion must be positive");
  RequireArg(config.num_classes >= 2, "need at least two classes");
  for (std::size_t s = 0; s < 4; ++s) {
    RequireArg(config.block_counts[s] > 0, "block counts must be positive");
    RequireArg(config.widths[s] > 0, "stage widths must be positive");
    RequireArg(s == 0 || config.widths[s] >= config.widths[s - 1],
               "stage widths must not decrease");
  }
  const int fp = static_cast<int>(config.fusion_point);
  RequireArg(fp >= 0 && fp <= 4, "invalid fusion point");
  RequireArg(config.fusion_point == FusionPoint::kNone || config.latent_dim > 0,
             "fusion requires a positive latent_dim");
}

Variable BottleneckBlock(const Variable& x, const BottleneckParams& p,
                         std::size_t stride) {
  Variable h = ops::Relu(ConvBias(x, p.reduce_w, p.reduce_b, 1, 0));
  h = ops::Relu(ConvBias(h, p.spatial_w, p.spatial_b, stride, 1));
  h = ConvBias(h, p.expand_w, p.expand_b, 1, 0);
  Variable shortcut = x;
  if (p.project_w) {
    shortcut = ConvBias(x, *p.project_w, *p.project_b, stride, 0);
  } else {
    RequireArg(stride == 1, "identity shortcut requires stride 1");
  }
  return ops::Relu(ops::Add(h, shortcut));
}

Variable ResidualClassifier::Param(const std::string& name, Tensor init) {
  return params_.Add(name, std::move(init));
}

ResidualClassifier::ResidualClassifier(const NetworkConfig& config,
                                       std::uint64_t seed)
    : config_(config) {
  ValidateNetworkConfig(config);
  canvas_ = CanvasForHalvings(std::max(config.input_rows, config.input_cols),
                              kHalvings);
  // Each tensor draws from its own stream, so the backbone is identical
  // whether or not a fusion adapter exists.
  auto init = [&](const std::string& name, Shape shape, double gain) {
    Rng rng = MakeRng(seed, name);
    return Param(name, HeNormal(std::move(shape), gain, rng));
  };
  auto zeros = [&](const std::string& name, Shape shape) {
    return Param(name, Tensor(std::move(shape), 0.0));
  };

  const std::size_t c0 = config.stem_channels;
  stem_w_ = init("stem.weight", {c0, 3, 7, 7}, 1.0);
  stem_b_ = zeros("stem.bias", {c0});

  std::size_t in = c0;
  for (std::size_t s = 0; s < 4; ++s) {
    const std::size_t width = config.widths[s];
    const std::size_t out = width * config.expansion;
    for (std::size_t b = 0; b < config.block_counts[s]; ++b) {
      const std::string prefix =
          "stage" + std::to_string(s + 1) + ".block" + std::to_string(b) + ".";
      Block block;
      block.stride = (s > 0 && b == 0) ? 2 : 1;
      BottleneckParams& p = block.params;
      p.reduce_w = init(prefix + "reduce.weight", {width, in, 1, 1}, 1.0);
      p.reduce_b = zeros(prefix + "reduce.bias", {width});
      p.spatial_w = init(prefix + "spatial.weight", {width, width, 3, 3}, 1.0);
      p.spatial_b = zeros(prefix + "spatial.bias", {width});
      // Down-scaled last layer keeps the un-normalised residual sum tame.
      p.expand_w = init(prefix + "expand.weight", {out, width, 1, 1}, 0.25);
      p.expand_b = zeros(prefix + "expand.bias", {out});
      if (in != out || block.stride != 1) {
        p.project_w = init(prefix + "project.weight", {out, in, 1, 1}, 1.0);
        p.project_b = zeros(prefix + "project.bias", {out});
      }
      stages_[s].push_back(std::move(block));
      in = out;
    }
  }
  {
    Rng rng = MakeRng(seed, "head.weight");
    Tensor w({config.num_classes, in});
    for (double& v : w.data()) v = 0.01 * StandardNormal(rng);
    head_w_ = Param("head.weight", std::move(w));
    head_b_ = zeros("head.bias", {config.num_classes});
  }
  if (has_fusion()) {
    const std::size_t channels =
        config.StageChannels(static_cast<int>(config.fusion_point));
    fusion_w_ = zeros("fusion.weight", {channels, config.latent_dim});
    fusion_b_ = zeros("fusion.bias", {channels});
  }
}

Variable ResidualClassifier::Forward(const Tensor& batch,
                                     const Tensor* latents) const {
  RequireArg(batch.rank() == 4 && batch.dim(1) == 3 &&
                 batch.dim(2) == config_.input_rows &&
                 batch.dim(3) == config_.input_cols,
             "classifier input must be [N,3," +
                 std::to_string(config_.input_rows) + "," +
                 std::to_string(config_.input_cols) + "], got " +
                 ShapeToString(batch.shape()));
  const std::size_t n = batch.dim(0);
  if (has_fusion()) {
    RequireArg(latents != nullptr,
               "fusion point " +
                   std::string(FusionPointName(config_.fusion_point)) +
                   " requires a latent vector");
    RequireArg(latents->rank() == 2 && latents->dim(0) == n &&
                   latents->dim(1) == config_.latent_dim,
               "latent batch must be [" + std::to_string(n) + "," +
                   std::to_string(config_.latent_dim) + "], got " +
                   ShapeToString(latents->shape()));
  } else {
    RequireArg(latents == nullptr,
               "latent vector supplied but fusion_point is none");
  }

  Variable h(FrameBatch(batch, canvas_));
  h = ops::Relu(ConvBias(h, stem_w_, stem_b_, 2, 3));
  h = ops::MaxPool2d(h, 3, 2, 1);
  for (std::size_t s = 0; s < 4; ++s) {
    for (const Block& block : stages_[s]) {
      h = BottleneckBlock(h, block.params, block.stride);
    }
    if (static_cast<int>(config_.fusion_point) == static_cast<int>(s + 1)) {
      Variable projected =
          ops::Linear(Variable(*latents), *fusion_w_, *fusion_b_);
      h = ops::AddChannelBias(h, projected);
    }
  }
  h = ops::GlobalMeanPool(h);
  return ops::Linear(h, head_w_, head_b_);
}

std::vector<double> ResidualClassifier::Logits(
    const Tensor& x, std::optional<std::span<const double>> latent) const {
  RequireArg(x.rank() == 3, "expected a single map [3,H,W]");
  NoGradGuard no_grad;
  const Tensor batch = x.Reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
  std::optional<Tensor> lat;
  if (latent) {
    lat = Tensor({1, latent->size()},
                 std::vector<double>(latent->begin(), latent->end()));
  }
  return Forward(batch, lat ? &*lat : nullptr).value().storage();
}

ResidualClassifier ResidualClassifier::Clone() const {
  ResidualClassifier copy(config_, 0);
  const auto& src = params_.entries();
  const auto& dst = copy.params_.entries();
  for (std::size_t i = 0; i < src.size(); ++i) {
    Variable v = dst[i].variable;
    v.mutable_value() = src[i].variable.value();
  }
  return copy;
}

std::vector<TrainingExample> FromLabeled(std::span<const WaferMap> maps) {
  std::vector<TrainingExample> out;
  out.reserve(maps.size());
  for (const WaferMap& m : maps) {
    RequireArg(m.label().has_value(), "map " + m.id() + " has no label");
    out.push_back({m, *m.label(), LabelSource::kTrue});
  }
  return out;
}

TrainHistory TrainSupervised(ResidualClassifier& model, const Vae* vae,
                             std::span<const TrainingExample> examples,
                             const TrainConfig& config) {
  RequireArg(!examples.empty(), "train_supervised: empty training set");
  RequireArg(config.batch_size > 0, "batch size must be positive");
  for (const auto& e : examples) {
    RequireArg(e.label >= 0 &&
                   static_cast<std::size_t>(e.label) < model.config().num_classes,
               "training label out of range for " + e.map.id());
  }
  const Tensor inputs = EncodeExamples(examples);
  std::optional<Tensor> latents;
  if (model.has_fusion()) {
    const auto maps = MapsOf(examples);
    latents = LatentsFor(model, vae, maps);
  }

  Adam adam(model.parameters().Variables(), config.adam);
  Rng rng = MakeRng(config.seed, "train-order");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  TrainHistory history;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> rows(order.data() + start, end - start);
      const Tensor x = GatherRows(inputs, rows);
      std::optional<Tensor> z;
      if (latents) z = GatherRows(*latents, rows);
      std::vector<int> labels;
      for (std::size_t r : rows) labels.push_back(examples[r].label);

      Variable logits = model.Forward(x, z ? &*z : nullptr);
      Variable loss = ops::CrossEntropy(logits, labels);
      adam.ZeroGrad();
      Backward(loss);
      adam.Step();

      loss_sum += loss.value().item() * static_cast<double>(rows.size());
      const std::size_t k = model.config().num_classes;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const double* row = logits.value().data().data() + i * k;
        const auto best = std::max_element(row, row + k) - row;
        correct += best == labels[i];
      }
    }
    const double n = static_cast<double>(examples.size());
    history.epochs.push_back({loss_sum / n, static_cast<double>(correct) / n});
  }
  history.optimizer_steps = adam.state().step_count;
  return history;
}

std::vector<Prediction> Predict(const ResidualClassifier& model,
                                const Vae* vae,
                                std::span<const WaferMap> maps) {
  std::vector<Prediction> out;
  if (maps.empty()) return out;
  NoGradGuard no_grad;
  const std::optional<Tensor> latents = LatentsFor(model, vae, maps);
  const std::size_t k = model.config().num_classes;
  for (std::size_t start = 0; start < maps.size(); start += kInferenceChunk) {
    const std::size_t end = std::min(maps.size(), start + kInferenceChunk);
    std::vector<const WaferMap*> chunk;
    std::vector<std::size_t> rows;
    for (std::size_t i = start; i < end; ++i) {
      chunk.push_back(&maps[i]);
      rows.push_back(i);
    }
    std::optional<Tensor> z;
    if (latents) z = GatherRows(*latents, rows);
    Variable probs =
        ops::Softmax(model.Forward(EncodeBatch(chunk), z ? &*z : nullptr));
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const double* row = probs.value().data().data() + i * k;
      const auto best = std::max_element(row, row + k) - row;
      out.push_back({static_cast<int>(best), row[best]});
    }
  }
  return out;
}

Prediction PredictOne(const ResidualClassifier& model, const Vae* vae,
                      const WaferMap& map) {
  return Predict(model, vae, std::span<const WaferMap>(&map, 1)).front();
}

double MeanLoss(const ResidualClassifier& model, const Vae* vae,
                std::span<const TrainingExample> examples) {
  RequireArg(!examples.empty(), "mean loss over an empty set");
  NoGradGuard no_grad;
  const auto maps = MapsOf(examples);
  const std::optional<Tensor> latents = LatentsFor(model, vae, maps);
  const Tensor inputs = EncodeExamples(examples);
  double total = 0.0;
  for (std::size_t start = 0; start < examples.size(); start += kInferenceChunk) {
    const std::size_t end = std::min(examples.size(), start + kInferenceChunk);
    std::vector<std::size_t> rows(end - start);
    std::iota(rows.begin(), rows.end(), start);
    std::vector<int> labels;
    for (std::size_t r : rows) labels.push_back(examples[r].label);
    std::optional<Tensor> z;
    if (latents) z = GatherRows(*latents, rows);
    Variable loss = ops::CrossEntropy(
        model.Forward(GatherRows(inputs, rows), z ? &*z : nullptr), labels);
    total += loss.value().item() * static_cast<double>(rows.size());
  }
  return total / static_cast<double>(examples.size());
}

nlohmann::ordered_json NetworkConfigToJson(const NetworkConfig& c) {
  nlohmann::ordered_json j;
  j["input_rows"] = c.input_rows;
  j["input_cols"] = c.input_cols;
  j["stem_channels"] = c.stem_channels;
  j["block_counts"] = c.block_counts;
  j["widths"] = c.widths;
  j["expansion"] = c.expansion;
  j["fusion_point"] = FusionPointName(c.fusion_point);
  j["num_classes"] = c.num_classes;
  j["latent_dim"] = c.latent_dim;
  return j;
}

NetworkConfig NetworkConfigFromJson(const nlohmann::ordered_json& j) {
  NetworkConfig c;
  c.input_rows = j.at("input_rows").get<std::size_t>();
  c.input_cols = j.at("input_cols").get<std::size_t>();
  c.stem_channels = j.at("stem_channels").get<std::size_t>();
  c.block_counts = j.at("block_counts").get<std::array<std::size_t, 4>>();
  c.widths = j.at("widths").get<std::array<std::size_t, 4>>();
  c.expansion = j.at("expansion").get<std::size_t>();
  c.fusion_point = ParseFusionPoint(j.at("fusion_point").get<std::string>());
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.latent_dim = j.at("latent_dim").get<std::size_t>();
  return c;
}

Checkpoint SaveClassifier(const ResidualClassifier& model) {
  nlohmann::ordered_json header;
  header["model"] = "residual_classifier";
  header["network"] = NetworkConfigToJson(model.config());
  return MakeCheckpoint(model.parameters(), std::move(header));
}

ResidualClassifier LoadClassifier(const Checkpoint& checkpoint) {
  if (checkpoint.header.value("model", "") != "residual_classifier") {
    throw std::runtime_error("checkpoint does not hold a residual classifier");
  }
  ResidualClassifier model(
      NetworkConfigFromJson(checkpoint.header.at("network")), 0);
  RestoreParameters(checkpoint, model.parameters());
  return model;
}

}  // namespace wafersemi
