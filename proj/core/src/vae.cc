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

#include "wafersemi/vae.h"

#include <cmath>
#include <numeric>

#include "wafersemi/ops.h"

namespace wafersemi {
namespace {

enum VaeParam : std::size_t {
  kEnc0W, kEnc0B, kEnc1W, kEnc1B, kEnc2W, kEnc2B,
  kMeanW, kMeanB, kLogvarW, kLogvarB,
  kDecFcW, kDecFcB, kDec0W, kDec0B, kDec1W, kDec1B, kDec2W, kDec2B,
};

Tensor NormalTensor(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = stddev * StandardNormal(rng);
  return t;
}

Variable ConvBias(const Variable& x, const Variable& w, const Variable& b,
                  std::size_t stride, std::size_t padding) {
  return ops::AddChannelBias(ops::Conv2d(x, w, stride, padding), b);
}

}  // namespace

Vae::Vae(const VaeConfig& config, std::uint64_t seed) : config_(config) {
  RequireArg(config.latent_dim > 0, "latent_dim must be positive");
  RequireArg(config.input_rows == config.input_cols,
             "the VAE expects square maps");
  for (std::size_t c : config.channels) {
    RequireArg(c > 0, "VAE channel counts must be positive");
  }
  sizes_[0] = CanvasForHalvings(config.input_rows, 3);
  for (std::size_t i = 1; i < 4; ++i) sizes_[i] = (sizes_[i - 1] + 1) / 2;

  Rng rng = MakeRng(seed, "vae-init");
  const auto& ch = config.channels;
  const std::size_t d = config.latent_dim;
  const std::size_t flat = ch[2] * sizes_[3] * sizes_[3];
  auto conv = [&](const std::string& name, std::size_t out, std::size_t in) {
    const double std = std::sqrt(2.0 / static_cast<double>(in * 9));
    params_.Add(name + ".weight", NormalTensor({out, in, 3, 3}, std, rng));
    params_.Add(name + ".bias", Tensor({out}, 0.0));
  };
  auto linear = [&](const std::string& name, std::size_t out, std::size_t in,
                    double std) {
    params_.Add(name + ".weight", NormalTensor({out, in}, std, rng));
    params_.Add(name + ".bias", Tensor({out}, 0.0));
  };
  conv("encoder.conv0", ch[0], 3);
  conv("encoder.conv1", ch[1], ch[0]);
  conv("encoder.conv2", ch[2], ch[1]);
  // Small heads start the posterior near N(0, I).
  linear("encoder.mean", d, flat, 0.01);
  linear("encoder.logvar", d, flat, 0.01);
  linear("decoder.fc", flat, d, std::sqrt(2.0 / static_cast<double>(d)));
  conv("decoder.conv0", ch[1], ch[2]);
  conv("decoder.conv1", ch[0], ch[1]);
  conv("decoder.conv2", 3, ch[0]);
}

Vae::Posterior Vae::EncodeBatch(const Tensor& batch) const {
  RequireArg(batch.rank() == 4 && batch.dim(1) == 3 &&
                 batch.dim(2) == config_.input_rows &&
                 batch.dim(3) == config_.input_cols,
             "VAE input must be [N,3," + std::to_string(config_.input_rows) +
                 "," + std::to_string(config_.input_cols) + "], got " +
                 ShapeToString(batch.shape()));
  Variable x(FrameBatch(batch, canvas()));
  x = ops::Relu(ConvBias(x, Param(kEnc0W), Param(kEnc0B), 2, 1));
  x = ops::Relu(ConvBias(x, Param(kEnc1W), Param(kEnc1B), 2, 1));
  x = ops::Relu(ConvBias(x, Param(kEnc2W), Param(kEnc2B), 2, 1));
  const std::size_t n = batch.dim(0);
  x = ops::Reshape(x, {n, x.value().size() / n});
  return {ops::Linear(x, Param(kMeanW), Param(kMeanB)),
          ops::Linear(x, Param(kLogvarW), Param(kLogvarB))};
}

Variable Vae::DecodeBatch(const Variable& z) const {
  RequireArg(z.shape().size() == 2 && z.shape()[1] == config_.latent_dim,
             "latent batch must be [N," + std::to_string(config_.latent_dim) +
                 "], got " + ShapeToString(z.shape()));
  const std::size_t n = z.shape()[0];
  const auto& ch = config_.channels;
  Variable h = ops::Relu(ops::Linear(z, Param(kDecFcW), Param(kDecFcB)));
  h = ops::Reshape(h, {n, ch[2], sizes_[3], sizes_[3]});
  h = ops::UpsampleNearest(h, sizes_[2], sizes_[2]);
  h = ops::Relu(ConvBias(h, Param(kDec0W), Param(kDec0B), 1, 1));
  h = ops::UpsampleNearest(h, sizes_[1], sizes_[1]);
  h = ops::Relu(ConvBias(h, Param(kDec1W), Param(kDec1B), 1, 1));
  h = ops::UpsampleNearest(h, config_.input_rows, config_.input_cols);
  return ConvBias(h, Param(kDec2W), Param(kDec2B), 1, 1);
}

LatentCode Vae::Encode(const Tensor& x, std::span<const double> epsilon) const {
  RequireArg(x.rank() == 3, "encode expects a single map [3,H,W]");
  RequireArg(epsilon.size() == config_.latent_dim,
             "epsilon length must equal latent_dim");
  NoGradGuard no_grad;
  Posterior post = EncodeBatch(x.Reshaped({1, x.dim(0), x.dim(1), x.dim(2)}));
  LatentCode code;
  code.mean = post.mean.value().storage();
  code.logvar = post.logvar.value().storage();
  code.epsilon.assign(epsilon.begin(), epsilon.end());
  code.sample = Reparameterize(code.mean, code.logvar, code.epsilon);
  return code;
}

LatentCode Vae::Encode(const Tensor& x, Rng& rng) const {
  std::vector<double> eps(config_.latent_dim);
  for (double& e : eps) e = StandardNormal(rng);
  return Encode(x, eps);
}

Tensor Vae::Decode(std::span<const double> z) const {
  RequireArg(z.size() == config_.latent_dim,
             "decode: latent length " + std::to_string(z.size()) +
                 " != latent_dim " + std::to_string(config_.latent_dim));
  NoGradGuard no_grad;
  Variable zv(Tensor({1, z.size()}, std::vector<double>(z.begin(), z.end())));
  Variable logits = DecodeBatch(zv);
  return logits.value().Reshaped({3, config_.input_rows, config_.input_cols});
}

std::vector<double> Vae::ExtractLatent(const Tensor& x) const {
  RequireArg(x.rank() == 3, "extract_latent expects a single map [3,H,W]");
  NoGradGuard no_grad;
  Posterior post = EncodeBatch(x.Reshaped({1, x.dim(0), x.dim(1), x.dim(2)}));
  return post.mean.value().storage();
}

Tensor Vae::ExtractLatents(std::span<const WaferMap> maps) const {
  RequireArg(!maps.empty(), "extract_latents: no maps");
  NoGradGuard no_grad;
  const std::size_t d = config_.latent_dim;
  Tensor out({maps.size(), d});
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < maps.size(); start += kChunk) {
    const std::size_t end = std::min(maps.size(), start + kChunk);
    std::vector<const WaferMap*> chunk;
    for (std::size_t i = start; i < end; ++i) chunk.push_back(&maps[i]);
    Posterior post = EncodeBatch(wafersemi::EncodeBatch(chunk));
    std::copy(post.mean.value().data().begin(), post.mean.value().data().end(),
              out.data().begin() + static_cast<long>(start * d));
  }
  return out;
}

Variable Reparameterize(const Variable& mean, const Variable& logvar,
                        const Variable& epsilon) {
  RequireArg(mean.shape() == logvar.shape() && mean.shape() == epsilon.shape(),
             "reparameterize: mean, logvar and epsilon shapes differ");
  return ops::Add(mean,
                  ops::Mul(ops::Exp(ops::Scale(logvar, 0.5)), epsilon));
}

std::vector<double> Reparameterize(std::span<const double> mean,
                                   std::span<const double> logvar,
                                   std::span<const double> epsilon) {
  RequireArg(mean.size() == logvar.size() && mean.size() == epsilon.size(),
             "reparameterize: vector lengths differ");
  std::vector<double> out(mean.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = mean[i] + std::exp(0.5 * logvar[i]) * epsilon[i];
  }
  return out;
}

Variable GaussianKl(const Variable& mean, const Variable& logvar) {
  RequireArg(mean.shape() == logvar.shape(), "kl: mean/logvar shapes differ");
  const std::size_t n = mean.shape().size() == 2 ? mean.shape()[0] : 1;
  Variable terms = ops::Sub(ops::Add(ops::Mul(mean, mean), ops::Exp(logvar)),
                            ops::AddScalar(logvar, 1.0));
  return ops::Scale(ops::Sum(terms), 0.5 / static_cast<double>(n));
}

ElboTerms ElboLoss(const Variable& logits, std::span<const int> targets,
                   const Variable& mean, const Variable& logvar,
                   double kl_weight) {
  RequireArg(logits.shape().size() == 4 && logits.shape()[1] == 3,
             "elbo: logits must be [N,3,H,W]");
  RequireArg(mean.shape().size() == 2 && mean.shape()[0] == logits.shape()[0],
             "elbo: latent batch does not match logits batch");
  RequireArg(kl_weight >= 0.0, "elbo: kl_weight must be non-negative");
  ElboTerms terms;
  terms.reconstruction = ops::SpatialCrossEntropy(logits, targets);
  terms.kl = GaussianKl(mean, logvar);
  terms.loss = ops::Add(terms.reconstruction, ops::Scale(terms.kl, kl_weight));
  return terms;
}

std::vector<int> DieTargets(std::span<const WaferMap* const> maps) {
  std::vector<int> targets;
  for (const WaferMap* m : maps) {
    for (std::uint8_t v : m->cells()) targets.push_back(v);
  }
  return targets;
}

VaeTrainResult PretrainVae(std::span<const WaferMap> maps,
                           const VaeConfig& config,
                           const VaeTrainConfig& train) {
  RequireArg(!maps.empty(), "pretrain_vae: empty dataset");
  RequireArg(train.batch_size > 0, "pretrain_vae: batch size must be positive");
  VaeTrainResult result{Vae(config, DeriveSeed(train.seed, "vae-model")), {}};
  Vae& vae = result.model;
  Adam adam(vae.parameters().Variables(), train.adam);
  Rng order_rng = MakeRng(train.seed, "vae-order");
  Rng noise_rng = MakeRng(train.seed, "vae-epsilon");

  std::vector<std::size_t> order(maps.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t d = config.latent_dim;
  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    VaeEpochStats stats;
    std::vector<double> mean_sum(d, 0.0);
    for (std::size_t start = 0; start < order.size(); start += train.batch_size) {
      const std::size_t end = std::min(order.size(), start + train.batch_size);
      std::vector<const WaferMap*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&maps[order[i]]);
      const std::size_t n = batch.size();

      Vae::Posterior post = vae.EncodeBatch(wafersemi::EncodeBatch(batch));
      Tensor eps({n, d});
      for (double& e : eps.data()) e = StandardNormal(noise_rng);
      Variable z = Reparameterize(post.mean, post.logvar, Variable(eps));
      Variable logits = vae.DecodeBatch(z);
      ElboTerms terms = ElboLoss(logits, DieTargets(batch), post.mean,
                                 post.logvar, train.kl_weight);
      adam.ZeroGrad();
      Backward(terms.loss);
      adam.Step();

      const double w = static_cast<double>(n);
      stats.loss += w * terms.loss.value().item();
      stats.reconstruction += w * terms.reconstruction.value().item();
      stats.kl += w * terms.kl.value().item();
      const Tensor& mu = post.mean.value();
      for (std::size_t i = 0; i < mu.size(); ++i) mean_sum[i % d] += mu[i];
    }
    const double total = static_cast<double>(maps.size());
    if (train.recenter_latents) {
      for (double& m : mean_sum) m /= total;
      vae.ShiftLatentOrigin(mean_sum);
    }
    stats.loss /= total;
    stats.reconstruction /= total;
    stats.kl /= total;
    result.history.push_back(stats);
  }
  return result;
}

void Vae::ShiftLatentOrigin(std::span<const double> offset) {
  const std::size_t d = config_.latent_dim;
  RequireArg(offset.size() == d, "latent offset must have length " +
                                     std::to_string(d));
  Tensor& mean_bias = Param(kMeanB).mutable_value();
  for (std::size_t k = 0; k < d; ++k) mean_bias[k] -= offset[k];
  // decoder.fc: W z + b == W (z - o) + (b + W o).
  const Tensor& w = Param(kDecFcW).value();
  Tensor& b = Param(kDecFcB).mutable_value();
  for (std::size_t r = 0; r < b.size(); ++r) {
    for (std::size_t k = 0; k < d; ++k) b[r] += w[r * d + k] * offset[k];
  }
}

double ReconstructionAccuracy(const Vae& vae, std::span<const WaferMap> maps) {
  RequireArg(!maps.empty(), "reconstruction accuracy: no maps");
  NoGradGuard no_grad;
  std::size_t correct = 0, total = 0;
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < maps.size(); start += kChunk) {
    const std::size_t end = std::min(maps.size(), start + kChunk);
    std::vector<const WaferMap*> chunk;
    for (std::size_t i = start; i < end; ++i) chunk.push_back(&maps[i]);
    Vae::Posterior post = vae.EncodeBatch(EncodeBatch(chunk));
    const Tensor logits = vae.DecodeBatch(post.mean).value();
    const std::size_t area = chunk[0]->rows() * chunk[0]->cols();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const double* base = logits.data().data() + i * 3 * area;
      for (std::size_t p = 0; p < area; ++p) {
        int best = 0;
        for (int k = 1; k < 3; ++k) {
          if (base[k * area + p] > base[best * area + p]) best = k;
        }
        correct += best == chunk[i]->cells()[p];
        ++total;
      }
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

Checkpoint SaveVae(const Vae& vae) {
  nlohmann::ordered_json header;
  header["model"] = "vae";
  header["latent_dim"] = vae.config().latent_dim;
  header["input_rows"] = vae.config().input_rows;
  header["input_cols"] = vae.config().input_cols;
  header["channels"] = vae.config().channels;
  return MakeCheckpoint(vae.parameters(), std::move(header));
}

Vae LoadVae(const Checkpoint& checkpoint) {
  const auto& h = checkpoint.header;
  if (h.value("model", "") != "vae") {
    throw std::runtime_error("checkpoint does not hold a VAE");
  }
  VaeConfig config;
  config.latent_dim = h.at("latent_dim").get<std::size_t>();
  config.input_rows = h.at("input_rows").get<std::size_t>();
  config.input_cols = h.at("input_cols").get<std::size_t>();
  config.channels = h.at("channels").get<std::array<std::size_t, 3>>();
  Vae vae(config, 0);
  RestoreParameters(checkpoint, vae.parameters());
  return vae;
}

}  // namespace wafersemi
