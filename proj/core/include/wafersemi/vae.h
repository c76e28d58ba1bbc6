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

#ifndef WAFERSEMI_VAE_H_
#define WAFERSEMI_VAE_H_

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "wafersemi/adam.h"
#include "wafersemi/checkpoint.h"
#include "wafersemi/random.h"
#include "wafersemi/wafer_map.h"

namespace wafersemi {

struct VaeConfig {
  std::size_t input_rows = 27;
  std::size_t input_cols = 27;
  std::size_t latent_dim = 16;
  // Channels of the three stride-2 encoder convolutions; the decoder mirrors
  // them.
  std::array<std::size_t, 3> channels = {16, 32, 32};
};

// Posterior summary for one map. `sample` = mean + exp(logvar/2) * epsilon.
struct LatentCode {
  std::vector<double> mean;
  std::vector<double> logvar;
  std::vector<double> epsilon;
  std::vector<double> sample;
};

// Convolutional VAE over one-hot die-state maps. The encoder is three
// 3x3/stride-2 conv layers followed by linear mean and log-variance heads;
// the decoder maps a latent through a linear layer and three
// upsample+3x3-conv stages to per-die logits over the 3 die states.
class Vae {
 public:
  Vae(const VaeConfig& config, std::uint64_t seed);
  Vae(const Vae&) = delete;
  Vae& operator=(const Vae&) = delete;
  Vae(Vae&&) = default;
  Vae& operator=(Vae&&) = default;

  const VaeConfig& config() const { return config_; }
  std::size_t latent_dim() const { return config_.latent_dim; }
  std::size_t canvas() const { return sizes_[0]; }

  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }

  struct Posterior {
    Variable mean;    // [N,D]
    Variable logvar;  // [N,D]
  };
  // `batch` is one-hot [N,3,rows,cols]; framing happens inside.
  Posterior EncodeBatch(const Tensor& batch) const;
  // z [N,D] -> logits [N,3,rows,cols].
  Variable DecodeBatch(const Variable& z) const;

  // x is [3,rows,cols]; epsilon must have length D.
  LatentCode Encode(const Tensor& x, std::span<const double> epsilon) const;
  LatentCode Encode(const Tensor& x, Rng& rng) const;
  Tensor Decode(std::span<const double> z) const;

  // Posterior mean, the feature handed to the classifier.
  std::vector<double> ExtractLatent(const Tensor& x) const;
  // Posterior means for many maps, [N,D].
  Tensor ExtractLatents(std::span<const WaferMap> maps) const;

  // Moves the latent origin to `offset`: posterior means drop by offset and
  // the decoder's first affine layer absorbs it, so decoding is unchanged.
  void ShiftLatentOrigin(std::span<const double> offset);

 private:
  Variable Param(std::size_t index) const {
    return params_.entries()[index].variable;
  }

  VaeConfig config_;
  ParameterStore params_;
  std::array<std::size_t, 4> sizes_{};  // encoder spatial extents
};

// sample = mean + exp(logvar / 2) * epsilon, differentiable in mean/logvar.
Variable Reparameterize(const Variable& mean, const Variable& logvar,
                        const Variable& epsilon);
std::vector<double> Reparameterize(std::span<const double> mean,
                                   std::span<const double> logvar,
                                   std::span<const double> epsilon);

// KL(N(mean, exp(logvar)) || N(0, I)) = 1/2 sum(mean^2 + exp(logvar) - 1 -
// logvar), summed over latent dimensions and averaged over the batch.
Variable GaussianKl(const Variable& mean, const Variable& logvar);

struct ElboTerms {
  Variable loss;
  Variable reconstruction;
  Variable kl;
};

// Negative ELBO per map: per-die categorical cross-entropy summed over cells
// plus kl_weight * KL, averaged over the batch. `targets` holds the die
// state of every cell of every map (N*rows*cols).
ElboTerms ElboLoss(const Variable& logits, std::span<const int> targets,
                   const Variable& mean, const Variable& logvar,
                   double kl_weight = 1.0);

struct VaeTrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  AdamOptions adam;
  double kl_weight = 1.0;
  std::uint64_t seed = 1;
  // After each epoch, shift the latent origin to the epoch's mean posterior
  // mean. Reconstruction is invariant to that shift, so this is an exact
  // descent step on the KL term along a direction Adam barely moves in.
  bool recenter_latents = true;
};

struct VaeEpochStats {
  double loss = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
};

struct VaeTrainResult {
  Vae model;
  std::vector<VaeEpochStats> history;
};

VaeTrainResult PretrainVae(std::span<const WaferMap> maps,
                           const VaeConfig& config,
                           const VaeTrainConfig& train);

// Fraction of dies whose argmax state under decode(encode(x).mean) matches
// the input.
double ReconstructionAccuracy(const Vae& vae, std::span<const WaferMap> maps);

Checkpoint SaveVae(const Vae& vae);
Vae LoadVae(const Checkpoint& checkpoint);

// Die states as class indices, row-major, for a batch of maps.
std::vector<int> DieTargets(std::span<const WaferMap* const> maps);

}  // namespace wafersemi

#endif  // WAFERSEMI_VAE_H_
