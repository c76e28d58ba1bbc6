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

// Randomised finite-difference cases shared by the unit tests and the
// acceptance runner. Each case draws shapes and values from the supplied
// generator and returns the worst relative gradient error.

#ifndef WAFERSEMI_TESTS_GRADCHECK_CASES_H_
#define WAFERSEMI_TESTS_GRADCHECK_CASES_H_

#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "test_support.h"
#include "wafersemi/classifier.h"
#include "wafersemi/ops.h"
#include "wafersemi/vae.h"

namespace wafersemi::testing {

struct GradCase {
  std::string name;
  std::function<double(Rng&)> run;
};

// Values bounded away from zero, for ops with a kink there.
inline Tensor AwayFromZero(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.data()) {
    v = UniformReal(rng, 0.1, 1.0) * (UniformInt(rng, 0, 1) ? 1.0 : -1.0);
  }
  return t;
}

// Well-separated values in random order, so window maxima are unique.
inline Tensor DistinctValues(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  std::vector<double> v(t.size());
  std::iota(v.begin(), v.end(), 0.0);
  std::shuffle(v.begin(), v.end(), rng);
  for (std::size_t i = 0; i < v.size(); ++i) {
    t[i] = 0.1 * v[i] + UniformReal(rng, -0.01, 0.01);
  }
  return t;
}

inline std::size_t Pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(
      UniformInt(rng, static_cast<long>(lo), static_cast<long>(hi)));
}

// Extent satisfying the exact-tiling rule for (kernel, stride, pad).
inline std::size_t TiledExtent(Rng& rng, std::size_t k, std::size_t s,
                               std::size_t p) {
  for (;;) {
    const std::size_t m = Pick(rng, 1, 4);
    const long h = static_cast<long>(s * m + k) - 2 * static_cast<long>(p);
    if (h >= 1) return static_cast<std::size_t>(h);
  }
}

inline std::vector<int> RandomLabels(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<int> labels(n);
  for (int& l : labels) l = static_cast<int>(Pick(rng, 0, k - 1));
  return labels;
}

inline std::vector<GradCase> OpGradCases() {
  using V = std::vector<Variable>;
  std::vector<GradCase> cases;
  auto unary = [&cases](std::string name, bool kink,
                        std::function<Variable(const Variable&)> op) {
    cases.push_back({std::move(name), [kink, op](Rng& rng) {
                       const Shape shape{Pick(rng, 1, 3), Pick(rng, 1, 4)};
                       const Tensor x = kink ? AwayFromZero(shape, rng)
                                             : RandomTensor(shape, rng);
                       return GradCheck(
                           [&](const V& v) { return Project(op(v[0])); }, {x},
                           rng);
                     }});
  };
  auto binary = [&cases](std::string name,
                         std::function<Variable(const Variable&,
                                                const Variable&)> op) {
    cases.push_back({std::move(name), [op](Rng& rng) {
                       const Shape shape{Pick(rng, 1, 3), Pick(rng, 1, 4)};
                       return GradCheck(
                           [&](const V& v) { return Project(op(v[0], v[1])); },
                           {RandomTensor(shape, rng), RandomTensor(shape, rng)},
                           rng);
                     }});
  };

  cases.push_back({"conv2d", [](Rng& rng) {
    const std::size_t k = Pick(rng, 0, 1) ? 3 : 1;
    const std::size_t s = Pick(rng, 1, 2);
    const std::size_t p = k == 3 ? Pick(rng, 0, 1) : 0;
    const std::size_t c = Pick(rng, 1, 3), f = Pick(rng, 1, 3);
    const Tensor x = RandomTensor({Pick(rng, 1, 2), c, TiledExtent(rng, k, s, p),
                                   TiledExtent(rng, k, s, p)}, rng);
    const Tensor w = RandomTensor({f, c, k, k}, rng);
    return GradCheck(
        [&](const V& v) { return Project(ops::Conv2d(v[0], v[1], s, p)); },
        {x, w}, rng);
  }});
  cases.push_back({"add_channel_bias", [](Rng& rng) {
    const std::size_t n = Pick(rng, 1, 3), c = Pick(rng, 1, 3);
    const bool per_sample = Pick(rng, 0, 1);
    const Tensor x = RandomTensor({n, c, Pick(rng, 1, 3), Pick(rng, 1, 3)}, rng);
    const Tensor b = per_sample ? RandomTensor({n, c}, rng) : RandomTensor({c}, rng);
    return GradCheck(
        [&](const V& v) { return Project(ops::AddChannelBias(v[0], v[1])); },
        {x, b}, rng);
  }});
  unary("relu", true, [](const Variable& x) { return ops::Relu(x); });
  unary("sigmoid", false, [](const Variable& x) { return ops::Sigmoid(x); });
  unary("exp", false, [](const Variable& x) { return ops::Exp(x); });
  unary("scale", false, [](const Variable& x) { return ops::Scale(x, -1.7); });
  unary("add_scalar", false,
        [](const Variable& x) { return ops::AddScalar(x, 0.3); });
  unary("sum", false, [](const Variable& x) {
    return ops::Mul(ops::Sum(x), ops::Sum(x));
  });
  unary("mean", false, [](const Variable& x) {
    return ops::Exp(ops::Mean(x));
  });
  unary("softmax", false, [](const Variable& x) { return ops::Softmax(x); });
  unary("reshape", false, [](const Variable& x) {
    return ops::Reshape(x, {x.value().size()});
  });
  binary("add", [](const Variable& a, const Variable& b) { return ops::Add(a, b); });
  binary("sub", [](const Variable& a, const Variable& b) { return ops::Sub(a, b); });
  binary("mul", [](const Variable& a, const Variable& b) { return ops::Mul(a, b); });
  cases.push_back({"max_pool2d", [](Rng& rng) {
    const std::size_t k = Pick(rng, 2, 3), s = Pick(rng, 1, 2);
    const std::size_t p = Pick(rng, 0, 1);
    const Tensor x = DistinctValues(
        {Pick(rng, 1, 2), Pick(rng, 1, 2), TiledExtent(rng, k, s, p),
         TiledExtent(rng, k, s, p)}, rng);
    return GradCheck(
        [&](const V& v) { return Project(ops::MaxPool2d(v[0], k, s, p)); },
        {x}, rng);
  }});
  cases.push_back({"global_mean_pool", [](Rng& rng) {
    const Tensor x = RandomTensor(
        {Pick(rng, 1, 2), Pick(rng, 1, 3), Pick(rng, 1, 4), Pick(rng, 1, 4)}, rng);
    return GradCheck(
        [&](const V& v) { return Project(ops::GlobalMeanPool(v[0])); }, {x}, rng);
  }});
  cases.push_back({"linear", [](Rng& rng) {
    const std::size_t n = Pick(rng, 1, 3), in = Pick(rng, 1, 5), out = Pick(rng, 1, 4);
    return GradCheck(
        [&](const V& v) { return Project(ops::Linear(v[0], v[1], v[2])); },
        {RandomTensor({n, in}, rng), RandomTensor({out, in}, rng),
         RandomTensor({out}, rng)}, rng);
  }});
  cases.push_back({"cross_entropy", [](Rng& rng) {
    const std::size_t n = Pick(rng, 1, 4), k = Pick(rng, 2, 9);
    const auto labels = RandomLabels(rng, n, k);
    return GradCheck(
        [&](const V& v) { return ops::CrossEntropy(v[0], labels); },
        {RandomTensor({n, k}, rng, -3, 3)}, rng);
  }});
  cases.push_back({"spatial_cross_entropy", [](Rng& rng) {
    const std::size_t n = Pick(rng, 1, 2), h = Pick(rng, 1, 3), w = Pick(rng, 1, 3);
    const auto targets = RandomLabels(rng, n * h * w, 3);
    return GradCheck(
        [&](const V& v) { return ops::SpatialCrossEntropy(v[0], targets); },
        {RandomTensor({n, 3, h, w}, rng, -3, 3)}, rng);
  }});
  cases.push_back({"concat", [](Rng& rng) {
    const std::size_t axis = Pick(rng, 0, 1);
    const std::size_t rows = Pick(rng, 1, 3), cols = Pick(rng, 1, 3);
    const Tensor a = RandomTensor({rows, cols}, rng);
    const Tensor b = axis == 0 ? RandomTensor({Pick(rng, 1, 3), cols}, rng)
                               : RandomTensor({rows, Pick(rng, 1, 3)}, rng);
    return GradCheck(
        [&](const V& v) { return Project(ops::Concat(v, axis)); }, {a, b}, rng);
  }});
  cases.push_back({"upsample_nearest", [](Rng& rng) {
    const std::size_t h = Pick(rng, 1, 4), w = Pick(rng, 1, 4);
    const Tensor x = RandomTensor({1, Pick(rng, 1, 2), h, w}, rng);
    const std::size_t oh = h + Pick(rng, 0, 4), ow = w + Pick(rng, 0, 4);
    return GradCheck(
        [&](const V& v) { return Project(ops::UpsampleNearest(v[0], oh, ow)); },
        {x}, rng);
  }});
  cases.push_back({"reparameterize", [](Rng& rng) {
    const Shape shape{Pick(rng, 1, 3), Pick(rng, 1, 4)};
    const Variable eps(RandomTensor(shape, rng));
    return GradCheck(
        [&](const V& v) { return Project(Reparameterize(v[0], v[1], eps)); },
        {RandomTensor(shape, rng), RandomTensor(shape, rng)}, rng);
  }});
  cases.push_back({"gaussian_kl", [](Rng& rng) {
    const Shape shape{Pick(rng, 1, 3), Pick(rng, 1, 4)};
    return GradCheck([&](const V& v) { return GaussianKl(v[0], v[1]); },
                     {RandomTensor(shape, rng), RandomTensor(shape, rng)}, rng);
  }});
  cases.push_back({"elbo_loss", [](Rng& rng) {
    const std::size_t n = Pick(rng, 1, 2), h = Pick(rng, 1, 3), d = Pick(rng, 1, 3);
    const auto targets = RandomLabels(rng, n * h * h, 3);
    const double beta = UniformReal(rng, 0.1, 2.0);
    return GradCheck(
        [&](const V& v) {
          return ElboLoss(v[0], targets, v[1], v[2], beta).loss;
        },
        {RandomTensor({n, 3, h, h}, rng, -2, 2), RandomTensor({n, d}, rng),
         RandomTensor({n, d}, rng)}, rng);
  }});
  cases.push_back({"bottleneck_block", [](Rng& rng) {
    const std::size_t c = Pick(rng, 1, 3), width = Pick(rng, 1, 3);
    const std::size_t out = Pick(rng, 1, 4), stride = Pick(rng, 1, 2);
    const bool project = stride == 2 || out != c;
    const std::size_t h = TiledExtent(rng, 3, stride, 1);
    std::vector<Tensor> in = {
        RandomTensor({1, project ? c : out, h, h}, rng),
        RandomTensor({width, project ? c : out, 1, 1}, rng), RandomTensor({width}, rng),
        RandomTensor({width, width, 3, 3}, rng), RandomTensor({width}, rng),
        RandomTensor({out, width, 1, 1}, rng), RandomTensor({out}, rng)};
    if (project) {
      in.push_back(RandomTensor({out, c, 1, 1}, rng));
      in.push_back(RandomTensor({out}, rng));
    }
    return GradCheck(
        [&](const V& v) {
          BottleneckParams p{v[1], v[2], v[3], v[4], v[5], v[6], {}, {}};
          if (project) {
            p.project_w = v[7];
            p.project_b = v[8];
          }
          return Project(BottleneckBlock(v[0], p, stride));
        },
        in, rng);
  }});
  return cases;
}

// One-hot batch of random die states, [n,3,size,size].
inline Tensor RandomOneHot(Rng& rng, std::size_t n, std::size_t size) {
  Tensor t({n, 3, size, size});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < size * size; ++i) {
      t[(b * 3 + Pick(rng, 0, 2)) * size * size + i] = 1.0;
    }
  return t;
}

inline VaeConfig TinyVaeConfig() {
  VaeConfig c;
  c.input_rows = c.input_cols = 9;
  c.latent_dim = 2;
  c.channels = {2, 3, 3};
  return c;
}

inline NetworkConfig TinyNetworkConfig(FusionPoint fusion) {
  NetworkConfig c;
  c.input_rows = c.input_cols = 9;
  c.stem_channels = 2;
  c.block_counts = {1, 1, 1, 1};
  c.widths = {2, 4, 4, 4};
  c.expansion = 2;
  c.fusion_point = fusion;
  c.latent_dim = 2;
  return c;
}

inline std::vector<GradCase> ModelGradCases(std::size_t coords_per_tensor) {
  std::vector<GradCase> cases;
  cases.push_back({"vae_tiny_elbo", [coords_per_tensor](Rng& rng) {
    const VaeConfig config = TinyVaeConfig();
    Vae vae(config, rng());
    // Zero biases put pre-activations exactly on the relu kink wherever the
    // receptive field is all zeros. Jitter them off it.
    for (const auto& entry : vae.parameters().entries()) {
      Variable v = entry.variable;
      for (double& w : v.mutable_value().data()) w += UniformReal(rng, -0.2, 0.2);
    }
    const std::size_t n = 2;
    const Tensor x = RandomOneHot(rng, n, config.input_rows);
    std::vector<int> targets;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < 81; ++i)
        for (int s = 0; s < 3; ++s)
          if (x[(b * 3 + s) * 81 + i] == 1.0) targets.push_back(s);
    const Variable eps(RandomTensor({n, config.latent_dim}, rng));
    auto loss = [&] {
      const auto post = vae.EncodeBatch(x);
      const Variable z = Reparameterize(post.mean, post.logvar, eps);
      return ElboLoss(vae.DecodeBatch(z), targets, post.mean, post.logvar).loss;
    };
    return GradCheckParams(loss, vae.parameters().Variables(), rng,
                           coords_per_tensor);
  }});
  cases.push_back({"classifier_tiny_ce", [coords_per_tensor](Rng& rng) {
    const NetworkConfig config = TinyNetworkConfig(
        static_cast<FusionPoint>(Pick(rng, 0, 4)));
    ResidualClassifier model(config, rng());
    // Move every parameter (the zero-initialised adapter included) off its
    // initial value so the check covers the generic case.
    for (const auto& entry : model.parameters().entries()) {
      Variable v = entry.variable;
      for (double& w : v.mutable_value().data()) w += UniformReal(rng, -0.2, 0.2);
    }
    const std::size_t n = 2;
    const Tensor x = RandomOneHot(rng, n, config.input_rows);
    const Tensor latents = RandomTensor({n, config.latent_dim}, rng);
    const auto labels = RandomLabels(rng, n, config.num_classes);
    auto loss = [&] {
      return ops::CrossEntropy(
          model.Forward(x, model.has_fusion() ? &latents : nullptr), labels);
    };
    return GradCheckParams(loss, model.parameters().Variables(), rng,
                           coords_per_tensor);
  }});
  return cases;
}

}  // namespace wafersemi::testing

#endif  // WAFERSEMI_TESTS_GRADCHECK_CASES_H_
