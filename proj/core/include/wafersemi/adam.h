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

#ifndef WAFERSEMI_ADAM_H_
#define WAFERSEMI_ADAM_H_

#include <cstdint>
#include <span>
#include <vector>

#include "wafersemi/autograd.h"

namespace wafersemi {

struct AdamOptions {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
};

// Moment buffers for one parameter list. Buffers are created lazily on the
// first step and must match the parameter shapes from then on.
struct AdamState {
  AdamOptions options;
  std::uint64_t step_count = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

// One bias-corrected Adam update applied in place:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
//   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
void AdamStep(std::span<Tensor* const> params, std::span<const Tensor> grads,
              AdamState& state);

// Convenience wrapper over variables' values and gradient buffers.
class Adam {
 public:
  explicit Adam(std::vector<Variable> params, AdamOptions options = {});

  void ZeroGrad();
  void Step();

  const AdamState& state() const { return state_; }

 private:
  std::vector<Variable> params_;
  AdamState state_;
};

}  // namespace wafersemi

#endif  // WAFERSEMI_ADAM_H_
