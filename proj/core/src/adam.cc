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

#include "wafersemi/adam.h"

#include <cmath>

namespace wafersemi {

void AdamStep(std::span<Tensor* const> params, std::span<const Tensor> grads,
              AdamState& state) {
  const AdamOptions& opt = state.options;
  RequireArg(opt.lr >= 0.0, "adam: learning rate must be non-negative");
  RequireArg(opt.beta1 > 0.0 && opt.beta1 < 1.0, "adam: beta1 not in (0,1)");
  RequireArg(opt.beta2 > 0.0 && opt.beta2 < 1.0, "adam: beta2 not in (0,1)");
  RequireArg(opt.epsilon > 0.0, "adam: epsilon must be positive");
  RequireArg(params.size() == grads.size(),
             "adam: parameter and gradient counts differ");
  if (state.first_moment.empty() && state.step_count == 0) {
    for (Tensor* p : params) {
      state.first_moment.emplace_back(p->shape(), 0.0);
      state.second_moment.emplace_back(p->shape(), 0.0);
    }
  }
  RequireArg(state.first_moment.size() == params.size() &&
                 state.second_moment.size() == params.size(),
             "adam: moment buffers do not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    RequireArg(params[i]->shape() == grads[i].shape() &&
                   params[i]->shape() == state.first_moment[i].shape() &&
                   params[i]->shape() == state.second_moment[i].shape(),
               "adam: shape mismatch for parameter " + std::to_string(i) +
                   " " + ShapeToString(params[i]->shape()));
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i]->data().data();
    const double* g = grads[i].data().data();
    double* m = state.first_moment[i].data().data();
    double* v = state.second_moment[i].data().data();
    for (std::size_t j = 0; j < params[i]->size(); ++j) {
      m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * g[j];
      v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= opt.lr * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    }
  }
}

Adam::Adam(std::vector<Variable> params, AdamOptions options)
    : params_(std::move(params)) {
  state_.options = options;
}

void Adam::ZeroGrad() {
  for (Variable& p : params_) p.ZeroGrad();
}

void Adam::Step() {
  std::vector<Tensor*> values;
  std::vector<Tensor> grads;
  values.reserve(params_.size());
  grads.reserve(params_.size());
  for (Variable& p : params_) {
    values.push_back(&p.mutable_value());
    grads.push_back(p.grad());
  }
  AdamStep(values, grads, state_);
}

}  // namespace wafersemi
