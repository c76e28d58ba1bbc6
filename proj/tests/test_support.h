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

#ifndef WAFERSEMI_TESTS_TEST_SUPPORT_H_
#define WAFERSEMI_TESTS_TEST_SUPPORT_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "wafersemi/autograd.h"
#include "wafersemi/ops.h"
#include "wafersemi/random.h"
#include "wafersemi/tensor.h"

namespace wafersemi::testing {

inline Tensor RandomTensor(const Shape& shape, Rng& rng, double lo = -1.0,
                           double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.data()) v = UniformReal(rng, lo, hi);
  return t;
}

// Norm-wise relative error ||a - b|| / (||a|| + ||b||), 0 when both vanish.
inline double RelativeError(std::span<const double> a,
                            std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(na) + std::sqrt(nb);
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

using ScalarFn = std::function<Variable(const std::vector<Variable>&)>;

// Compares reverse-mode gradients of `f` with central differences for
// every coordinate of every input (or `max_coords` random ones per input).
// Returns the worst norm-wise relative error over the inputs.
inline double GradCheck(const ScalarFn& f, const std::vector<Tensor>& inputs,
                        Rng& rng, std::size_t max_coords = 0,
                        double step = 1e-6) {
  std::vector<Variable> vars;
  for (const Tensor& t : inputs) vars.emplace_back(t, true);
  Backward(f(vars));
  double worst = 0.0;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const Tensor analytic = vars[i].grad();
    std::vector<std::size_t> coords(inputs[i].size());
    for (std::size_t k = 0; k < coords.size(); ++k) coords[k] = k;
    if (max_coords && coords.size() > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords);
    }
    std::vector<double> a, n;
    NoGradGuard no_grad;
    for (std::size_t k : coords) {
      std::vector<Variable> probe;
      for (const Tensor& t : inputs) probe.emplace_back(t, false);
      Tensor& x = probe[i].mutable_value();
      const double saved = x[k];
      x[k] = saved + step;
      const double up = f(probe).value().item();
      x[k] = saved - step;
      const double down = f(probe).value().item();
      a.push_back(analytic[k]);
      n.push_back((up - down) / (2.0 * step));
    }
    worst = std::max(worst, RelativeError(a, n));
  }
  return worst;
}

// Same comparison for variables owned elsewhere (model parameters): the
// loss closure is re-evaluated after perturbing each value in place.
inline double GradCheckParams(const std::function<Variable()>& loss,
                              std::vector<Variable> params, Rng& rng,
                              std::size_t max_coords = 0,
                              double step = 1e-6) {
  for (Variable& p : params) p.ZeroGrad();
  Backward(loss());
  double worst = 0.0;
  for (Variable& p : params) {
    const Tensor analytic = p.grad();
    std::vector<std::size_t> coords(p.value().size());
    for (std::size_t k = 0; k < coords.size(); ++k) coords[k] = k;
    if (max_coords && coords.size() > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords);
    }
    std::vector<double> a, n;
    NoGradGuard no_grad;
    for (std::size_t k : coords) {
      Tensor& x = p.mutable_value();
      const double saved = x[k];
      x[k] = saved + step;
      const double up = loss().value().item();
      x[k] = saved - step;
      const double down = loss().value().item();
      x[k] = saved;
      a.push_back(analytic[k]);
      n.push_back((up - down) / (2.0 * step));
    }
    worst = std::max(worst, RelativeError(a, n));
  }
  return worst;
}

// Scalar probe sum(y * w) with fixed weights w_k = cos(1.3 k + 0.7), so
// every output element contributes a distinct gradient.
inline Variable Project(const Variable& y) {
  Tensor w(y.shape());
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = std::cos(1.3 * static_cast<double>(k) + 0.7);
  }
  return ops::Sum(ops::Mul(y, Variable(w)));
}

}  // namespace wafersemi::testing

#endif  // WAFERSEMI_TESTS_TEST_SUPPORT_H_
