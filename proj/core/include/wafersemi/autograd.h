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

#ifndef WAFERSEMI_AUTOGRAD_H_
#define WAFERSEMI_AUTOGRAD_H_

#include <functional>
#include <memory>
#include <vector>

#include "wafersemi/tensor.h"

namespace wafersemi {

namespace internal {

// One vertex of the dynamic tape. A node records its parents and a closure
// that pushes its output gradient into them; leaves have neither.
struct Node {
  Tensor value;
  Tensor grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Tensor& grad_out)> backward;

  // Adds `delta` into this node's gradient, allocating it on first use.
  void AccumulateGrad(std::span<const double> delta);
  double* MutableGrad();
};

}  // namespace internal

// Handle to a tensor that participates in reverse-mode differentiation.
// Copies share the underlying node. The graph behind a variable lives as long
// as some variable downstream of it is alive.
class Variable {
 public:
  Variable();
  explicit Variable(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }

  // Parameter updates write through this; only meaningful on leaves.
  Tensor& mutable_value() { return node_->value; }

  bool has_grad() const { return node_->has_grad; }
  // Gradient buffer; zeros of the value's shape when no gradient is present.
  Tensor grad() const;
  void ZeroGrad();

  internal::Node* node() const { return node_.get(); }
  const std::shared_ptr<internal::Node>& shared_node() const { return node_; }

  // Builds a tape node. `backward` is dropped when no parent needs gradients.
  static Variable FromOp(Tensor value, std::vector<Variable> parents,
                         std::function<void(const Tensor&)> backward);

 private:
  explicit Variable(std::shared_ptr<internal::Node> node)
      : node_(std::move(node)) {}

  std::shared_ptr<internal::Node> node_;
};

// Disables tape recording on the current thread for its lifetime; ops
// return plain values. Used for inference.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool GradEnabled();

// Computes d(loss)/d(v) for every requires_grad variable reachable from
// `loss`. Gradients of reachable nodes are reset before propagation, so
// repeated calls on the same tape produce identical buffers. Variables not
// reachable from `loss` are left untouched; training loops zero parameter
// gradients before calling this.
void Backward(const Variable& loss);

}  // namespace wafersemi

#endif  // WAFERSEMI_AUTOGRAD_H_
