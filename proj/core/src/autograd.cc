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

#include "wafersemi/autograd.h"

#include <algorithm>
#include <unordered_set>

namespace wafersemi {
namespace internal {

double* Node::MutableGrad() {
  if (!has_grad) {
    grad = Tensor(value.shape(), 0.0);
    has_grad = true;
  }
  return grad.data().data();
}

void Node::AccumulateGrad(std::span<const double> delta) {
  double* g = MutableGrad();
  for (std::size_t i = 0; i < delta.size(); ++i) g[i] += delta[i];
}

}  // namespace internal

namespace {
thread_local bool grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(grad_enabled) { grad_enabled = false; }
NoGradGuard::~NoGradGuard() { grad_enabled = previous_; }
bool GradEnabled() { return grad_enabled; }

Variable::Variable() : node_(std::make_shared<internal::Node>()) {}

Variable::Variable(Tensor value, bool requires_grad)
    : node_(std::make_shared<internal::Node>()) {
  RequireArg(value.AllFinite(), "variable initialized with non-finite values");
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Variable::grad() const {
  if (node_->has_grad) return node_->grad;
  return Tensor(node_->value.shape(), 0.0);
}

void Variable::ZeroGrad() {
  if (node_->has_grad) node_->grad.Fill(0.0);
}

Variable Variable::FromOp(Tensor value, std::vector<Variable> parents,
                          std::function<void(const Tensor&)> backward) {
  if (!value.AllFinite()) {
    throw std::domain_error("operation produced non-finite values");
  }
  auto node = std::make_shared<internal::Node>();
  node->value = std::move(value);
  bool any = grad_enabled && std::any_of(parents.begin(), parents.end(),
                         [](const Variable& p) { return p.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
  }
  return Variable(std::move(node));
}

void Backward(const Variable& loss) {
  RequireArg(loss.value().size() == 1,
             "backward requires a scalar loss, got shape " +
                 ShapeToString(loss.shape()));
  internal::Node* root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS; `order` ends up topologically sorted with
  // parents before children.
  std::vector<internal::Node*> order;
  std::unordered_set<internal::Node*> visited;
  std::vector<std::pair<internal::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      internal::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (internal::Node* node : order) {
    node->grad = Tensor(node->value.shape(), 0.0);
    node->has_grad = true;
  }
  root->grad.Fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    internal::Node* node = *it;
    if (node->backward) node->backward(node->grad);
  }
}

}  // namespace wafersemi
