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

#ifndef WAFERSEMI_OPS_H_
#define WAFERSEMI_OPS_H_

#include <span>
#include <vector>

#include "wafersemi/autograd.h"

// Differentiable primitives. Image tensors are NCHW; every op validates
// operand shapes and throws std::invalid_argument on mismatch, and
// std::domain_error if it would produce a non-finite value.
namespace wafersemi::ops {

// Output spatial extent of a strided window op; throws unless
// (in + 2*padding - kernel) is a non-negative multiple of stride.
std::size_t WindowOutputSize(std::size_t in, std::size_t kernel,
                             std::size_t stride, std::size_t padding);

// Cross-correlation of input [N,C,H,W] with kernel [F,C,kH,kW].
Variable Conv2d(const Variable& input, const Variable& kernel,
                std::size_t stride, std::size_t padding);

// Adds bias [C] (shared) or [N,C] (per sample) to every position of
// channel c of x [N,C,...].
Variable AddChannelBias(const Variable& x, const Variable& bias);

Variable Relu(const Variable& x);
Variable Sigmoid(const Variable& x);
Variable Exp(const Variable& x);

Variable Add(const Variable& x, const Variable& y);
Variable Sub(const Variable& x, const Variable& y);
Variable Mul(const Variable& x, const Variable& y);
Variable Scale(const Variable& x, double c);
Variable AddScalar(const Variable& x, double c);

// Reductions to a scalar.
Variable Sum(const Variable& x);
Variable Mean(const Variable& x);

// Max pooling over k×k windows; padded positions never win.
Variable MaxPool2d(const Variable& x, std::size_t kernel, std::size_t stride,
                   std::size_t padding = 0);

// [N,C,H,W] -> [N,C] spatial average.
Variable GlobalMeanPool(const Variable& x);

// x [N,In] · weight[Out,In]^T + bias[Out].
Variable Linear(const Variable& x, const Variable& weight,
                const Variable& bias);

// Softmax over the last axis of a rank-1 or rank-2 tensor.
Variable Softmax(const Variable& logits);

// Mean over the batch of -log softmax(logits[n])[labels[n]]; logits [N,K]
// (or [K] with a single label).
Variable CrossEntropy(const Variable& logits, std::span<const int> labels);

// Categorical cross-entropy of logits [N,K,H,W] against per-cell targets
// (N*H*W class indices, row-major), summed over cells and averaged over N.
Variable SpatialCrossEntropy(const Variable& logits,
                             std::span<const int> targets);

Variable Concat(std::span<const Variable> xs, std::size_t axis);
Variable Reshape(const Variable& x, Shape shape);

// Nearest-neighbour resize of [N,C,H,W] to [N,C,out_h,out_w].
Variable UpsampleNearest(const Variable& x, std::size_t out_h,
                         std::size_t out_w);

}  // namespace wafersemi::ops

#endif  // WAFERSEMI_OPS_H_
