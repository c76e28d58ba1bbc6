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

#include "wafersemi/tensor.h"

#include <cmath>
#include <sstream>

namespace wafersemi {

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

void RequireArg(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (std::size_t d : shape_) {
    RequireArg(d > 0, "tensor dimensions must be positive, got " +
                          ShapeToString(shape_));
  }
  data_.assign(NumElements(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (std::size_t d : shape_) {
    RequireArg(d > 0, "tensor dimensions must be positive, got " +
                          ShapeToString(shape_));
  }
  RequireArg(NumElements(shape_) == data_.size(),
             "tensor data length " + std::to_string(data_.size()) +
                 " does not match shape " + ShapeToString(shape_));
}

Tensor Tensor::Scalar(double value) { return Tensor(Shape{}, {value}); }

std::size_t Tensor::Offset(std::initializer_list<std::size_t> index) const {
  RequireArg(index.size() == shape_.size(),
             "index rank does not match tensor rank");
  std::size_t offset = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) throw std::out_of_range("tensor index out of range");
    offset = offset * shape_[axis] + i;
    ++axis;
  }
  return offset;
}

double& Tensor::at(std::initializer_list<std::size_t> index) {
  return data_[Offset(index)];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  return data_[Offset(index)];
}

double Tensor::item() const {
  RequireArg(data_.size() == 1, "item() requires a one-element tensor, got " +
                                    ShapeToString(shape_));
  return data_[0];
}

bool Tensor::AllFinite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::Reshaped(Shape shape) const {
  RequireArg(NumElements(shape) == data_.size(),
             "cannot reshape " + ShapeToString(shape_) + " to " +
                 ShapeToString(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::Fill(double value) {
  for (double& v : data_) v = value;
}

}  // namespace wafersemi
