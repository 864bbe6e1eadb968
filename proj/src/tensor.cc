// avsr/tensor.cc

// Copyright 2026  The avsr Authors

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

#include "avsr/tensor.h"

#include <algorithm>
#include <cmath>

namespace avsr {

std::int64_t NumElements(const Shape &shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string ShapeString(const Shape &shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

void CheckShape(const Shape &shape) {
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (shape[i] <= 0)
      AVSR_ERR("tensor dimension " << i << " of shape " << ShapeString(shape)
                                   << " is not positive");
}

template <typename Real>
Tensor<Real>::Tensor(Shape shape, Real fill) : shape_(std::move(shape)) {
  CheckShape(shape_);
  data_.assign(static_cast<std::size_t>(NumElements(shape_)), fill);
}

template <typename Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  CheckShape(shape_);
  if (static_cast<std::int64_t>(data_.size()) != NumElements(shape_))
    AVSR_ERR("tensor of shape " << ShapeString(shape_) << " needs "
                                << NumElements(shape_) << " values, got "
                                << data_.size());
}

template <typename Real>
int Tensor<Real>::dim(int axis) const {
  int r = rank();
  int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r)
    AVSR_ERR("axis " << axis << " out of range for shape "
                     << ShapeString(shape_));
  return shape_[a];
}

template <typename Real>
std::size_t Tensor<Real>::Offset(std::initializer_list<int> index) const {
  if (static_cast<int>(index.size()) != rank())
    AVSR_ERR("index of rank " << index.size() << " for tensor of shape "
                              << ShapeString(shape_));
  std::size_t off = 0;
  int axis = 0;
  for (int i : index) {
    if (i < 0 || i >= shape_[axis])
      AVSR_ERR("index " << i << " out of range on axis " << axis
                        << " of shape " << ShapeString(shape_));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

template <typename Real>
Real &Tensor<Real>::at(std::initializer_list<int> index) {
  return data_[Offset(index)];
}

template <typename Real>
const Real &Tensor<Real>::at(std::initializer_list<int> index) const {
  return data_[Offset(index)];
}

template <typename Real>
void Tensor<Real>::Reshape(Shape shape) {
  CheckShape(shape);
  if (NumElements(shape) != static_cast<std::int64_t>(data_.size()))
    AVSR_ERR("cannot reshape " << ShapeString(shape_) << " to "
                               << ShapeString(shape));
  shape_ = std::move(shape);
}

template <typename Real>
Tensor<Real> Tensor<Real>::Reshaped(Shape shape) const {
  Tensor t = *this;
  t.Reshape(std::move(shape));
  return t;
}

template <typename Real>
void Tensor<Real>::Fill(Real v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename Real>
bool Tensor<Real>::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](Real v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace avsr
