// avsr/tensor.h

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

#ifndef AVSR_TENSOR_H_
#define AVSR_TENSOR_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "avsr/common.h"

namespace avsr {

using Shape = std::vector<int>;

// Product of the dimensions; 1 for the scalar shape {}.
std::int64_t NumElements(const Shape &shape);
std::string ShapeString(const Shape &shape);
// Rejects non-positive dimensions.
void CheckShape(const Shape &shape);

// Dense row-major array.  Layout is always (batch, channel, spatial...) for
// activations and (out, in, kernel...) for convolution kernels.
//
// A default-constructed tensor is "null": it has no elements and an empty
// shape.  A scalar has shape {} and exactly one element.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0));
  Tensor(Shape shape, std::vector<Real> data);

  static Tensor Scalar(Real v) { return Tensor(Shape{}, v); }

  const Shape &shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  // Negative axes count from the end.
  int dim(int axis) const;
  std::size_t size() const { return data_.size(); }
  bool null() const { return data_.empty(); }

  Real *data() { return data_.data(); }
  const Real *data() const { return data_.data(); }
  std::span<Real> flat() { return data_; }
  std::span<const Real> flat() const { return data_; }
  const std::vector<Real> &vec() const { return data_; }

  Real &operator[](std::size_t i) { return data_[i]; }
  const Real &operator[](std::size_t i) const { return data_[i]; }
  // Multi-index access, bounds checked.
  Real &at(std::initializer_list<int> index);
  const Real &at(std::initializer_list<int> index) const;

  void Reshape(Shape shape);
  Tensor Reshaped(Shape shape) const;
  void Fill(Real v);
  void SetZero() { Fill(Real(0)); }
  bool AllFinite() const;

  template <typename Other>
  Tensor<Other> Cast() const {
    std::vector<Other> out(data_.begin(), data_.end());
    return Tensor<Other>(shape_, std::move(out));
  }

  bool operator==(const Tensor &other) const = default;

 private:
  std::size_t Offset(std::initializer_list<int> index) const;

  Shape shape_;
  std::vector<Real> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace avsr

#endif  // AVSR_TENSOR_H_
