// avsr/ops.h

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

// Differentiable primitives.  Every function here records one node on the
// tape of its inputs; all inputs must live on the same tape.

#ifndef AVSR_OPS_H_
#define AVSR_OPS_H_

#include <optional>
#include <span>
#include <vector>

#include "avsr/tape.h"

namespace avsr {

enum class NormMode { kTrain, kEval };
enum class ActivationKind { kRelu, kSigmoid, kTanh };

// Stride and padding per spatial dimension.  A single entry is broadcast to
// all spatial dimensions; the number of spatial dimensions (1, 2 or 3) is
// taken from the kernel rank.
struct ConvGeometry {
  std::vector<int> stride{1};
  std::vector<int> padding{0};
};

// floor((in + 2 pad - kernel) / stride) + 1; zero or negative means the
// kernel does not fit.
int ConvOutputLength(int in, int kernel, int stride, int pad);

// Input (N, C, spatial...), kernel (Cout, C, k...), bias (Cout).
template <typename Real>
Var<Real> Conv(const Var<Real> &input, const Var<Real> &kernel,
               const std::optional<Var<Real>> &bias, const ConvGeometry &geo);

template <typename Real>
struct BatchNormStats {
  Tensor<Real> running_mean;
  Tensor<Real> running_var;

  BatchNormStats() = default;
  explicit BatchNormStats(int channels)
      : running_mean(Shape{channels}, Real(0)),
        running_var(Shape{channels}, Real(1)) {}
};

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Per-channel normalization of (N, C, ...) over every axis but 1.  Train mode
// uses batch statistics and updates `stats` by exponential moving average
// (unbiased variance); eval mode reads `stats` only.
template <typename Real>
Var<Real> BatchNorm(const Var<Real> &x, const Var<Real> &gamma,
                    const Var<Real> &beta, BatchNormStats<Real> &stats,
                    NormMode mode);

template <typename Real>
Var<Real> Activation(const Var<Real> &x, ActivationKind kind);
template <typename Real>
Var<Real> Relu(const Var<Real> &x) {
  return Activation(x, ActivationKind::kRelu);
}
template <typename Real>
Var<Real> Sigmoid(const Var<Real> &x) {
  return Activation(x, ActivationKind::kSigmoid);
}
template <typename Real>
Var<Real> Tanh(const Var<Real> &x) {
  return Activation(x, ActivationKind::kTanh);
}

// x (N, in), weight (out, in), bias (out) -> (N, out).
template <typename Real>
Var<Real> Linear(const Var<Real> &x, const Var<Real> &weight,
                 const std::optional<Var<Real>> &bias);

template <typename Real>
Var<Real> Add(const Var<Real> &a, const Var<Real> &b);
template <typename Real>
Var<Real> Sub(const Var<Real> &a, const Var<Real> &b);
template <typename Real>
Var<Real> Mul(const Var<Real> &a, const Var<Real> &b);
template <typename Real>
Var<Real> Scale(const Var<Real> &a, Real factor);

// Averages the last axis down to `target` windows.  Window i covers
// [floor(i L / target), floor((i + 1) L / target)).
template <typename Real>
Var<Real> AdaptiveAvgPool(const Var<Real> &x, int target);

template <typename Real>
Var<Real> Reshape(const Var<Real> &x, const Shape &shape);
// Output axis i is input axis axes[i].
template <typename Real>
Var<Real> Permute(const Var<Real> &x, const std::vector<int> &axes);
template <typename Real>
Var<Real> Concat(const std::vector<Var<Real>> &parts, int axis);
// x[index] along axis 0; the axis is removed.
template <typename Real>
Var<Real> Select(const Var<Real> &x, int index);
// Inverse of Select: stacks equally shaped values along a new axis 0.
template <typename Real>
Var<Real> Stack(const std::vector<Var<Real>> &parts);

template <typename Real>
Var<Real> Sum(const Var<Real> &x);
// sum(x * weights), weights constant.
template <typename Real>
Var<Real> WeightedSum(const Var<Real> &x, const Tensor<Real> &weights);

template <typename Real>
struct LossOutput {
  Var<Real> loss;      // scalar, mean over rows
  Tensor<Real> probs;  // (N, C)
};

// logits (N, C), one label per row.  Loss is the mean negative log
// likelihood, computed with a max shift.
template <typename Real>
LossOutput<Real> SoftmaxCrossEntropy(const Var<Real> &logits,
                                     std::span<const int> labels);

// Row-wise softmax of an (N, C) tensor.
template <typename Real>
Tensor<Real> SoftmaxRows(const Tensor<Real> &logits);

}  // namespace avsr

#endif  // AVSR_OPS_H_
