// avsr/tape.h

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

#ifndef AVSR_TAPE_H_
#define AVSR_TAPE_H_

#include <deque>
#include <functional>
#include <vector>

#include "avsr/tensor.h"

namespace avsr {

// A learnable tensor living outside any tape.  Gradients from every tape the
// parameter is registered on accumulate into `grad`.
template <typename Real>
struct Parameter {
  Tensor<Real> value;
  Tensor<Real> grad;

  void ZeroGrad() {
    if (grad.null() || grad.shape() != value.shape())
      grad = Tensor<Real>(value.shape());
    else
      grad.SetZero();
  }
};

template <typename Real>
class Tape;

// Handle to a value recorded on a tape.  Cheap to copy; only valid while the
// tape is alive.
template <typename Real>
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape<Real> *tape() const { return tape_; }
  int id() const { return id_; }

  const Tensor<Real> &value() const { return tape_->value(id_); }
  const Shape &shape() const { return value().shape(); }
  int dim(int axis) const { return value().dim(axis); }
  // Null tensor if no gradient reached this value.
  const Tensor<Real> &grad() const { return tape_->grad(id_); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  friend class Tape<Real>;
  Var(Tape<Real> *tape, int id) : tape_(tape), id_(id) {}

  Tape<Real> *tape_ = nullptr;
  int id_ = -1;
};

// Ordered record of executed operations.  Ids are assigned in execution
// order, so walking ids backwards is a valid reverse topological order.
// A tape can be differentiated exactly once.
template <typename Real>
class Tape {
 public:
  // Called with the tape and the id of the node whose output gradient is
  // available; must accumulate into the inputs' GradSink.
  using BackwardFn = std::function<void(Tape &, int)>;

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  Var<Real> Constant(Tensor<Real> value);
  Var<Real> Leaf(Tensor<Real> value, bool requires_grad = true);
  // References p.value without copying; gradients go to p.grad.  A
  // non-trainable parameter behaves as a constant.
  Var<Real> Param(Parameter<Real> &p, bool trainable = true);

  // Appends an op output.  The output requires a gradient iff any input
  // does; otherwise `backward` is discarded.
  Var<Real> Record(Tensor<Real> value, const std::vector<Var<Real>> &inputs,
                   BackwardFn backward);

  const Tensor<Real> &value(int id) const;
  const Tensor<Real> &grad(int id) const;
  bool requires_grad(int id) const { return node(id).requires_grad; }
  // Zero-initialized on first use.  Only valid for nodes requiring grad.
  Tensor<Real> &GradSink(int id);

  // Seeds d(root)/d(root) = 1 and runs every recorded backward function in
  // reverse order.  Throws on a non-scalar root or a second call.
  void Backward(const Var<Real> &root);

  std::size_t num_nodes() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    Tensor<Real> value;
    const Tensor<Real> *external = nullptr;
    Tensor<Real> grad;
    Tensor<Real> *grad_target = nullptr;
    bool requires_grad = false;
    bool grad_touched = false;
    BackwardFn backward;
  };

  const Node &node(int id) const;
  Node &node(int id);
  void CheckInput(const Var<Real> &v) const;

  std::deque<Node> nodes_;
  bool consumed_ = false;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace avsr

#endif  // AVSR_TAPE_H_
