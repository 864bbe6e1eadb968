// avsr/tape.cc

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

#include "avsr/tape.h"

namespace avsr {

template <typename Real>
const typename Tape<Real>::Node &Tape<Real>::node(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    AVSR_ERR("tape node " << id << " does not exist");
  return nodes_[id];
}

template <typename Real>
typename Tape<Real>::Node &Tape<Real>::node(int id) {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    AVSR_ERR("tape node " << id << " does not exist");
  return nodes_[id];
}

template <typename Real>
void Tape<Real>::CheckInput(const Var<Real> &v) const {
  if (v.tape() != this) AVSR_ERR("value belongs to a different tape");
}

template <typename Real>
Var<Real> Tape<Real>::Constant(Tensor<Real> value) {
  return Leaf(std::move(value), false);
}

template <typename Real>
Var<Real> Tape<Real>::Leaf(Tensor<Real> value, bool requires_grad) {
  if (consumed_) AVSR_ERR("cannot record on a tape that was differentiated");
  Node &n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return Var<Real>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename Real>
Var<Real> Tape<Real>::Param(Parameter<Real> &p, bool trainable) {
  if (consumed_) AVSR_ERR("cannot record on a tape that was differentiated");
  Node &n = nodes_.emplace_back();
  n.external = &p.value;
  n.requires_grad = trainable;
  if (trainable) n.grad_target = &p.grad;
  return Var<Real>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename Real>
Var<Real> Tape<Real>::Record(Tensor<Real> value,
                             const std::vector<Var<Real>> &inputs,
                             BackwardFn backward) {
  if (consumed_) AVSR_ERR("cannot record on a tape that was differentiated");
  bool needs = false;
  for (const auto &v : inputs) {
    CheckInput(v);
    needs = needs || requires_grad(v.id());
  }
  Node &n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  return Var<Real>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename Real>
const Tensor<Real> &Tape<Real>::value(int id) const {
  const Node &n = node(id);
  return n.external ? *n.external : n.value;
}

template <typename Real>
const Tensor<Real> &Tape<Real>::grad(int id) const {
  static const Tensor<Real> kNull;
  const Node &n = node(id);
  if (!n.grad_touched) return kNull;
  return n.grad_target ? *n.grad_target : n.grad;
}

template <typename Real>
Tensor<Real> &Tape<Real>::GradSink(int id) {
  Node &n = node(id);
  if (!n.requires_grad)
    AVSR_ERR("gradient requested for node " << id
                                            << " which does not require one");
  Tensor<Real> &g = n.grad_target ? *n.grad_target : n.grad;
  const Shape &shape = (n.external ? *n.external : n.value).shape();
  if (n.grad_target) {
    // Parameter gradients persist across tapes; only allocate.
    if (g.null() || g.shape() != shape) g = Tensor<Real>(shape);
  } else if (!n.grad_touched) {
    g = Tensor<Real>(shape);
  }
  n.grad_touched = true;
  return g;
}

template <typename Real>
void Tape<Real>::Backward(const Var<Real> &root) {
  CheckInput(root);
  if (consumed_)
    AVSR_ERR("backward called twice on the same tape; build a new tape");
  if (root.value().size() != 1)
    AVSR_ERR("backward root must be a scalar, got shape "
             << ShapeString(root.shape()));
  if (!requires_grad(root.id()))
    AVSR_ERR("backward root does not depend on any differentiable value");
  consumed_ = true;
  GradSink(root.id())[0] += Real(1);
  for (int id = root.id(); id >= 0; --id) {
    Node &n = nodes_[id];
    if (!n.backward) continue;
    if (n.grad_touched) n.backward(*this, id);
    n.backward = nullptr;  // releases saved context
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace avsr
