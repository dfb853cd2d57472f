// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "volgen/tensor.hpp"

namespace volgen {

// Reverse-mode autodiff over float32 tensors. A Var is a node in a dynamically
// built tape; ops that see no grad-requiring input skip recording entirely, so
// inference builds no graph.
struct VarNode;
using Var = std::shared_ptr<VarNode>;

struct VarNode {
  Tensor value;
  Tensor grad;  // lazily allocated, same shape as value
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<Var> parents;
  std::function<void(VarNode&)> backward_fn;

  Tensor& ensure_grad() {
    if (!grad.defined()) grad = Tensor::zeros(value.shape());
    return grad;
  }
  const Shape& shape() const { return value.shape(); }
  int64_t numel() const { return value.numel(); }
};

inline Var make_var(Tensor value, bool requires_grad = false) {
  auto n = std::make_shared<VarNode>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

inline Var constant(Tensor value) { return make_var(std::move(value), false); }
inline Var param(Tensor value) { return make_var(std::move(value), true); }

inline bool any_requires_grad(const std::vector<Var>& vs) {
  for (const auto& v : vs)
    if (v && v->requires_grad) return true;
  return false;
}

// Builds an op node. If no parent requires grad the node is a detached leaf.
Var make_op(const char* name, Tensor value, std::vector<Var> parents,
            std::function<void(VarNode&)> backward_fn);

// Accumulates gradients into every reachable grad-requiring node. Seeds the
// root with ones (typically a scalar loss).
void backward(const Var& root);

}  // namespace volgen
