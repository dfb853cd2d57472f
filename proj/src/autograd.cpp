// SPDX-License-Identifier: Apache-2.0
#include "volgen/autograd.hpp"

#include <unordered_set>

namespace volgen {

Var make_op(const char* name, Tensor value, std::vector<Var> parents,
            std::function<void(VarNode&)> backward_fn) {
  auto n = std::make_shared<VarNode>();
  n->value = std::move(value);
  n->op = name;
  if (any_requires_grad(parents)) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

void backward(const Var& root) {
  check(root != nullptr, "backward: null root");
  if (!root->requires_grad) return;

  // iterative post-order topological sort
  std::vector<VarNode*> order;
  std::unordered_set<VarNode*> visited;
  std::vector<std::pair<VarNode*, size_t>> stack;
  stack.push_back({root.get(), 0});
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, child_idx] = stack.back();
    if (child_idx < node->parents.size()) {
      VarNode* p = node->parents[child_idx].get();
      ++child_idx;
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Tensor& g = root->ensure_grad();
  g.fill(1.0f);

  // order is post-order (parents before children), so walk it in reverse
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    VarNode* n = *it;
    if (n->backward_fn && n->grad.defined()) n->backward_fn(*n);
  }
}

}  // namespace volgen
