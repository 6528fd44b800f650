#include "fancgan/autograd.hpp"

#include <unordered_set>

#include "fancgan/error.hpp"

namespace fancgan {

void Node::accumulate(const Tensor& g) {
  if (grad.empty()) {
    require_same_shape(value, g, "gradient");
    grad = g;
  } else {
    grad += g;
  }
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
  if (!node_) throw Error("grad() on undefined Var");
  if (node_->grad.empty()) return Tensor(node_->value.shape());
  return node_->grad;
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

void Var::backward() const {
  if (!node_) throw Error("backward() on undefined Var");
  if (node_->value.size() != 1) {
    throw ShapeError("backward() needs a scalar root, got " + shape_str(node_->value.shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->accumulate(Tensor(node_->value.shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(n->grad);
  }
  // Interior gradients are not needed after the sweep.
  for (Node* n : order) {
    if (n->backward) n->grad = Tensor();
  }
}

Var Var::deep_copy() const {
  if (!node_) return Var();
  return Var(node_->value, node_->requires_grad);
}

Var make_result(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  Var out(std::move(value), false);
  bool needs = false;
  for (const Var& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    const NodePtr& node = out.node();
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const Var& p : parents) {
      if (p.defined()) node->parents.push_back(p.node());
    }
    node->backward = std::move(backward);
  }
  return out;
}

Var constant(Tensor value) { return Var(std::move(value), false); }

Var detach(const Var& v) { return Var(v.value(), false); }

void zero_grads(const std::vector<NamedParam>& params) {
  for (const auto& p : params) p.var->zero_grad();
}

}  // namespace fancgan
