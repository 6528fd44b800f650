#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fancgan/tensor.hpp"

namespace fancgan {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Receives the gradient of the root with respect to this node's value and
// accumulates into the parents it captured.
using BackwardFn = std::function<void(const Tensor& grad_out)>;

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardFn backward;

  void accumulate(const Tensor& g);
};

// Handle to a node in a dynamically built computation graph. Copies share
// the node; use deep_copy() for an independent leaf.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int i) const { return node_->value.dim(i); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  // Gradient, or zeros of the value shape when nothing has flowed in.
  Tensor grad() const;
  void zero_grad();

  // Reverse-mode sweep from this scalar.
  void backward() const;

  Var deep_copy() const;
  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// Builds a non-leaf result. `backward` is only kept when a parent needs grad.
Var make_result(Tensor value, std::vector<Var> parents, BackwardFn backward);

Var constant(Tensor value);
Var detach(const Var& v);

// A trainable tensor with its display name.
struct NamedParam {
  std::string name;
  Var* var;
};

void zero_grads(const std::vector<NamedParam>& params);

}  // namespace fancgan
