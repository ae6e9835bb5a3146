#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "csab/tensor.hpp"

namespace csab {

// Handle to a node on a Tape. Only meaningful for the tape that issued it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// A trainable tensor: value plus the gradient of the last backward pass.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string name, Tensor<T> value)
      : name(std::move(name)),
        value(std::move(value)),
        grad(this->value.shape()) {}
};

// Record of differentiable operations for reverse-mode differentiation.
// Nodes are appended in execution order, so inputs always precede their
// consumers and one reverse sweep visits them topologically.
template <typename T>
class Tape {
 public:
  // Called during the reverse sweep with the accumulated gradient of this
  // node's output; must push gradients to the node's inputs via
  // accumulate_grad. Saved forward context lives in the closure.
  using BackwardFn = std::function<void(Tape&, const Tensor<T>&)>;

  Var leaf(Tensor<T> value, const char* op = "leaf") {
    return push(op, {}, std::move(value), nullptr);
  }

  // Binds a parameter as a differentiable leaf. After backward() the
  // parameter's grad field is populated (zeros if the loss never saw it).
  Var param(Parameter<T>& p) {
    Var v = push("param", {}, p.value, nullptr);
    params_.emplace_back(v.id, &p);
    return v;
  }

  Var push(const char* op, std::vector<Var> inputs, Tensor<T> value,
           BackwardFn backward) {
    nodes_.push_back(Node{op, std::move(inputs), std::move(value),
                          std::move(backward)});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  const char* op_name(Var v) const { return nodes_.at(v.id).op; }
  std::size_t size() const { return nodes_.size(); }

  void accumulate_grad(Var v, const Tensor<T>& g) {
    Tensor<T>& slot = grads_.at(v.id);
    if (slot.numel() == 0) {
      slot = g;
    } else {
      add_inplace(slot, g);
    }
  }

  // Gradient of the last backward() target w.r.t. node v; zeros if v was
  // not on a path to it.
  Tensor<T> grad(Var v) const {
    const Tensor<T>& g = grads_.at(v.id);
    if (g.numel() == 0) return Tensor<T>(nodes_.at(v.id).value.shape());
    return g;
  }

  // Reverse sweep from a scalar loss. Fills every bound Parameter's grad.
  void backward(Var loss) {
    const Tensor<T>& lv = value(loss);
    if (lv.numel() != 1) {
      throw ShapeError("backward: loss must be a scalar, got shape " +
                       shape_str(lv.shape()));
    }
    grads_.assign(nodes_.size(), Tensor<T>());
    grads_[loss.id] = Tensor<T>::ones(lv.shape());
    for (int i = loss.id; i >= 0; --i) {
      if (grads_[i].numel() == 0 || !nodes_[i].backward) continue;
      nodes_[i].backward(*this, grads_[i]);
    }
    for (auto& [id, p] : params_) p->grad = Tensor<T>(p->value.shape());
    for (auto& [id, p] : params_) add_inplace(p->grad, grad(Var{id}));
  }

 private:
  struct Node {
    const char* op;
    std::vector<Var> inputs;
    Tensor<T> value;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
  std::vector<std::pair<int, Parameter<T>*>> params_;
};

}  // namespace csab
