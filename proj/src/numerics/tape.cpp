#include "mpt/numerics/tape.hpp"

#include <algorithm>

#include "mpt/error.hpp"

namespace mpt {

const DenseArray& Var::value() const { return tape_->value(id_); }

Var Tape::push(DenseArray value, bool requires_grad, Backward backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(DenseArray value) { return push(std::move(value), false, nullptr); }

Var Tape::parameter(const ParamStore& store, const std::string& name) {
  if (auto it = parameters_.find(name); it != parameters_.end()) return Var(this, it->second);
  Var leaf = push(store.value(name), true, nullptr);
  parameters_.emplace(name, leaf.id());
  return leaf;
}

Var Tape::record(DenseArray value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.valid() && &v.tape() != this) throw Error("Var recorded on a different tape");
    needs = needs || (v.valid() && requires_grad(v.id()));
  }
  return push(std::move(value), needs, std::move(backward));
}

Var Tape::record(DenseArray value, const std::vector<Var>& inputs, Backward backward) {
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.valid() && &v.tape() != this) throw Error("Var recorded on a different tape");
    needs = needs || (v.valid() && requires_grad(v.id()));
  }
  return push(std::move(value), needs, std::move(backward));
}

const DenseArray& Tape::grad(std::size_t id) { return grad_accumulator(id); }

DenseArray& Tape::grad_accumulator(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.has_grad) {
    node.grad = DenseArray(node.value.shape(), 0.0);
    node.has_grad = true;
  }
  return node.grad;
}

void Tape::backward(Var root) {
  if (&root.tape() != this) throw Error("backward root recorded on a different tape");
  if (root.value().size() != 1) {
    throw ShapeError("backward root must be a scalar, got " + shape_string(root.shape()));
  }
  for (Node& node : nodes_) {
    node.has_grad = false;
    node.grad = DenseArray();
  }
  grad_accumulator(root.id()).fill(1.0);
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.has_grad || !node.backward) continue;
    node.backward(*this, id);
  }
}

std::map<std::string, DenseArray> Tape::parameter_grads() {
  std::map<std::string, DenseArray> out;
  for (const auto& [name, id] : parameters_) out.emplace(name, grad(id));
  return out;
}

}  // namespace mpt
