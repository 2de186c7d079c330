#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <string>
#include <vector>

#include "mpt/numerics/dense_array.hpp"
#include "mpt/numerics/param_store.hpp"

namespace mpt {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const DenseArray& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t extent(std::size_t axis) const { return value().extent(axis); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode differentiation tape.
///
/// Every operation appends a node holding its forward value and a closure that
/// pushes the node's gradient into its inputs. Nodes are replayed in reverse
/// creation order, so gradients are a deterministic function of the forward.
class Tape {
 public:
  /// Propagates grad(self) into the inputs of node `self`.
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(DenseArray value);

  /// Leaf for a named parameter. Repeated lookups of one name return the same
  /// leaf, so every use site accumulates into one gradient.
  Var parameter(const ParamStore& store, const std::string& name);

  Var record(DenseArray value, std::initializer_list<Var> inputs, Backward backward);
  Var record(DenseArray value, const std::vector<Var>& inputs, Backward backward);

  const DenseArray& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient of node `id`; zero-filled if nothing reached it.
  const DenseArray& grad(std::size_t id);
  /// Gradient accumulator of an input, allocated on first touch.
  DenseArray& grad_accumulator(std::size_t id);

  /// Seeds d(root)/d(root) = 1 and replays the tape. Clears earlier gradients
  /// first, so calling it twice yields identical results.
  void backward(Var root);

  /// Gradients of every parameter leaf, keyed by parameter name.
  std::map<std::string, DenseArray> parameter_grads();

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    DenseArray value;
    DenseArray grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  Var push(DenseArray value, bool requires_grad, Backward backward);

  std::deque<Node> nodes_;
  std::map<std::string, std::size_t> parameters_;
};

}  // namespace mpt
