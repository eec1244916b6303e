#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sredge/tensor.hpp"

namespace sredge {

using NodeId = std::uint32_t;

template <typename T>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  NodeId id() const { return id_; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Gradient accumulator handed to backward rules. Buffers for parents that
/// do not require gradients are never allocated.
template <typename T>
class GradSink {
 public:
  GradSink(Tape<T>& tape, std::vector<std::optional<Tensor<T>>>& grads) : tape_(tape), grads_(grads) {}

  bool wants(NodeId parent) const;
  /// Zero-initialised on first access.
  Tensor<T>& grad(NodeId parent);

 private:
  Tape<T>& tape_;
  std::vector<std::optional<Tensor<T>>>& grads_;
};

template <typename T>
using BackwardFn = std::function<void(const Tensor<T>& grad_out, GradSink<T>& sink)>;

/// Result of a reverse sweep, indexed by node id.
template <typename T>
class Gradients {
 public:
  explicit Gradients(std::vector<std::optional<Tensor<T>>> grads) : grads_(std::move(grads)) {}

  bool has(NodeId id) const { return id < grads_.size() && grads_[id].has_value(); }
  /// Gradient of the loss with respect to `v`; zeros when `v` did not influence it.
  Tensor<T> of(const Var<T>& v) const;
  const std::vector<std::optional<Tensor<T>>>& all() const { return grads_; }

 private:
  std::vector<std::optional<Tensor<T>>> grads_;
};

/// Append-only computation record. Every node's parents precede it, so the
/// node order is already a topological order.
template <typename T>
class Tape {
 public:
  struct Node {
    std::string op;
    std::vector<NodeId> parents;
    Tensor<T> value;
    bool requires_grad = false;
    BackwardFn<T> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> leaf(Tensor<T> value);

  /// Named parameter leaf, created once per tape; later calls return the same
  /// node. With `requires_grad` false the parameter is recorded as a constant.
  Var<T> param(const std::string& name, const Tensor<T>& value, bool requires_grad = true);
  /// Route a named parameter to an existing node (used by gradient checks).
  void bind(const std::string& name, Var<T> v);
  std::optional<Var<T>> bound(const std::string& name) const;
  const std::map<std::string, NodeId>& bindings() const { return bindings_; }

  Var<T> record(std::string op, std::vector<NodeId> parents, Tensor<T> value, BackwardFn<T> backward);

  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar loss. Gradients accumulate across fan-out.
  Gradients<T> backward(const Var<T>& loss);

 private:
  std::vector<Node> nodes_;
  std::map<std::string, NodeId> bindings_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->node(id_).value;
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->node(id_).requires_grad;
}

extern template class Tape<float>;
extern template class Tape<double>;
extern template class GradSink<float>;
extern template class GradSink<double>;
extern template class Gradients<float>;
extern template class Gradients<double>;

}  // namespace sredge
