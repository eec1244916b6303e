#include "sredge/autodiff.hpp"

#include "sredge/errors.hpp"

namespace sredge {

template <typename T>
bool GradSink<T>::wants(NodeId parent) const {
  return tape_.node(parent).requires_grad;
}

template <typename T>
Tensor<T>& GradSink<T>::grad(NodeId parent) {
  auto& slot = grads_[parent];
  if (!slot) slot.emplace(tape_.node(parent).value.shape());
  return *slot;
}

template <typename T>
Tensor<T> Gradients<T>::of(const Var<T>& v) const {
  if (has(v.id())) return *grads_[v.id()];
  return Tensor<T>(v.shape());
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{"constant", {}, std::move(value), false, {}});
  return Var<T>(this, static_cast<NodeId>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value) {
  nodes_.push_back(Node{"leaf", {}, std::move(value), true, {}});
  return Var<T>(this, static_cast<NodeId>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::param(const std::string& name, const Tensor<T>& value, bool requires_grad) {
  if (auto it = bindings_.find(name); it != bindings_.end()) return Var<T>(this, it->second);
  Var<T> v = requires_grad ? leaf(value) : constant(value);
  bindings_.emplace(name, v.id());
  return v;
}

template <typename T>
void Tape<T>::bind(const std::string& name, Var<T> v) {
  if (&v.tape() != this) throw UsageError("bind: variable belongs to another tape");
  bindings_[name] = v.id();
}

template <typename T>
std::optional<Var<T>> Tape<T>::bound(const std::string& name) const {
  auto it = bindings_.find(name);
  if (it == bindings_.end()) return std::nullopt;
  return Var<T>(const_cast<Tape*>(this), it->second);
}

template <typename T>
Var<T> Tape<T>::record(std::string op, std::vector<NodeId> parents, Tensor<T> value, BackwardFn<T> backward) {
  bool rg = false;
  for (NodeId p : parents) {
    if (p >= nodes_.size()) throw UsageError("record: parent " + std::to_string(p) + " not on tape");
    rg = rg || nodes_[p].requires_grad;
  }
  nodes_.push_back(Node{std::move(op), std::move(parents), std::move(value), rg, rg ? std::move(backward) : nullptr});
  return Var<T>(this, static_cast<NodeId>(nodes_.size() - 1));
}

template <typename T>
Gradients<T> Tape<T>::backward(const Var<T>& loss) {
  if (&loss.tape() != this) throw UsageError("backward: loss belongs to another tape");
  if (loss.value().numel() != 1) {
    throw UsageError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  std::vector<std::optional<Tensor<T>>> grads(nodes_.size());
  grads[loss.id()].emplace(loss.shape(), T{1});
  GradSink<T> sink(*this, grads);
  for (std::size_t k = loss.id() + 1; k-- > 0;) {
    const Node& n = nodes_[k];
    if (!grads[k] || !n.backward) continue;
    n.backward(*grads[k], sink);
  }
  return Gradients<T>(std::move(grads));
}

template class Tape<float>;
template class Tape<double>;
template class GradSink<float>;
template class GradSink<double>;
template class Gradients<float>;
template class Gradients<double>;

}  // namespace sredge
