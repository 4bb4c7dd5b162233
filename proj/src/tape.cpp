#include "gatenet/tape.hpp"

#include <stdexcept>
#include <type_traits>

namespace gatenet {

template <class Real>
const typename Tape<Real>::Node& Tape<Real>::node(Var<Real> v) const {
  if (!v.valid() || &v.tape() != this || v.id() >= nodes_.size()) {
    throw std::logic_error("variable does not belong to this tape");
  }
  return nodes_[v.id()];
}

template <class Real>
Var<Real> Tape<Real>::push_leaf(std::string op, TensorT value, bool requires_grad, Parameter* param) {
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.param = param;
  nodes_.push_back(std::move(n));
  return Var<Real>(this, nodes_.size() - 1);
}

template <class Real>
Var<Real> Tape<Real>::constant(TensorT value) {
  return push_leaf("constant", std::move(value), false, nullptr);
}

template <class Real>
Var<Real> Tape<Real>::variable(TensorT value) {
  return push_leaf("variable", std::move(value), true, nullptr);
}

template <class Real>
Var<Real> Tape<Real>::parameter(Parameter& param) {
  const bool wants_grad = param.trainable || track_frozen_;
  Var<Real> v;
  if constexpr (std::is_same_v<Real, float>) {
    v = push_leaf("parameter:" + param.name, param.value, wants_grad, &param);
  } else {
    v = push_leaf("parameter:" + param.name, param.value.template cast<Real>(), wants_grad, nullptr);
  }
  nodes_.back().source = &param;
  return v;
}

template <class Real>
Var<Real> Tape<Real>::bound(const Parameter& param) const {
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].source == &param) return Var<Real>(const_cast<Tape*>(this), i);
  }
  throw std::logic_error("parameter '" + param.name + "' is not bound on this tape");
}

template <class Real>
Var<Real> Tape<Real>::record(std::string op, std::vector<Var<Real>> inputs, ForwardFn forward,
                             BackwardFn backward) {
  Node n;
  n.op = std::move(op);
  Inputs in;
  in.reserve(inputs.size());
  for (const auto& v : inputs) {
    const Node& src = node(v);
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || src.requires_grad;
    in.push_back(&src.value);
  }
  n.value = forward(in);
  n.forward = std::move(forward);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var<Real>(this, nodes_.size() - 1);
}

template <class Real>
const BasicTensor<Real>& Tape<Real>::grad(Var<Real> v) const {
  const Node& n = node(v);
  if (n.grad.empty()) throw std::logic_error("no gradient recorded for node '" + n.op + "'");
  return n.grad;
}

template <class Real>
void Tape<Real>::backward(Var<Real> loss) {
  if (nodes_.empty()) throw std::logic_error("backward called before any forward computation");
  const Node& root = node(loss);
  if (root.value.size() != 1) {
    throw ShapeError("backward target must be scalar, got shape " + shape_str(root.value.shape()));
  }

  for (std::size_t i = 0; i <= loss.id(); ++i) {
    Node& n = nodes_[i];
    n.grad = n.requires_grad ? TensorT(n.value.shape()) : TensorT();
  }
  if (!root.requires_grad) return;
  nodes_[loss.id()].grad[0] = Real{1};

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward) continue;
    Inputs in;
    std::vector<TensorT*> grads;
    in.reserve(n.inputs.size());
    grads.reserve(n.inputs.size());
    for (std::size_t id : n.inputs) {
      Node& src = nodes_[id];
      in.push_back(&src.value);
      grads.push_back(src.requires_grad ? &src.grad : nullptr);
    }
    n.backward(in, n.value, n.grad, grads);
  }

  if constexpr (std::is_same_v<Real, float>) {
    for (std::size_t i = 0; i <= loss.id(); ++i) {
      Node& n = nodes_[i];
      if (n.param == nullptr || !n.requires_grad) continue;
      Parameter& p = *n.param;
      if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
      auto dst = p.grad.data();
      auto src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      p.has_grad = true;
    }
  }
}

template <class Real>
bool Tape<Real>::replay_matches() const {
  std::vector<TensorT> replayed(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (!n.forward) {
      replayed[i] = n.value;
      continue;
    }
    Inputs in;
    for (std::size_t id : n.inputs) in.push_back(&replayed[id]);
    replayed[i] = n.forward(in);
    if (!(replayed[i] == n.value)) return false;
  }
  return true;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace gatenet
