#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "gatenet/tensor.hpp"

namespace gatenet {

template <class Real>
class Tape;

/// Handle to a value recorded on a Tape.
template <class Real>
class Var {
 public:
  Var() = default;
  Var(Tape<Real>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape<Real>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const BasicTensor<Real>& value() const { return tape_->value(*this); }
  const Shape& shape() const { return value().shape(); }

 private:
  Tape<Real>* tape_ = nullptr;
  std::size_t id_ = std::numeric_limits<std::size_t>::max();
};

/// Recorded computation graph with reverse-mode gradient propagation.
///
/// Nodes are appended in evaluation order, so inputs always precede their
/// consumers. Gradients are only computed along paths that start at a leaf
/// requiring them; frozen parameters still pass gradients to upstream
/// activations but their own gradient is skipped unless track_frozen is set.
template <class Real>
class Tape {
 public:
  using TensorT = BasicTensor<Real>;
  using Inputs = std::vector<const TensorT*>;
  using ForwardFn = std::function<TensorT(const Inputs&)>;
  /// Accumulates into grads[i] for every input i whose slot is non-null.
  using BackwardFn = std::function<void(const Inputs& in, const TensorT& out, const TensorT& grad_out,
                                        std::vector<TensorT*>& grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var<Real> constant(TensorT value);
  /// Leaf that receives a gradient (readable with grad()).
  Var<Real> variable(TensorT value);
  /// Leaf bound to a Parameter. On a float tape, backward() accumulates into
  /// param.grad; a double tape evaluates a cast copy and exposes grad() only.
  Var<Real> parameter(Parameter& param);

  Var<Real> record(std::string op, std::vector<Var<Real>> inputs, ForwardFn forward, BackwardFn backward);

  void backward(Var<Real> loss);

  const TensorT& value(Var<Real> v) const { return node(v).value; }
  /// Gradient of the last backward() target with respect to v.
  const TensorT& grad(Var<Real> v) const;
  bool requires_grad(Var<Real> v) const { return node(v).requires_grad; }

  /// Recompute every non-leaf from the stored leaves and compare bitwise
  /// with the recorded values.
  bool replay_matches() const;

  /// Leaf most recently bound to param; throws std::logic_error if none.
  Var<Real> bound(const Parameter& param) const;

  void set_track_frozen(bool on) { track_frozen_ = on; }
  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(std::size_t id) const { return nodes_.at(id).op; }
  const std::vector<std::size_t>& inputs_of(std::size_t id) const { return nodes_.at(id).inputs; }
  const TensorT& value_at(std::size_t id) const { return nodes_.at(id).value; }

 private:
  struct Node {
    std::string op;
    std::vector<std::size_t> inputs;
    TensorT value;
    TensorT grad;
    bool requires_grad = false;
    Parameter* param = nullptr;         // gradient sink (float tapes)
    const Parameter* source = nullptr;  // origin of a parameter leaf
    ForwardFn forward;
    BackwardFn backward;
  };

  const Node& node(Var<Real> v) const;
  Var<Real> push_leaf(std::string op, TensorT value, bool requires_grad, Parameter* param);

  std::vector<Node> nodes_;
  bool track_frozen_ = false;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace gatenet
