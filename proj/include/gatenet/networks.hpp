#pragma once

#include <cstdint>
#include <optional>
#include <type_traits>
#include <variant>
#include <vector>

#include "gatenet/compose.hpp"
#include "gatenet/ops.hpp"
#include "gatenet/tape.hpp"
#include "gatenet/tensor.hpp"

namespace gatenet {

inline constexpr std::size_t kGateChannels = 16;

/// Shape of the conv2 activation the gate multiplies: 16 x 14 x 14k.
Shape gate_shape(const CanvasGeometry& geometry);

/// Frozen single-digit classifier with a multiplicative gate after conv2:
///
///   conv1 16@5x5 pad 2 -> relu -> maxpool 2 -> conv2 16@5x5 pad 2 -> relu
///   -> [x gate] -> maxpool 2 -> fc 128 -> relu -> fc 10
class FunctionNetwork {
 public:
  FunctionNetwork(CanvasGeometry geometry, std::uint64_t seed);

  /// images: N x 1 x H x W. gate: 16 x Hg x Wg (shared) or N x 16 x Hg x Wg.
  template <class Real>
  Var<Real> forward(Tape<Real>& tape, Var<Real> images, std::optional<std::type_identity_t<Var<Real>>> gate = std::nullopt);

  /// The relu(conv2) activation at the gate point, before gating.
  template <class Real>
  Var<Real> features(Tape<Real>& tape, Var<Real> images);
  /// Remainder of forward() from (gated) gate-point features to logits.
  template <class Real>
  Var<Real> head(Tape<Real>& tape, Var<Real> gated);

  /// head() after an optional gate on precomputed gate-point features.
  template <class Real>
  Var<Real> gated_head(Tape<Real>& tape, Var<Real> features, std::optional<std::type_identity_t<Var<Real>>> gate);

  /// Untaped features(): N x 16 x Hg x Wg.
  Tensor feature_map(const Tensor& images);
  /// Untaped evaluation.
  Tensor logits(const Tensor& images, const Tensor* gate = nullptr);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  void set_trainable(bool trainable);
  /// True when every parameter is frozen.
  bool frozen() const;

  const CanvasGeometry& geometry() const { return geometry_; }

 private:
  void check_images(const Shape& shape) const;

  CanvasGeometry geometry_;
  Parameter conv1_w_, conv1_b_, conv2_w_, conv2_b_, fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

/// Gate generator driven by the one-hot slot signal alone:
/// dense -> 16 x h0 x w0 seed -> two stride-2 transposed convs -> 1x1 conv -> sigmoid.
class SpatialContextNetwork {
 public:
  SpatialContextNetwork(CanvasGeometry geometry, std::uint64_t seed);

  /// signals: N x k, each row one-hot. Returns N x 16 x Hg x Wg.
  template <class Real>
  Var<Real> forward(Tape<Real>& tape, Var<Real> signals);

  Tensor gate_map(const Tensor& signals);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  const CanvasGeometry& geometry() const { return geometry_; }

 private:
  CanvasGeometry geometry_;
  std::size_t seed_h_, seed_w_;
  Extent2 second_pad_;
  Parameter embed_w_, embed_b_, up1_w_, up1_b_, up2_w_, up2_b_, out_w_, out_b_;
};

/// Gate generator that sees the canvas: conv features at gate resolution,
/// concatenated with the spatially broadcast group signal, then conv -> 1x1 conv -> sigmoid.
class FeatureContextNetwork {
 public:
  FeatureContextNetwork(CanvasGeometry geometry, std::uint64_t seed);

  /// images: N x 1 x H x W (the function network's input); signals: N x 2 one-hot.
  template <class Real>
  Var<Real> forward(Tape<Real>& tape, Var<Real> images, Var<Real> signals);

  Tensor gate_map(const Tensor& images, const Tensor& signals);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  const CanvasGeometry& geometry() const { return geometry_; }

 private:
  CanvasGeometry geometry_;
  Parameter conv1_w_, conv1_b_, conv2_w_, conv2_b_, fuse_w_, fuse_b_, out_w_, out_b_;
};

using ContextNetwork = std::variant<SpatialContextNetwork, FeatureContextNetwork>;

ContextNetwork make_context_network(Task task, CanvasGeometry geometry, std::uint64_t seed);
std::vector<Parameter*> parameters(ContextNetwork& net);
std::vector<const Parameter*> parameters(const ContextNetwork& net);
const CanvasGeometry& geometry(const ContextNetwork& net);

/// Gate for a batch; the spatial variant ignores images.
template <class Real>
Var<Real> context_gate(ContextNetwork& net, Tape<Real>& tape, Var<Real> images, Var<Real> signals);

/// Function network gated by the context network, on one tape so the loss
/// reaches the context parameters through the frozen classifier.
template <class Real>
Var<Real> dual_forward(FunctionNetwork& fn, ContextNetwork& ctx, Tape<Real>& tape, Var<Real> images,
                       Var<Real> signals);

/// Rejects rows that are not exactly one-hot.
template <class Real>
void require_one_hot(const BasicTensor<Real>& signals, std::size_t width);

}  // namespace gatenet
