#include "gatenet/networks.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "gatenet/rng.hpp"

namespace gatenet {
namespace {

constexpr std::size_t kHidden = 128;
constexpr std::size_t kClasses = 10;

// He-style fan-in scaled uniform weights.
Parameter he_uniform(std::string name, Shape shape, std::size_t fan_in, SeededRng& rng) {
  Tensor t(std::move(shape));
  const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return Parameter(std::move(name), std::move(t));
}

Parameter zeros(std::string name, Shape shape) { return Parameter(std::move(name), Tensor(std::move(shape))); }

std::size_t gate_height(const CanvasGeometry& g) { return g.height() / 2; }
std::size_t gate_width(const CanvasGeometry& g) { return g.width() / 2; }

template <class Real>
Var<Real> bind(Tape<Real>& tape, Parameter& p) {
  return tape.parameter(p);
}

void check_image_shape(const Shape& shape, const CanvasGeometry& g, const char* who) {
  if (shape.size() != 4 || shape[1] != 1 || shape[2] != g.height() || shape[3] != g.width()) {
    throw ShapeError(std::string(who) + ": expected images N x 1 x " + std::to_string(g.height()) + " x " +
                     std::to_string(g.width()) + ", got " + shape_str(shape));
  }
}

}  // namespace

template <class Real>
void require_one_hot(const BasicTensor<Real>& signals, std::size_t width) {
  if (signals.rank() != 2 || signals.dim(1) != width) {
    throw ShapeError("signal must be N x " + std::to_string(width) + ", got " + shape_str(signals.shape()));
  }
  for (std::size_t i = 0; i < signals.dim(0); ++i) {
    std::size_t ones = 0;
    for (std::size_t j = 0; j < width; ++j) {
      const Real v = signals[i * width + j];
      if (v == Real{1}) {
        ++ones;
      } else if (v != Real{0}) {
        ones = width + 1;
      }
    }
    if (ones != 1) throw std::invalid_argument("signal row " + std::to_string(i) + " is not one-hot");
  }
}

Shape gate_shape(const CanvasGeometry& geometry) {
  return {kGateChannels, gate_height(geometry), gate_width(geometry)};
}

// ---------------------------------------------------------------- function net

FunctionNetwork::FunctionNetwork(CanvasGeometry geometry, std::uint64_t seed) : geometry_(geometry) {
  SeededRng rng(seed);
  const std::size_t flat = kGateChannels * (gate_height(geometry) / 2) * (gate_width(geometry) / 2);
  conv1_w_ = he_uniform("conv1.weight", {16, 1, 5, 5}, 25, rng);
  conv1_b_ = zeros("conv1.bias", {16});
  conv2_w_ = he_uniform("conv2.weight", {kGateChannels, 16, 5, 5}, 16 * 25, rng);
  conv2_b_ = zeros("conv2.bias", {kGateChannels});
  fc1_w_ = he_uniform("fc1.weight", {flat, kHidden}, flat, rng);
  fc1_b_ = zeros("fc1.bias", {kHidden});
  fc2_w_ = he_uniform("fc2.weight", {kHidden, kClasses}, kHidden, rng);
  fc2_b_ = zeros("fc2.bias", {kClasses});
}

void FunctionNetwork::check_images(const Shape& shape) const { check_image_shape(shape, geometry_, "function network"); }

template <class Real>
Var<Real> FunctionNetwork::features(Tape<Real>& tape, Var<Real> images) {
  check_images(images.shape());
  auto x = relu(conv2d(images, bind(tape, conv1_w_), bind(tape, conv1_b_), {1, 1}, {2, 2}));
  x = maxpool2d(x, {2, 2}, {2, 2});
  return relu(conv2d(x, bind(tape, conv2_w_), bind(tape, conv2_b_), {1, 1}, {2, 2}));
}

template <class Real>
Var<Real> FunctionNetwork::head(Tape<Real>& tape, Var<Real> gated) {
  auto x = maxpool2d(gated, {2, 2}, {2, 2});
  const std::size_t n = x.shape()[0];
  x = reshape(x, {n, x.value().size() / n});
  x = relu(linear(x, bind(tape, fc1_w_), bind(tape, fc1_b_)));
  return linear(x, bind(tape, fc2_w_), bind(tape, fc2_b_));
}

template <class Real>
Var<Real> FunctionNetwork::forward(Tape<Real>& tape, Var<Real> images, std::optional<std::type_identity_t<Var<Real>>> gate) {
  return gated_head(tape, features(tape, images), gate);
}

template <class Real>
Var<Real> FunctionNetwork::gated_head(Tape<Real>& tape, Var<Real> features,
                                      std::optional<std::type_identity_t<Var<Real>>> gate) {
  auto x = features;
  if (gate) {
    const Shape per_sample = gate_shape(geometry_);
    Shape batched = per_sample;
    batched.insert(batched.begin(), features.shape()[0]);
    if (gate->shape() != per_sample && gate->shape() != batched) {
      throw ShapeError("gate shape " + shape_str(gate->shape()) + " does not match gate point " +
                       shape_str(per_sample));
    }
    x = pointwise_mul(x, *gate);
  }
  return head(tape, x);
}

Tensor FunctionNetwork::feature_map(const Tensor& images) {
  Tape<float> tape;
  return features(tape, tape.constant(images)).value();
}

Tensor FunctionNetwork::logits(const Tensor& images, const Tensor* gate) {
  Tape<float> tape;
  auto x = tape.constant(images);
  std::optional<Var<float>> g;
  if (gate) g = tape.constant(*gate);
  return forward(tape, x, g).value();
}

std::vector<Parameter*> FunctionNetwork::parameters() {
  return {&conv1_w_, &conv1_b_, &conv2_w_, &conv2_b_, &fc1_w_, &fc1_b_, &fc2_w_, &fc2_b_};
}

std::vector<const Parameter*> FunctionNetwork::parameters() const {
  return {&conv1_w_, &conv1_b_, &conv2_w_, &conv2_b_, &fc1_w_, &fc1_b_, &fc2_w_, &fc2_b_};
}

void FunctionNetwork::set_trainable(bool trainable) {
  for (Parameter* p : parameters()) p->trainable = trainable;
}

bool FunctionNetwork::frozen() const {
  for (const Parameter* p : parameters()) {
    if (p->trainable) return false;
  }
  return true;
}

// ---------------------------------------------------------------- spatial context

SpatialContextNetwork::SpatialContextNetwork(CanvasGeometry geometry, std::uint64_t seed) : geometry_(geometry) {
  const std::size_t gh = gate_height(geometry), gw = gate_width(geometry);
  // Two stride-2 4x4 transposed convs: s -> 2s (pad 1) -> 4s + 2 - 2p.
  seed_h_ = (gh + 3) / 4;
  seed_w_ = (gw + 3) / 4;
  second_pad_ = {(4 * seed_h_ + 2 - gh) / 2, (4 * seed_w_ + 2 - gw) / 2};
  SeededRng rng(seed);
  const std::size_t k = geometry.slots;
  const std::size_t seed_size = kGateChannels * seed_h_ * seed_w_;
  embed_w_ = he_uniform("embed.weight", {k, seed_size}, k, rng);
  embed_b_ = zeros("embed.bias", {seed_size});
  up1_w_ = he_uniform("up1.weight", {kGateChannels, kGateChannels, 4, 4}, kGateChannels * 4, rng);
  up1_b_ = zeros("up1.bias", {kGateChannels});
  up2_w_ = he_uniform("up2.weight", {kGateChannels, kGateChannels, 4, 4}, kGateChannels * 4, rng);
  up2_b_ = zeros("up2.bias", {kGateChannels});
  out_w_ = he_uniform("out.weight", {kGateChannels, kGateChannels, 1, 1}, kGateChannels, rng);
  out_b_ = zeros("out.bias", {kGateChannels});
}

template <class Real>
Var<Real> SpatialContextNetwork::forward(Tape<Real>& tape, Var<Real> signals) {
  require_one_hot(signals.value(), geometry_.slots);
  const std::size_t n = signals.shape()[0];
  auto x = relu(linear(signals, bind(tape, embed_w_), bind(tape, embed_b_)));
  x = reshape(x, {n, kGateChannels, seed_h_, seed_w_});
  x = relu(transposed_conv2d(x, bind(tape, up1_w_), bind(tape, up1_b_), {2, 2}, {1, 1}));
  x = relu(transposed_conv2d(x, bind(tape, up2_w_), bind(tape, up2_b_), {2, 2}, second_pad_));
  return sigmoid(conv2d(x, bind(tape, out_w_), bind(tape, out_b_)));
}

Tensor SpatialContextNetwork::gate_map(const Tensor& signals) {
  Tape<float> tape;
  return forward(tape, tape.constant(signals)).value();
}

std::vector<Parameter*> SpatialContextNetwork::parameters() {
  return {&embed_w_, &embed_b_, &up1_w_, &up1_b_, &up2_w_, &up2_b_, &out_w_, &out_b_};
}

std::vector<const Parameter*> SpatialContextNetwork::parameters() const {
  return {&embed_w_, &embed_b_, &up1_w_, &up1_b_, &up2_w_, &up2_b_, &out_w_, &out_b_};
}

// ---------------------------------------------------------------- feature context

FeatureContextNetwork::FeatureContextNetwork(CanvasGeometry geometry, std::uint64_t seed) : geometry_(geometry) {
  SeededRng rng(seed);
  conv1_w_ = he_uniform("conv1.weight", {8, 1, 5, 5}, 25, rng);
  conv1_b_ = zeros("conv1.bias", {8});
  conv2_w_ = he_uniform("conv2.weight", {16, 8, 3, 3}, 8 * 9, rng);
  conv2_b_ = zeros("conv2.bias", {16});
  fuse_w_ = he_uniform("fuse.weight", {kGateChannels, 18, 3, 3}, 18 * 9, rng);
  fuse_b_ = zeros("fuse.bias", {kGateChannels});
  out_w_ = he_uniform("out.weight", {kGateChannels, kGateChannels, 1, 1}, kGateChannels, rng);
  out_b_ = zeros("out.bias", {kGateChannels});
}

template <class Real>
Var<Real> FeatureContextNetwork::forward(Tape<Real>& tape, Var<Real> images, Var<Real> signals) {
  check_image_shape(images.shape(), geometry_, "feature context network");
  require_one_hot(signals.value(), 2);
  if (signals.shape()[0] != images.shape()[0]) {
    throw ShapeError("feature context network: " + std::to_string(signals.shape()[0]) + " signals for " +
                     std::to_string(images.shape()[0]) + " images");
  }
  auto x = relu(conv2d(images, bind(tape, conv1_w_), bind(tape, conv1_b_), {2, 2}, {2, 2}));
  x = relu(conv2d(x, bind(tape, conv2_w_), bind(tape, conv2_b_), {1, 1}, {1, 1}));
  x = concat(x, broadcast_spatial(signals, x.shape()[2], x.shape()[3]), 1);
  x = relu(conv2d(x, bind(tape, fuse_w_), bind(tape, fuse_b_), {1, 1}, {1, 1}));
  return sigmoid(conv2d(x, bind(tape, out_w_), bind(tape, out_b_)));
}

Tensor FeatureContextNetwork::gate_map(const Tensor& images, const Tensor& signals) {
  Tape<float> tape;
  return forward(tape, tape.constant(images), tape.constant(signals)).value();
}

std::vector<Parameter*> FeatureContextNetwork::parameters() {
  return {&conv1_w_, &conv1_b_, &conv2_w_, &conv2_b_, &fuse_w_, &fuse_b_, &out_w_, &out_b_};
}

std::vector<const Parameter*> FeatureContextNetwork::parameters() const {
  return {&conv1_w_, &conv1_b_, &conv2_w_, &conv2_b_, &fuse_w_, &fuse_b_, &out_w_, &out_b_};
}

// ---------------------------------------------------------------- dual system

ContextNetwork make_context_network(Task task, CanvasGeometry geometry, std::uint64_t seed) {
  switch (task) {
    case Task::spatial2:
    case Task::spatial3: return SpatialContextNetwork(geometry, seed);
    case Task::feature2: return FeatureContextNetwork(geometry, seed);
    case Task::pretrain: break;
  }
  throw std::invalid_argument("pretraining has no context network");
}

std::vector<Parameter*> parameters(ContextNetwork& net) {
  return std::visit([](auto& n) { return n.parameters(); }, net);
}

std::vector<const Parameter*> parameters(const ContextNetwork& net) {
  return std::visit([](const auto& n) { return n.parameters(); }, net);
}

const CanvasGeometry& geometry(const ContextNetwork& net) {
  return std::visit([](const auto& n) -> const CanvasGeometry& { return n.geometry(); }, net);
}

template <class Real>
Var<Real> context_gate(ContextNetwork& net, Tape<Real>& tape, Var<Real> images, Var<Real> signals) {
  if (auto* spatial = std::get_if<SpatialContextNetwork>(&net)) return spatial->forward(tape, signals);
  return std::get<FeatureContextNetwork>(net).forward(tape, images, signals);
}

template <class Real>
Var<Real> dual_forward(FunctionNetwork& fn, ContextNetwork& ctx, Tape<Real>& tape, Var<Real> images,
                       Var<Real> signals) {
  if (!(fn.geometry() == geometry(ctx))) {
    throw ShapeError("function network has " + std::to_string(fn.geometry().slots) +
                     " slots but context network has " + std::to_string(geometry(ctx).slots));
  }
  auto gate = context_gate(ctx, tape, images, signals);
  return fn.forward(tape, images, gate);
}

#define GATENET_INSTANTIATE_NETWORKS(R)                                                                      \
  template void require_one_hot(const BasicTensor<R>&, std::size_t);                                        \
  template Var<R> FunctionNetwork::forward(Tape<R>&, Var<R>, std::optional<Var<R>>);                         \
  template Var<R> FunctionNetwork::features(Tape<R>&, Var<R>);                                               \
  template Var<R> FunctionNetwork::head(Tape<R>&, Var<R>);                                                   \
  template Var<R> FunctionNetwork::gated_head(Tape<R>&, Var<R>, std::optional<Var<R>>);                      \
  template Var<R> SpatialContextNetwork::forward(Tape<R>&, Var<R>);                                          \
  template Var<R> FeatureContextNetwork::forward(Tape<R>&, Var<R>, Var<R>);                                  \
  template Var<R> context_gate(ContextNetwork&, Tape<R>&, Var<R>, Var<R>);                                   \
  template Var<R> dual_forward(FunctionNetwork&, ContextNetwork&, Tape<R>&, Var<R>, Var<R>);

GATENET_INSTANTIATE_NETWORKS(float)
GATENET_INSTANTIATE_NETWORKS(double)

}  // namespace gatenet
