#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gatenet/tape.hpp"
#include "gatenet/tensor.hpp"

namespace gatenet {

/// (height, width) pair for strides, paddings and windows.
struct Extent2 {
  std::size_t h = 1;
  std::size_t w = 1;
};

/// Untaped kernels. All image tensors are NCHW.
namespace kernels {

/// Cross-correlation with a kernel of shape O x I x Kh x Kw.
template <class Real>
BasicTensor<Real> conv2d(const BasicTensor<Real>& input, const BasicTensor<Real>& kernel,
                         const BasicTensor<Real>& bias, Extent2 stride, Extent2 padding);

/// Adjoint of conv2d. Kernel shape is I x O x Kh x Kw (input channels first),
/// output extent (H - 1) * s - 2p + Kh.
template <class Real>
BasicTensor<Real> transposed_conv2d(const BasicTensor<Real>& input, const BasicTensor<Real>& kernel,
                                    const BasicTensor<Real>& bias, Extent2 stride, Extent2 padding);

/// Window maximum; argmax receives the flat input offset chosen per output.
template <class Real>
BasicTensor<Real> maxpool2d(const BasicTensor<Real>& input, Extent2 window, Extent2 stride,
                            std::vector<std::uint32_t>* argmax = nullptr);

template <class Real>
BasicTensor<Real> linear(const BasicTensor<Real>& input, const BasicTensor<Real>& weight,
                         const BasicTensor<Real>& bias);

/// Sigmoid clamped to the open interval (0, 1) at the working precision.
template <class Real>
Real sigmoid(Real x);

}  // namespace kernels

template <class Real>
Var<Real> conv2d(Var<Real> input, Var<Real> kernel, Var<Real> bias, Extent2 stride = {}, Extent2 padding = {0, 0});

template <class Real>
Var<Real> transposed_conv2d(Var<Real> input, Var<Real> kernel, Var<Real> bias, Extent2 stride = {},
                            Extent2 padding = {0, 0});

template <class Real>
Var<Real> maxpool2d(Var<Real> input, Extent2 window, Extent2 stride);

template <class Real>
Var<Real> relu(Var<Real> x);

template <class Real>
Var<Real> sigmoid(Var<Real> x);

/// x: N x F, weight: F x G, bias: G.
template <class Real>
Var<Real> linear(Var<Real> x, Var<Real> weight, Var<Real> bias);

template <class Real>
Var<Real> concat(Var<Real> a, Var<Real> b, std::size_t axis);

template <class Real>
Var<Real> reshape(Var<Real> x, Shape shape);

/// Elementwise product of equal shapes.
template <class Real>
Var<Real> mul(Var<Real> a, Var<Real> b);

/// Gate features (N x C x H x W) by a gate of shape C x H x W (shared over
/// the batch) or N x C x H x W (per sample).
template <class Real>
Var<Real> pointwise_mul(Var<Real> features, Var<Real> gate);

/// N x S signal to N x S x H x W, constant over positions.
template <class Real>
Var<Real> broadcast_spatial(Var<Real> signal, std::size_t height, std::size_t width);

/// Sum of all elements, shape {1}.
template <class Real>
Var<Real> sum(Var<Real> x);

template <class Real>
struct CrossEntropyResult {
  Var<Real> loss;
  BasicTensor<Real> probabilities;
};

/// Mean over the batch of -log softmax(logits)[label].
template <class Real>
CrossEntropyResult<Real> softmax_cross_entropy(Var<Real> logits, std::span<const std::uint8_t> labels);

}  // namespace gatenet
