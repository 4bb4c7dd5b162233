#include "gatenet/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>

namespace gatenet {
namespace {

template <class Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Real>
using MapMat = Eigen::Map<RowMat<Real>>;
template <class Real>
using ConstMapMat = Eigen::Map<const RowMat<Real>>;

std::string dims(const Shape& s) { return shape_str(s); }

void require_rank(const Shape& s, std::size_t rank, const char* op, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " + dims(s));
  }
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + dims(a) + " vs " + dims(b));
}

struct ConvGeometry {
  std::size_t channels, height, width;  // image side
  std::size_t kh, kw;
  Extent2 stride, pad;
  std::size_t out_h, out_w;  // column positions
};

// Output columns [lo, hi) whose input column ox * stride + kj - pad lies inside [0, width).
inline std::pair<std::size_t, std::size_t> valid_columns(const ConvGeometry& g, std::size_t kj) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad.w), s = static_cast<std::ptrdiff_t>(g.stride.w);
  const auto k = static_cast<std::ptrdiff_t>(kj), w = static_cast<std::ptrdiff_t>(g.width);
  std::ptrdiff_t lo = pad > k ? (pad - k + s - 1) / s : 0;
  std::ptrdiff_t hi = w - 1 + pad - k < 0 ? 0 : (w - 1 + pad - k) / s + 1;
  hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(g.out_w));
  lo = std::min(lo, hi);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Unfold one C x H x W image into (C*kh*kw) x (out_h*out_w).
template <class Real>
void im2col(const Real* image, const ConvGeometry& g, Real* col) {
  const std::size_t positions = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        Real* row = col + ((c * g.kh + ki) * g.kw + kj) * positions;
        const auto [lo, hi] = valid_columns(g, kj);
        const std::size_t first = lo * g.stride.w + kj - g.pad.w;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride.h + ki) - static_cast<std::ptrdiff_t>(g.pad.h);
          Real* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height) || lo == hi) {
            std::fill(dst, dst + g.out_w, Real{0});
            continue;
          }
          const Real* src = image + (c * g.height + static_cast<std::size_t>(iy)) * g.width + first;
          std::fill(dst, dst + lo, Real{0});
          if (g.stride.w == 1) {
            std::copy(src, src + (hi - lo), dst + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[(ox - lo) * g.stride.w];
          }
          std::fill(dst + hi, dst + g.out_w, Real{0});
        }
      }
    }
  }
}

// Scatter-add the inverse of im2col.
template <class Real>
void col2im(const Real* col, const ConvGeometry& g, Real* image) {
  const std::size_t positions = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const Real* row = col + ((c * g.kh + ki) * g.kw + kj) * positions;
        const auto [lo, hi] = valid_columns(g, kj);
        if (lo == hi) continue;
        const std::size_t first = lo * g.stride.w + kj - g.pad.w;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride.h + ki) - static_cast<std::ptrdiff_t>(g.pad.h);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          Real* dst = image + (c * g.height + static_cast<std::size_t>(iy)) * g.width + first;
          const Real* src = row + oy * g.out_w;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[(ox - lo) * g.stride.w] += src[ox];
        }
      }
    }
  }
}

std::size_t conv_extent(std::size_t in, std::size_t pad, std::size_t k, std::size_t stride, const char* op,
                        const char* axis) {
  if (stride == 0) throw ShapeError(std::string(op) + ": stride must be positive");
  if (in + 2 * pad < k) {
    throw ShapeError(std::string(op) + ": kernel " + axis + " extent " + std::to_string(k) +
                     " exceeds padded input " + axis + " extent " + std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - k) / stride + 1;
}

std::size_t tconv_extent(std::size_t in, std::size_t pad, std::size_t k, std::size_t stride, const char* axis) {
  if (stride == 0) throw ShapeError("transposed_conv2d: stride must be positive");
  const auto full = static_cast<std::ptrdiff_t>((in - 1) * stride + k);
  const auto out = full - 2 * static_cast<std::ptrdiff_t>(pad);
  if (out <= 0) {
    throw ShapeError(std::string("transposed_conv2d: output ") + axis + " extent would be " + std::to_string(out));
  }
  return static_cast<std::size_t>(out);
}

template <class Real>
void check_conv_operands(const BasicTensor<Real>& input, const BasicTensor<Real>& kernel,
                         const BasicTensor<Real>& bias, std::size_t in_axis, std::size_t out_axis, const char* op) {
  require_rank(input.shape(), 4, op, "input");
  require_rank(kernel.shape(), 4, op, "kernel");
  if (kernel.dim(in_axis) != input.dim(1)) {
    throw ShapeError(std::string(op) + ": input has " + std::to_string(input.dim(1)) + " channels but kernel " +
                     dims(kernel.shape()) + " expects " + std::to_string(kernel.dim(in_axis)));
  }
  if (bias.shape() != Shape{kernel.dim(out_axis)}) {
    throw ShapeError(std::string(op) + ": bias shape " + dims(bias.shape()) + " does not match " +
                     std::to_string(kernel.dim(out_axis)) + " output channels");
  }
}

template <class Real>
void add_channel_bias(BasicTensor<Real>& out, const BasicTensor<Real>& bias) {
  const std::size_t n = out.dim(0), c = out.dim(1), hw = out.dim(2) * out.dim(3);
  Real* p = out.data().data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const Real b = bias[ch];
      Real* q = p + (i * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k) q[k] += b;
    }
}

template <class Real>
void accumulate_channel_sums(const BasicTensor<Real>& grad_out, BasicTensor<Real>& grad_bias) {
  const std::size_t n = grad_out.dim(0), c = grad_out.dim(1), hw = grad_out.dim(2) * grad_out.dim(3);
  const Real* p = grad_out.data().data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const Real* q = p + (i * c + ch) * hw;
      Real s{0};
      for (std::size_t k = 0; k < hw; ++k) s += q[k];
      grad_bias[ch] += s;
    }
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace kernels {

template <class Real>
BasicTensor<Real> conv2d(const BasicTensor<Real>& input, const BasicTensor<Real>& kernel,
                         const BasicTensor<Real>& bias, Extent2 stride, Extent2 padding) {
  check_conv_operands(input, kernel, bias, 1, 0, "conv2d");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t o = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const ConvGeometry g{c, h, w, kh, kw, stride, padding,
                       conv_extent(h, padding.h, kh, stride.h, "conv2d", "height"),
                       conv_extent(w, padding.w, kw, stride.w, "conv2d", "width")};
  const std::size_t positions = g.out_h * g.out_w, patch = c * kh * kw;
  BasicTensor<Real> out({n, o, g.out_h, g.out_w});
  std::vector<Real> col(patch * positions);
  ConstMapMat<Real> wm(kernel.data().data(), o, patch);
  for (std::size_t i = 0; i < n; ++i) {
    im2col(input.data().data() + i * c * h * w, g, col.data());
    MapMat<Real> om(out.data().data() + i * o * positions, o, positions);
    om.noalias() = wm * ConstMapMat<Real>(col.data(), patch, positions);
  }
  add_channel_bias(out, bias);
  return out;
}

template <class Real>
BasicTensor<Real> transposed_conv2d(const BasicTensor<Real>& input, const BasicTensor<Real>& kernel,
                                    const BasicTensor<Real>& bias, Extent2 stride, Extent2 padding) {
  check_conv_operands(input, kernel, bias, 0, 1, "transposed_conv2d");
  const std::size_t n = input.dim(0), ci = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t o = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  const std::size_t oh = tconv_extent(h, padding.h, kh, stride.h, "height");
  const std::size_t ow = tconv_extent(w, padding.w, kw, stride.w, "width");
  const ConvGeometry g{o, oh, ow, kh, kw, stride, padding, h, w};
  const std::size_t positions = h * w, patch = o * kh * kw;
  BasicTensor<Real> out({n, o, oh, ow});
  std::vector<Real> col(patch * positions);
  ConstMapMat<Real> km(kernel.data().data(), ci, patch);
  for (std::size_t i = 0; i < n; ++i) {
    MapMat<Real> cm(col.data(), patch, positions);
    cm.noalias() = km.transpose() * ConstMapMat<Real>(input.data().data() + i * ci * positions, ci, positions);
    col2im(col.data(), g, out.data().data() + i * o * oh * ow);
  }
  add_channel_bias(out, bias);
  return out;
}

template <class Real>
BasicTensor<Real> maxpool2d(const BasicTensor<Real>& input, Extent2 window, Extent2 stride,
                            std::vector<std::uint32_t>* argmax) {
  require_rank(input.shape(), 4, "maxpool2d", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (window.h == 0 || window.w == 0 || stride.h == 0 || stride.w == 0) {
    throw ShapeError("maxpool2d: window and stride must be positive");
  }
  if (window.h > h || window.w > w) {
    throw ShapeError("maxpool2d: window " + std::to_string(window.h) + "x" + std::to_string(window.w) +
                     " larger than input " + std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t oh = (h - window.h) / stride.h + 1, ow = (w - window.w) / stride.w + 1;
  BasicTensor<Real> out({n, c, oh, ow});
  if (argmax) argmax->assign(out.size(), 0);
  const Real* in = input.data().data();
  std::size_t k = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox, ++k) {
        std::size_t best = base + oy * stride.h * w + ox * stride.w;
        for (std::size_t dy = 0; dy < window.h; ++dy)
          for (std::size_t dx = 0; dx < window.w; ++dx) {
            const std::size_t idx = base + (oy * stride.h + dy) * w + ox * stride.w + dx;
            if (in[idx] > in[best]) best = idx;
          }
        out[k] = in[best];
        if (argmax) (*argmax)[k] = static_cast<std::uint32_t>(best);
      }
  }
  return out;
}

template <class Real>
BasicTensor<Real> linear(const BasicTensor<Real>& input, const BasicTensor<Real>& weight,
                         const BasicTensor<Real>& bias) {
  require_rank(input.shape(), 2, "linear", "input");
  require_rank(weight.shape(), 2, "linear", "weight");
  if (input.dim(1) != weight.dim(0)) {
    throw ShapeError("linear: input features " + std::to_string(input.dim(1)) + " do not match weight " +
                     dims(weight.shape()));
  }
  if (bias.shape() != Shape{weight.dim(1)}) {
    throw ShapeError("linear: bias shape " + dims(bias.shape()) + " does not match " + std::to_string(weight.dim(1)) +
                     " outputs");
  }
  const std::size_t n = input.dim(0), f = input.dim(1), g = weight.dim(1);
  BasicTensor<Real> out({n, g});
  MapMat<Real> om(out.data().data(), n, g);
  om.noalias() = ConstMapMat<Real>(input.data().data(), n, f) * ConstMapMat<Real>(weight.data().data(), f, g);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < g; ++j) out[i * g + j] += bias[j];
  return out;
}

template <class Real>
Real sigmoid(Real x) {
  Real s;
  if (x >= Real{0}) {
    s = Real{1} / (Real{1} + std::exp(-x));
  } else {
    const Real e = std::exp(x);
    s = e / (Real{1} + e);
  }
  constexpr Real lo = std::numeric_limits<Real>::min();
  const Real hi = std::nextafter(Real{1}, Real{0});
  return std::clamp(s, lo, hi);
}

}  // namespace kernels

template <class Real>
Var<Real> conv2d(Var<Real> input, Var<Real> kernel, Var<Real> bias, Extent2 stride, Extent2 padding) {
  using T = BasicTensor<Real>;
  auto fwd = [stride, padding](const typename Tape<Real>::Inputs& in) {
    return kernels::conv2d(*in[0], *in[1], *in[2], stride, padding);
  };
  auto bwd = [stride, padding](const typename Tape<Real>::Inputs& in, const T& out, const T& gout,
                               std::vector<T*>& grads) {
    const T& x = *in[0];
    const T& k = *in[1];
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t o = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    const ConvGeometry g{c, h, w, kh, kw, stride, padding, out.dim(2), out.dim(3)};
    const std::size_t positions = g.out_h * g.out_w, patch = c * kh * kw;
    std::vector<Real> col(patch * positions);
    ConstMapMat<Real> km(k.data().data(), o, patch);
    for (std::size_t i = 0; i < n; ++i) {
      ConstMapMat<Real> gm(gout.data().data() + i * o * positions, o, positions);
      if (grads[1]) {
        im2col(x.data().data() + i * c * h * w, g, col.data());
        MapMat<Real> dk(grads[1]->data().data(), o, patch);
        dk.noalias() += gm * ConstMapMat<Real>(col.data(), patch, positions).transpose();
      }
      if (grads[0]) {
        MapMat<Real> cm(col.data(), patch, positions);
        cm.noalias() = km.transpose() * gm;
        col2im(col.data(), g, grads[0]->data().data() + i * c * h * w);
      }
    }
    if (grads[2]) accumulate_channel_sums(gout, *grads[2]);
  };
  return input.tape().record("conv2d", {input, kernel, bias}, std::move(fwd), std::move(bwd));
}

template <class Real>
Var<Real> transposed_conv2d(Var<Real> input, Var<Real> kernel, Var<Real> bias, Extent2 stride, Extent2 padding) {
  using T = BasicTensor<Real>;
  auto fwd = [stride, padding](const typename Tape<Real>::Inputs& in) {
    return kernels::transposed_conv2d(*in[0], *in[1], *in[2], stride, padding);
  };
  auto bwd = [stride, padding](const typename Tape<Real>::Inputs& in, const T& out, const T& gout,
                               std::vector<T*>& grads) {
    const T& x = *in[0];
    const T& k = *in[1];
    const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t o = k.dim(1), kh = k.dim(2), kw = k.dim(3);
    const std::size_t oh = out.dim(2), ow = out.dim(3);
    const ConvGeometry g{o, oh, ow, kh, kw, stride, padding, h, w};
    const std::size_t positions = h * w, patch = o * kh * kw;
    std::vector<Real> col(patch * positions);
    ConstMapMat<Real> km(k.data().data(), ci, patch);
    for (std::size_t i = 0; i < n; ++i) {
      im2col(gout.data().data() + i * o * oh * ow, g, col.data());
      ConstMapMat<Real> cm(col.data(), patch, positions);
      if (grads[0]) {
        MapMat<Real> dx(grads[0]->data().data() + i * ci * positions, ci, positions);
        dx.noalias() += km * cm;
      }
      if (grads[1]) {
        MapMat<Real> dk(grads[1]->data().data(), ci, patch);
        dk.noalias() += ConstMapMat<Real>(x.data().data() + i * ci * positions, ci, positions) * cm.transpose();
      }
    }
    if (grads[2]) accumulate_channel_sums(gout, *grads[2]);
  };
  return input.tape().record("transposed_conv2d", {input, kernel, bias}, std::move(fwd), std::move(bwd));
}

template <class Real>
Var<Real> maxpool2d(Var<Real> input, Extent2 window, Extent2 stride) {
  using T = BasicTensor<Real>;
  auto argmax = std::make_shared<std::vector<std::uint32_t>>();
  auto fwd = [window, stride, argmax](const typename Tape<Real>::Inputs& in) {
    return kernels::maxpool2d(*in[0], window, stride, argmax.get());
  };
  auto bwd = [argmax](const typename Tape<Real>::Inputs&, const T&, const T& gout, std::vector<T*>& grads) {
    if (!grads[0]) return;
    auto dst = grads[0]->data();
    for (std::size_t k = 0; k < gout.size(); ++k) dst[(*argmax)[k]] += gout[k];
  };
  return input.tape().record("maxpool2d", {input}, std::move(fwd), std::move(bwd));
}

template <class Real>
Var<Real> relu(Var<Real> x) {
  using T = BasicTensor<Real>;
  auto fwd = [](const typename Tape<Real>::Inputs& in) {
    T out = *in[0];
    for (auto& v : out.data()) v = v > Real{0} ? v : Real{0};
    return out;
  };
  auto bwd = [](const typename Tape<Real>::Inputs& in, const T&, const T& gout, std::vector<T*>& grads) {
    if (!grads[0]) return;
    auto dst = grads[0]->data();
    auto src = in[0]->data();
    for (std::size_t k = 0; k < dst.size(); ++k)
      if (src[k] > Real{0}) dst[k] += gout[k];
  };
  return x.tape().record("relu", {x}, std::move(fwd), std::move(bwd));
}

template <class Real>
Var<Real> sigmoid(Var<Real> x) {
  using T = BasicTensor<Real>;
  auto fwd = [](const typename Tape<Real>::Inputs& in) {
    T out = *in[0];
    for (auto& v : out.data()) v = kernels::sigmoid(v);
    return out;
  };
  auto bwd = [](const typename Tape<Real>::Inputs&, const T& out, const T& gout, std::vector<T*>& grads) {
    if (!grads[0]) return;
    auto dst = grads[0]->data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += gout[k] * out[k] * (Real{1} - out[k]);
  };
  return x.tape().record("sigmoid", {x}, std::move(fwd), std::move(bwd));
}

template <class Real>
Var<Real> linear(Var<Real> x, Var<Real> weight, Var<Real> bias) {
  using T = BasicTensor<Real>;
  auto fwd = [](const typename Tape<Real>::Inputs& in) { return kernels::linear(*in[0], *in[1], *in[2]); };
  auto bwd = [](const typename Tape<Real>::Inputs& in, const T&, const T& gout, std::vector<T*>& grads) {
    const std::size_t n = in[0]->dim(0), f = in[0]->dim(1), g = in[1]->dim(1);
    ConstMapMat<Real> gm(gout.data().data(), n, g);
    if (grads[0]) {
      MapMat<Real>(grads[0]->data().data(), n, f).noalias() +=
          gm * ConstMapMat<Real>(in[1]->data().data(), f, g).transpose();
    }
    if (grads[1]) {
      MapMat<Real>(grads[1]->data().data(), f, g).noalias() +=
          ConstMapMat<Real>(in[0]->data().data(), n, f).transpose() * gm;
    }
    if (grads[2]) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < g; ++j) (*grads[2])[j] += gout[i * g + j];
    }
  };
  return x.tape().record("linear", {x, weight, bias}, std::move(fwd), std::move(bwd));
}

template <class Real>
Var<Real> concat(Var<Real> a, Var<Real> b, std::size_t axis) {
  using T = BasicTensor<Real>;
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != sb.size() || axis >= sa.size()) {
    throw ShapeError("concat: cannot join " + dims(sa) + " and " + dims(sb) + " on axis " + std::to_string(axis));
  }
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (i != axis && sa[i] != sb[i]) {
      throw ShapeError("concat: extents differ on axis " + std::to_string(i) + ": " + dims(sa) + " vs " + dims(sb));
    }
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= sa[i];
  for (std::size_t i = axis + 1; i < sa.size(); ++i) inner *= sa[i];
  const std::size_t block_a = sa[axis] * inner, block_b = sb[axis] * inner;
  Shape so = sa;
  so[axis] += sb[axis];

  auto fwd = [=](const typename Tape<Real>::Inputs& in) {
    T out(so);
    Real* dst = out.data().data();
    const Real* pa = in[0]->data().data();
    const Real* pb = in[1]->data().data();
    for (std::size_t i = 0; i < outer; ++i) {
      dst = std::copy(pa + i * block_a, pa + (i + 1) * block_a, dst);
      dst = std::copy(pb + i * block_b, pb + (i + 1) * block_b, dst);
    }
    return out;
  };
  auto bwd = [=](const typename Tape<Real>::Inputs&, const T&, const T& gout, std::vector<T*>& grads) {
    const Real* src = gout.data().data();
    for (std::size_t i = 0; i < outer; ++i) {
      if (grads[0]) {
        Real* d = grads[0]->data().data() + i * block_a;
        for (std::size_t k = 0; k < block_a; ++k) d[k] += src[k];
      }
      src += block_a;
      if (grads[1]) {
        Real* d = grads[1]->data().data() + i * block_b;
        for (std::size_t k = 0; k < block_b; ++k) d[k] += src[k];
      }
      src += block_b;
    }
  };
  return a.tape().record("concat", {a, b}, std::move(fwd), std::move(bwd));
}

template <class Real>
Var<Real> reshape(Var<Real> x, Shape shape) {
  using T = BasicTensor<Real>;
  if (shape_size(shape) != x.value().size()) {
    throw ShapeError("reshape: cannot view " + dims(x.shape()) + " as " + dims(shape));
  }
  auto fwd = [shape](const typename Tape<Real>::Inputs& in) { return in[0]->reshaped(shape); };
  auto bwd = [](const typename Tape<Real>::Inputs&, const T&, const T& gout, std::vector<T*>& grads) {
    if (!grads[0]) return;
    auto dst = grads[0]->data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += gout[k];
  };
  return x.tape().record("reshape", {x}, std::move(fwd), std::move(bwd));
}

template <class Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
  using T = BasicTensor<Real>;
  require_same(a.shape(), b.shape(), "mul");
  auto fwd = [](const typename Tape<Real>::Inputs& in) {
    T out = *in[0];
    auto o = out.data();
    auto q = in[1]->data();
    for (std::size_t k = 0; k < o.size(); ++k) o[k] *= q[k];
    return out;
  };
  auto bwd = [](const typename Tape<Real>::Inputs& in, const T&, const T& gout, std::vector<T*>& grads) {
    for (int side = 0; side < 2; ++side) {
      if (!grads[side]) continue;
      auto dst = grads[side]->data();
      auto other = in[1 - side]->data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += gout[k] * other[k];
    }
  };
  return a.tape().record("mul", {a, b}, std::move(fwd), std::move(bwd));
}

template <class Real>
Var<Real> pointwise_mul(Var<Real> features, Var<Real> gate) {
  using T = BasicTensor<Real>;
  const Shape& fs = features.shape();
  const Shape& gs = gate.shape();
  require_rank(fs, 4, "pointwise_mul", "features");
  const Shape per_sample(fs.begin() + 1, fs.end());
  const bool shared = gs == per_sample;
  if (!shared && gs != fs) {
    throw ShapeError("pointwise_mul: gate shape " + dims(gs) + " matches neither per-sample features " +
                     dims(per_sample) + " nor batch " + dims(fs));
  }
  const std::size_t plane = shape_size(per_sample);
  auto fwd = [shared, plane](const typename Tape<Real>::Inputs& in) {
    T out = *in[0];
    auto o = out.data();
    auto g = in[1]->data();
    for (std::size_t k = 0; k < o.size(); ++k) o[k] *= g[shared ? k % plane : k];
    return out;
  };
  auto bwd = [shared, plane](const typename Tape<Real>::Inputs& in, const T&, const T& gout,
                             std::vector<T*>& grads) {
    auto f = in[0]->data();
    auto g = in[1]->data();
    if (grads[0]) {
      auto d = grads[0]->data();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] += gout[k] * g[shared ? k % plane : k];
    }
    if (grads[1]) {
      auto d = grads[1]->data();
      for (std::size_t k = 0; k < f.size(); ++k) d[shared ? k % plane : k] += gout[k] * f[k];
    }
  };
  return features.tape().record("pointwise_mul", {features, gate}, std::move(fwd), std::move(bwd));
}

template <class Real>
Var<Real> broadcast_spatial(Var<Real> signal, std::size_t height, std::size_t width) {
  using T = BasicTensor<Real>;
  require_rank(signal.shape(), 2, "broadcast_spatial", "signal");
  const std::size_t n = signal.shape()[0], s = signal.shape()[1], hw = height * width;
  auto fwd = [=](const typename Tape<Real>::Inputs& in) {
    T out({n, s, height, width});
    Real* dst = out.data().data();
    for (std::size_t k = 0; k < n * s; ++k) std::fill(dst + k * hw, dst + (k + 1) * hw, (*in[0])[k]);
    return out;
  };
  auto bwd = [=](const typename Tape<Real>::Inputs&, const T&, const T& gout, std::vector<T*>& grads) {
    if (!grads[0]) return;
    for (std::size_t k = 0; k < n * s; ++k) {
      Real acc{0};
      for (std::size_t p = 0; p < hw; ++p) acc += gout[k * hw + p];
      (*grads[0])[k] += acc;
    }
  };
  return signal.tape().record("broadcast_spatial", {signal}, std::move(fwd), std::move(bwd));
}

template <class Real>
Var<Real> sum(Var<Real> x) {
  using T = BasicTensor<Real>;
  auto fwd = [](const typename Tape<Real>::Inputs& in) {
    Real acc{0};
    for (Real v : in[0]->data()) acc += v;
    return T({1}, std::vector<Real>{acc});
  };
  auto bwd = [](const typename Tape<Real>::Inputs&, const T&, const T& gout, std::vector<T*>& grads) {
    if (!grads[0]) return;
    for (auto& v : grads[0]->data()) v += gout[0];
  };
  return x.tape().record("sum", {x}, std::move(fwd), std::move(bwd));
}

template <class Real>
CrossEntropyResult<Real> softmax_cross_entropy(Var<Real> logits, std::span<const std::uint8_t> labels) {
  using T = BasicTensor<Real>;
  require_rank(logits.shape(), 2, "softmax_cross_entropy", "logits");
  const std::size_t n = logits.shape()[0], classes = logits.shape()[1];
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(n));
  }
  for (std::uint8_t l : labels) {
    if (l >= classes) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(l) + " outside [0, " +
                              std::to_string(classes - 1) + "]");
    }
  }
  std::vector<std::uint8_t> owned(labels.begin(), labels.end());

  auto probabilities = [n, classes](const T& z) {
    T p(z.shape());
    for (std::size_t i = 0; i < n; ++i) {
      const Real* row = z.data().data() + i * classes;
      const Real m = *std::max_element(row, row + classes);
      Real total{0};
      for (std::size_t j = 0; j < classes; ++j) total += std::exp(row[j] - m);
      for (std::size_t j = 0; j < classes; ++j) p[i * classes + j] = std::exp(row[j] - m) / total;
    }
    return p;
  };

  auto fwd = [owned, n, classes](const typename Tape<Real>::Inputs& in) {
    const T& z = *in[0];
    Real loss{0};
    for (std::size_t i = 0; i < n; ++i) {
      const Real* row = z.data().data() + i * classes;
      const Real m = *std::max_element(row, row + classes);
      Real total{0};
      for (std::size_t j = 0; j < classes; ++j) total += std::exp(row[j] - m);
      loss += m + std::log(total) - row[owned[i]];
    }
    return T({1}, std::vector<Real>{loss / static_cast<Real>(n)});
  };
  auto bwd = [owned, n, classes, probabilities](const typename Tape<Real>::Inputs& in, const T&, const T& gout,
                                                std::vector<T*>& grads) {
    if (!grads[0]) return;
    const T p = probabilities(*in[0]);
    const Real scale = gout[0] / static_cast<Real>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < classes; ++j) {
        const Real target = j == owned[i] ? Real{1} : Real{0};
        (*grads[0])[i * classes + j] += scale * (p[i * classes + j] - target);
      }
  };
  Var<Real> loss = logits.tape().record("softmax_cross_entropy", {logits}, std::move(fwd), std::move(bwd));
  return {loss, probabilities(logits.value())};
}

#define GATENET_INSTANTIATE_OPS(R)                                                                              \
  template BasicTensor<R> kernels::conv2d(const BasicTensor<R>&, const BasicTensor<R>&, const BasicTensor<R>&,  \
                                          Extent2, Extent2);                                                   \
  template BasicTensor<R> kernels::transposed_conv2d(const BasicTensor<R>&, const BasicTensor<R>&,              \
                                                     const BasicTensor<R>&, Extent2, Extent2);                  \
  template BasicTensor<R> kernels::maxpool2d(const BasicTensor<R>&, Extent2, Extent2,                           \
                                             std::vector<std::uint32_t>*);                                     \
  template BasicTensor<R> kernels::linear(const BasicTensor<R>&, const BasicTensor<R>&, const BasicTensor<R>&); \
  template R kernels::sigmoid(R);                                                                               \
  template Var<R> conv2d(Var<R>, Var<R>, Var<R>, Extent2, Extent2);                                             \
  template Var<R> transposed_conv2d(Var<R>, Var<R>, Var<R>, Extent2, Extent2);                                  \
  template Var<R> maxpool2d(Var<R>, Extent2, Extent2);                                                          \
  template Var<R> relu(Var<R>);                                                                                 \
  template Var<R> sigmoid(Var<R>);                                                                              \
  template Var<R> linear(Var<R>, Var<R>, Var<R>);                                                               \
  template Var<R> concat(Var<R>, Var<R>, std::size_t);                                                          \
  template Var<R> reshape(Var<R>, Shape);                                                                       \
  template Var<R> mul(Var<R>, Var<R>);                                                                          \
  template Var<R> pointwise_mul(Var<R>, Var<R>);                                                                \
  template Var<R> broadcast_spatial(Var<R>, std::size_t, std::size_t);                                          \
  template Var<R> sum(Var<R>);                                                                                  \
  template CrossEntropyResult<R> softmax_cross_entropy(Var<R>, std::span<const std::uint8_t>);

GATENET_INSTANTIATE_OPS(float)
GATENET_INSTANTIATE_OPS(double)

}  // namespace gatenet
