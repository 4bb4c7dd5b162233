#include "gatenet/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gatenet/errors.hpp"

namespace gatenet {
namespace {

void require_2d(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw ShapeError(std::string(what) + ": expected an H x W tensor, got " + shape_str(t.shape()));
}

Tensor as_2d(const Tensor& image) {
  if (image.rank() == 3 && image.dim(0) == 1) return image.reshaped({image.dim(1), image.dim(2)});
  require_2d(image, "image");
  return image;
}

void blit(std::vector<std::uint8_t>& dst, std::size_t dst_width, const GrayImage& src, std::size_t y0, std::size_t x0) {
  for (std::size_t y = 0; y < src.height; ++y) {
    std::copy_n(src.pixels.begin() + static_cast<std::ptrdiff_t>(y * src.width), src.width,
                dst.begin() + static_cast<std::ptrdiff_t>((y0 + y) * dst_width + x0));
  }
}

constexpr std::uint8_t kBackground = 255;

}  // namespace

std::vector<double> gaussian_taps(std::size_t kernel_size, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian sigma must be positive, got " + std::to_string(sigma));
  if (kernel_size == 0 || kernel_size % 2 == 0) {
    throw std::invalid_argument("gaussian kernel size must be odd, got " + std::to_string(kernel_size));
  }
  const double half = static_cast<double>(kernel_size / 2);
  std::vector<double> taps(kernel_size);
  double total = 0.0;
  for (std::size_t i = 0; i < kernel_size; ++i) {
    const double x = static_cast<double>(i) - half;
    taps[i] = std::exp(-(x * x) / (2.0 * sigma * sigma));
    total += taps[i];
  }
  for (double& t : taps) t /= total;
  return taps;
}

Tensor gaussian_blur(const Tensor& channel, std::size_t kernel_size, double sigma) {
  require_2d(channel, "gaussian_blur");
  const auto taps = gaussian_taps(kernel_size, sigma);
  const std::size_t h = channel.dim(0), w = channel.dim(1);
  const auto r = static_cast<std::ptrdiff_t>(kernel_size / 2);
  auto clampi = [](std::ptrdiff_t v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };

  std::vector<double> rows(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -r; k <= r; ++k) {
        acc += taps[static_cast<std::size_t>(k + r)] * channel[y * w + clampi(static_cast<std::ptrdiff_t>(x) + k, w)];
      }
      rows[y * w + x] = acc;
    }
  }
  const auto [lo, hi] = std::minmax_element(channel.values().begin(), channel.values().end());
  Tensor out({h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -r; k <= r; ++k) {
        acc += taps[static_cast<std::size_t>(k + r)] * rows[clampi(static_cast<std::ptrdiff_t>(y) + k, h) * w + x];
      }
      out[y * w + x] = std::clamp(static_cast<float>(acc), *lo, *hi);
    }
  }
  return out;
}

Tensor upsample_bilinear(const Tensor& channel, std::size_t height, std::size_t width) {
  require_2d(channel, "upsample_bilinear");
  const std::size_t h = channel.dim(0), w = channel.dim(1);
  if (height < h || width < w) {
    throw ShapeError("upsample target " + std::to_string(height) + "x" + std::to_string(width) +
                     " is smaller than source " + shape_str(channel.shape()));
  }
  auto source_coord = [](std::size_t i, std::size_t in, std::size_t out) {
    return out == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
  };
  Tensor out({height, width});
  for (std::size_t y = 0; y < height; ++y) {
    const double sy = source_coord(y, h, height);
    const auto y0 = std::min(static_cast<std::size_t>(sy), h - 1);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double sx = source_coord(x, w, width);
      const auto x0 = std::min(static_cast<std::size_t>(sx), w - 1);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - static_cast<double>(x0);
      const double top = (1.0 - fx) * channel[y0 * w + x0] + fx * channel[y0 * w + x1];
      const double bottom = (1.0 - fx) * channel[y1 * w + x0] + fx * channel[y1 * w + x1];
      out[y * width + x] = static_cast<float>((1.0 - fy) * top + fy * bottom);
    }
  }
  return out;
}

Tensor overlay(const Tensor& heatmap, const Tensor& image) {
  const Tensor img = as_2d(image);
  require_2d(heatmap, "overlay");
  if (heatmap.shape() != img.shape()) {
    throw ShapeError("overlay: heatmap " + shape_str(heatmap.shape()) + " does not match image " + shape_str(img.shape()));
  }
  Tensor out(img.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = img[i] * heatmap[i];
  return out;
}

Tensor gate_heatmap(const Tensor& gate_channel, std::size_t height, std::size_t width) {
  return upsample_bilinear(gaussian_blur(gate_channel), height, width);
}

Tensor channel_of(const Tensor& maps, std::size_t c) {
  if (maps.rank() != 3) throw ShapeError("channel_of: expected C x H x W, got " + shape_str(maps.shape()));
  if (c >= maps.dim(0)) throw std::out_of_range("channel " + std::to_string(c) + " out of range");
  const std::size_t plane = maps.dim(1) * maps.dim(2);
  std::vector<float> v(maps.values().begin() + static_cast<std::ptrdiff_t>(c * plane),
                       maps.values().begin() + static_cast<std::ptrdiff_t>((c + 1) * plane));
  return Tensor({maps.dim(1), maps.dim(2)}, std::move(v));
}

Tensor batch_mean(const Tensor& maps) {
  if (maps.rank() != 4) throw ShapeError("batch_mean: expected N x C x H x W, got " + shape_str(maps.shape()));
  const std::size_t n = maps.dim(0), item = maps.size() / n;
  std::vector<double> acc(item, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < item; ++j) acc[j] += maps[i * item + j];
  }
  Tensor out({maps.dim(1), maps.dim(2), maps.dim(3)});
  for (std::size_t j = 0; j < item; ++j) out[j] = static_cast<float>(acc[j] / static_cast<double>(n));
  return out;
}

GrayImage GrayImage::crop(std::size_t y, std::size_t x, std::size_t h, std::size_t w) const {
  if (y + h > height || x + w > width) throw std::out_of_range("crop exceeds image bounds");
  GrayImage out{w, h, std::vector<std::uint8_t>(w * h)};
  for (std::size_t r = 0; r < h; ++r) {
    std::copy_n(pixels.begin() + static_cast<std::ptrdiff_t>((y + r) * width + x), w,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(r * w));
  }
  return out;
}

GrayImage to_gray(const Tensor& image) {
  const Tensor img = as_2d(image);
  GrayImage out{img.dim(1), img.dim(0), std::vector<std::uint8_t>(img.size())};
  for (std::size_t i = 0; i < img.size(); ++i) {
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img[i], 0.0f, 1.0f) * 255.0f));
  }
  return out;
}

std::size_t MontageLayout::grid_height() const { return kGrid * panel_height + (kGrid - 1) * gap; }

std::size_t MontageLayout::width() const { return kGrid * panel_width + (kGrid + 1) * gap; }

std::size_t MontageLayout::height() const { return panel_height + 2 * grid_height() + 4 * gap; }

std::size_t MontageLayout::panel_y(PanelGroup group, std::size_t channel) const {
  const std::size_t top = group == PanelGroup::raw ? 2 * gap + panel_height : 3 * gap + panel_height + grid_height();
  return top + (channel / kGrid) * (panel_height + gap);
}

std::size_t MontageLayout::panel_x(std::size_t channel) const { return gap + (channel % kGrid) * (panel_width + gap); }

Tensor render_panel(const Tensor& gate, const Tensor& image, std::size_t channel, PanelGroup group) {
  const Tensor img = as_2d(image);
  const Tensor heat = gate_heatmap(channel_of(gate, channel), img.dim(0), img.dim(1));
  return group == PanelGroup::raw ? heat : overlay(heat, img);
}

namespace {

void check_gate(const Tensor& gate) {
  const std::size_t cells = MontageLayout::kGrid * MontageLayout::kGrid;
  if (gate.rank() != 3 || gate.dim(0) != cells) {
    throw ShapeError("montage expects a " + std::to_string(cells) + " x H x W gate, got " + shape_str(gate.shape()));
  }
}

}  // namespace

GrayImage render_montage(const Tensor& gate, const Tensor& image) {
  check_gate(gate);
  const Tensor img = as_2d(image);
  const MontageLayout layout{img.dim(0), img.dim(1)};
  GrayImage out{layout.width(), layout.height(), std::vector<std::uint8_t>(layout.width() * layout.height(), kBackground)};
  blit(out.pixels, out.width, to_gray(img), layout.input_y(), layout.input_x());
  for (PanelGroup group : {PanelGroup::raw, PanelGroup::overlay}) {
    for (std::size_t c = 0; c < gate.dim(0); ++c) {
      blit(out.pixels, out.width, to_gray(render_panel(gate, img, c, group)), layout.panel_y(group, c), layout.panel_x(c));
    }
  }
  return out;
}

GrayImage render_grid(const Tensor& gate, const Tensor& image, PanelGroup group) {
  check_gate(gate);
  const Tensor img = as_2d(image);
  const MontageLayout layout{img.dim(0), img.dim(1)};
  const std::size_t top = layout.panel_y(group, 0) - layout.gap;
  return render_montage(gate, img).crop(top, 0, layout.grid_height() + 2 * layout.gap, layout.width());
}

std::string montage_filename(Task task, std::size_t run, std::size_t sample, const std::string& variant) {
  return std::string(task_name(task)) + "_" + std::to_string(run) + "_" + std::to_string(sample) + "_" + variant + ".png";
}

std::size_t ChannelSeparation::count_separated(double margin) const {
  std::size_t n = 0;
  for (std::size_t c = 0; c < attended_mean.size(); ++c) n += attended_mean[c] - unattended_mean[c] > margin ? 1 : 0;
  return n;
}

double slot_mean(const Tensor& image, const CanvasGeometry& geometry, std::size_t slot) {
  const Tensor img = as_2d(image);
  const std::size_t h = img.dim(0), w = img.dim(1);
  if (slot >= geometry.slots || w % geometry.slots != 0) throw ShapeError("slot_mean: width does not split into slots");
  const std::size_t span = w / geometry.slots;
  double acc = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = slot * span; x < (slot + 1) * span; ++x) acc += img[y * w + x];
  }
  return acc / static_cast<double>(h * span);
}

ChannelSeparation channel_separation(const Tensor& gate, const CanvasGeometry& geometry, std::size_t attended_slot) {
  if (gate.rank() != 3) throw ShapeError("channel_separation: expected C x H x W, got " + shape_str(gate.shape()));
  ChannelSeparation sep;
  for (std::size_t c = 0; c < gate.dim(0); ++c) {
    const Tensor ch = channel_of(gate, c);
    double others = 0.0;
    for (std::size_t s = 0; s < geometry.slots; ++s) {
      if (s != attended_slot) others += slot_mean(ch, geometry, s);
    }
    sep.attended_mean.push_back(slot_mean(ch, geometry, attended_slot));
    sep.unattended_mean.push_back(others / static_cast<double>(geometry.slots - 1));
  }
  return sep;
}

}  // namespace gatenet
