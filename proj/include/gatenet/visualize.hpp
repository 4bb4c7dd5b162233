#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gatenet/compose.hpp"
#include "gatenet/tensor.hpp"

namespace gatenet {

inline constexpr std::size_t kBlurKernelSize = 5;
inline constexpr double kBlurSigma = 0.8;

/// Normalized 1-D Gaussian taps; the 2-D kernel is their outer product.
std::vector<double> gaussian_taps(std::size_t kernel_size, double sigma);

/// Separable Gaussian over an H x W channel with replicate-edge padding.
/// Throws std::invalid_argument for sigma <= 0 or an even kernel size.
Tensor gaussian_blur(const Tensor& channel, std::size_t kernel_size = kBlurKernelSize, double sigma = kBlurSigma);

/// Bilinear resize with corner-aligned sampling: output (y, x) reads the
/// source at (y * (h - 1) / (H - 1), x * (w - 1) / (W - 1)).
/// Throws ShapeError if the target is smaller than the source on either axis.
Tensor upsample_bilinear(const Tensor& channel, std::size_t height, std::size_t width);

/// Input brightness scaled by the heatmap. Throws ShapeError on a size mismatch.
Tensor overlay(const Tensor& heatmap, const Tensor& image);

/// blur -> upsample to canvas size for one gate channel.
Tensor gate_heatmap(const Tensor& gate_channel, std::size_t height, std::size_t width);

/// Channel c of a C x H x W tensor as an H x W tensor.
Tensor channel_of(const Tensor& maps, std::size_t c);
/// Mean over the batch axis of N x C x H x W.
Tensor batch_mean(const Tensor& maps);

/// 8-bit grayscale raster, row-major.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  GrayImage crop(std::size_t y, std::size_t x, std::size_t h, std::size_t w) const;
  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Values in [0, 1] to bytes, rounding to nearest.
GrayImage to_gray(const Tensor& image);

/// Lossless, deterministic PNG (fixed compression and filter, no timestamps).
std::vector<std::uint8_t> encode_png(const GrayImage& image);
void write_png(const std::filesystem::path& path, const GrayImage& image);

enum class PanelGroup { raw, overlay };

/// Input panel on top, then a 4 x 4 grid of raw heatmaps, then a 4 x 4 grid of overlays.
struct MontageLayout {
  std::size_t panel_height;
  std::size_t panel_width;
  std::size_t gap = 2;

  static constexpr std::size_t kGrid = 4;

  std::size_t width() const;
  std::size_t height() const;
  std::size_t grid_height() const;
  std::size_t input_y() const { return gap; }
  std::size_t input_x() const { return gap; }
  std::size_t panel_y(PanelGroup group, std::size_t channel) const;
  std::size_t panel_x(std::size_t channel) const;
};

/// One panel: the heatmap of a channel, or that heatmap over the input.
Tensor render_panel(const Tensor& gate, const Tensor& image, std::size_t channel, PanelGroup group);

/// gate: 16 x Hg x Wg; image: H x W (or 1 x H x W).
GrayImage render_montage(const Tensor& gate, const Tensor& image);
/// The 4 x 4 grid of one group alone.
GrayImage render_grid(const Tensor& gate, const Tensor& image, PanelGroup group);

/// {task}_{run}_{sample}_{variant}.png
std::string montage_filename(Task task, std::size_t run, std::size_t sample, const std::string& variant);

struct ChannelSeparation {
  std::vector<double> attended_mean;
  std::vector<double> unattended_mean;

  /// Channels whose attended mean exceeds the unattended mean by more than margin.
  std::size_t count_separated(double margin = 0.0) const;
};

/// Per-channel means over the attended slot's columns versus all other columns,
/// on a C x Hg x Wg gate at canvas-slot granularity.
ChannelSeparation channel_separation(const Tensor& gate, const CanvasGeometry& geometry, std::size_t attended_slot);

/// Mean value over the columns of one slot of an H x W image at canvas resolution.
double slot_mean(const Tensor& image, const CanvasGeometry& geometry, std::size_t slot);

}  // namespace gatenet
