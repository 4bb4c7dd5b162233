#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

namespace gatenet {

inline constexpr std::uint32_t kIdxImageMagic = 2051;  // 0x00000803
inline constexpr std::uint32_t kIdxLabelMagic = 2049;  // 0x00000801

struct IdxImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major

  std::span<const std::uint8_t> image(std::size_t i) const {
    return std::span<const std::uint8_t>(pixels).subspan(i * rows * cols, rows * cols);
  }
};

struct IdxLabels {
  std::vector<std::uint8_t> labels;
};

using IdxContent = std::variant<IdxImages, IdxLabels>;

/// Decode an IDX image (magic 2051) or label (magic 2049) container.
/// Header integers are big-endian.
IdxContent parse_idx(std::span<const std::uint8_t> bytes);

/// File contents, transparently gunzipped when the gzip magic is present.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

IdxImages load_idx_images(const std::filesystem::path& path);
IdxLabels load_idx_labels(const std::filesystem::path& path);

}  // namespace gatenet
