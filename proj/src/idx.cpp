#include "gatenet/idx.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>
#include <string>

#include "gatenet/errors.hpp"

namespace gatenet {
namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void require_bytes(std::span<const std::uint8_t> bytes, std::size_t expected, const char* what) {
  if (bytes.size() < expected) {
    throw FormatError(std::string("idx: truncated ") + what + ": expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(bytes.size()));
  }
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& compressed, const std::string& name) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw FormatError("gzip: cannot initialise decoder for " + name);
  zs.next_in = const_cast<Bytef*>(compressed.data());
  zs.avail_in = static_cast<uInt>(compressed.size());
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 20);
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FormatError("gzip: corrupt stream in " + name);
    }
    out.insert(out.end(), chunk.begin(), chunk.begin() + static_cast<std::ptrdiff_t>(chunk.size() - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw FormatError("gzip: truncated stream in " + name);
    }
  }
  inflateEnd(&zs);
  return out;
}

}  // namespace

IdxContent parse_idx(std::span<const std::uint8_t> bytes) {
  require_bytes(bytes, 8, "header");
  const std::uint32_t magic = read_be32(bytes, 0);
  const std::size_t count = read_be32(bytes, 4);
  if (magic == kIdxLabelMagic) {
    require_bytes(bytes, 8 + count, "label payload");
    IdxLabels out;
    out.labels.assign(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count));
    return out;
  }
  if (magic == kIdxImageMagic) {
    require_bytes(bytes, 16, "image header");
    IdxImages out;
    out.count = count;
    out.rows = read_be32(bytes, 8);
    out.cols = read_be32(bytes, 12);
    const std::size_t payload = count * out.rows * out.cols;
    require_bytes(bytes, 16 + payload, "image payload");
    out.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(payload));
    return out;
  }
  throw FormatError("idx: unsupported magic number " + std::to_string(magic) + " (expected 2051 for images or 2049 for labels)");
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) return gunzip(bytes, path.string());
  return bytes;
}

IdxImages load_idx_images(const std::filesystem::path& path) {
  auto content = parse_idx(read_file_bytes(path));
  if (auto* images = std::get_if<IdxImages>(&content)) return std::move(*images);
  throw FormatError(path.string() + ": expected an IDX image file, found labels");
}

IdxLabels load_idx_labels(const std::filesystem::path& path) {
  auto content = parse_idx(read_file_bytes(path));
  if (auto* labels = std::get_if<IdxLabels>(&content)) return std::move(*labels);
  throw FormatError(path.string() + ": expected an IDX label file, found images");
}

}  // namespace gatenet
