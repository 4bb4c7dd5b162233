#include <doctest.h>
#include <zlib.h>

#include <fstream>
#include <iterator>
#include <numeric>

#include "gatenet/compose.hpp"
#include "gatenet/errors.hpp"
#include "gatenet/idx.hpp"
#include "support.hpp"

using namespace gatenet;

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::vector<std::uint8_t> image_file(std::uint32_t count, std::uint32_t rows, std::uint32_t cols) {
  std::vector<std::uint8_t> out;
  put_be32(out, 0x00000803);
  put_be32(out, count);
  put_be32(out, rows);
  put_be32(out, cols);
  for (std::uint32_t i = 0; i < count * rows * cols; ++i) out.push_back(static_cast<std::uint8_t>(i * 7));
  return out;
}

std::vector<std::uint8_t> label_file(const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> out;
  put_be32(out, 0x00000801);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                              static_cast<std::streamsize>(bytes.size()));
}

void write_gzip(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  gzFile f = gzopen(path.string().c_str(), "wb");
  REQUIRE(f != nullptr);
  REQUIRE(gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size())) == static_cast<int>(bytes.size()));
  gzclose(f);
}

}  // namespace

TEST_SUITE("idx") {
  TEST_CASE("image header is big-endian and pixels are row-major") {
    const auto bytes = image_file(2, 3, 4);
    const auto content = parse_idx(bytes);
    const auto& img = std::get<IdxImages>(content);
    CHECK(img.count == 2);
    CHECK(img.rows == 3);
    CHECK(img.cols == 4);
    REQUIRE(img.pixels.size() == 24);
    CHECK(img.image(1)[0] == static_cast<std::uint8_t>(12 * 7));
    CHECK(img.image(1)[11] == static_cast<std::uint8_t>(23 * 7));
  }

  TEST_CASE("minimal well-formed image file") {
    const std::vector<std::uint8_t> bytes{0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 10, 20, 30, 40};
    const auto parsed = parse_idx(bytes);
    const auto& img = std::get<IdxImages>(parsed);
    CHECK(img.count == 1);
    CHECK(img.rows == 2);
    CHECK(img.cols == 2);
    CHECK(img.pixels == std::vector<std::uint8_t>{10, 20, 30, 40});
  }

  TEST_CASE("labels") {
    const auto content = parse_idx(label_file({3, 1, 4, 1, 5}));
    CHECK(std::get<IdxLabels>(content).labels == std::vector<std::uint8_t>{3, 1, 4, 1, 5});
  }

  TEST_CASE("unknown magic is rejected") {
    auto bytes = label_file({1});
    bytes[3] = 0x02;
    try {
      parse_idx(bytes);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("2050") != std::string::npos);
    }
  }

  TEST_CASE("truncated headers and payloads are rejected") {
    const auto images = image_file(2, 2, 2);
    CHECK_THROWS_AS(parse_idx(std::span(images).first(6)), FormatError);
    CHECK_THROWS_AS(parse_idx(std::span(images).first(12)), FormatError);
    try {
      parse_idx(std::span(images).first(images.size() - 1));
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      const std::string msg = e.what();
      CHECK(msg.find(std::to_string(images.size())) != std::string::npos);
      CHECK(msg.find(std::to_string(images.size() - 1)) != std::string::npos);
    }
    const auto labels = label_file({1, 2, 3});
    CHECK_THROWS_AS(parse_idx(std::span(labels).first(labels.size() - 1)), FormatError);
  }

  TEST_CASE("gzip files decode to the same content as raw files") {
    support::TempDir dir("idx");
    const auto bytes = image_file(3, 2, 5);
    write_bytes(dir.path() / "raw", bytes);
    write_gzip(dir.path() / "packed", bytes);
    CHECK(read_file_bytes(dir.path() / "raw") == bytes);
    CHECK(read_file_bytes(dir.path() / "packed") == bytes);
    CHECK(load_idx_images(dir.path() / "packed").pixels == load_idx_images(dir.path() / "raw").pixels);
  }

  TEST_CASE("corrupt gzip is a format error") {
    support::TempDir dir("idx");
    const auto bytes = label_file(std::vector<std::uint8_t>(500, 7));
    write_gzip(dir.path() / "packed", bytes);
    std::ifstream in(dir.path() / "packed", std::ios::binary);
    std::vector<std::uint8_t> packed((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    packed.resize(packed.size() / 2);
    write_bytes(dir.path() / "cut", packed);
    CHECK_THROWS_AS(read_file_bytes(dir.path() / "cut"), FormatError);
  }

  TEST_CASE("load_mnist reports the expected filenames when files are missing") {
    support::TempDir dir("idx");
    try {
      load_mnist(dir.path());
      FAIL("expected MissingInput");
    } catch (const MissingInput& e) {
      const std::string msg = e.what();
      CHECK(msg.find("train-images-idx3-ubyte") != std::string::npos);
      CHECK(msg.find("t10k-labels-idx1-ubyte") != std::string::npos);
    }
  }

  TEST_CASE("real MNIST files match their known checksums") {
    REQUIRE_MNIST();
    const auto dir = support::mnist_dir();
    const auto sum_of = [](const std::vector<std::uint8_t>& v) {
      return std::accumulate(v.begin(), v.end(), std::uint64_t{0});
    };
    const IdxImages train_images = load_idx_images(dir / "train-images-idx3-ubyte");
    const IdxLabels train_labels = load_idx_labels(dir / "train-labels-idx1-ubyte");
    const IdxImages test_images = load_idx_images(dir / "t10k-images-idx3-ubyte");
    const IdxLabels test_labels = load_idx_labels(dir / "t10k-labels-idx1-ubyte");
    CHECK(train_images.count == 60000);
    CHECK(test_images.count == 10000);
    CHECK(sum_of(train_images.pixels) == 1567298545ULL);
    CHECK(sum_of(train_labels.labels) == 267236ULL);
    CHECK(sum_of(test_images.pixels) == 264923200ULL);
    CHECK(sum_of(test_labels.labels) == 44434ULL);

    std::array<std::size_t, 10> counts{};
    for (auto l : train_labels.labels) ++counts[l];
    CHECK(counts == std::array<std::size_t, 10>{5923, 6742, 5958, 6131, 5842, 5421, 5918, 6265, 5851, 5949});

    const MnistSource& src = support::mnist();
    CHECK(src.train.size() == 60000);
    CHECK(src.test.size() == 10000);
    CHECK(src.digest.size() == 64);
    CHECK(src.train.group(0).size() == 5923 + 6742 + 5958 + 6131 + 5842);
  }
}
