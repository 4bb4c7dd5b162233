#include <doctest.h>
#include <png.h>

#include <cmath>
#include <numeric>

#include "gatenet/errors.hpp"
#include "gatenet/visualize.hpp"
#include "oracles.hpp"

using namespace gatenet;

namespace {

Tensor grid(std::size_t h, std::size_t w, std::vector<float> values) { return Tensor({h, w}, std::move(values)); }

float min_of(const Tensor& t) { return *std::min_element(t.data().begin(), t.data().end()); }
float max_of(const Tensor& t) { return *std::max_element(t.data().begin(), t.data().end()); }

GrayImage decode(const std::vector<std::uint8_t>& png) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  REQUIRE(png_image_begin_read_from_memory(&image, png.data(), png.size()) != 0);
  image.format = PNG_FORMAT_GRAY;
  GrayImage out{image.width, image.height, std::vector<std::uint8_t>(PNG_IMAGE_SIZE(image))};
  REQUIRE(png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr) != 0);
  return out;
}

Tensor sample_gate(std::uint64_t seed) {
  return oracle::random_tensor({16, 14, 28}, seed, 0.0, 1.0).cast<float>();
}

}  // namespace

TEST_SUITE("visualize") {
  TEST_CASE("gaussian taps are normalized and symmetric") {
    const auto taps = gaussian_taps(5, 0.8);
    REQUIRE(taps.size() == 5);
    CHECK(std::accumulate(taps.begin(), taps.end(), 0.0) == doctest::Approx(1.0));
    CHECK(taps[0] == doctest::Approx(taps[4]));
    const double z = 1.0 + 2.0 * std::exp(-1.0 / 1.28) + 2.0 * std::exp(-4.0 / 1.28);
    CHECK(taps[2] == doctest::Approx(1.0 / z));
    CHECK(taps[1] == doctest::Approx(std::exp(-1.0 / 1.28) / z));
    CHECK_THROWS_AS(gaussian_taps(4, 0.8), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_taps(5, 0.0), std::invalid_argument);
  }

  TEST_CASE("blurring an interior impulse reproduces the outer-product kernel") {
    Tensor impulse({9, 9});
    impulse.at(4, 4) = 1.0f;
    const Tensor out = gaussian_blur(impulse);
    const auto taps = gaussian_taps(5, 0.8);
    for (std::size_t y = 0; y < 9; ++y)
      for (std::size_t x = 0; x < 9; ++x) {
        const long dy = static_cast<long>(y) - 4, dx = static_cast<long>(x) - 4;
        // Output is clamped to the input range; the impulse range is [0, 1].
        const double expected =
            std::abs(dy) <= 2 && std::abs(dx) <= 2 ? taps[static_cast<std::size_t>(dy + 2)] * taps[static_cast<std::size_t>(dx + 2)] : 0.0;
        CHECK(out.at(y, x) == doctest::Approx(expected).epsilon(1e-5));
      }
  }

  TEST_CASE("the center of a blurred 11 x 11 impulse is the kernel center weight") {
    Tensor impulse({11, 11});
    impulse.at(5, 5) = 1.0f;
    const auto taps = gaussian_taps(5, 0.8);
    CHECK(gaussian_blur(impulse).at(5, 5) == doctest::Approx(taps[2] * taps[2]).epsilon(1e-6));
  }

  TEST_CASE("blur preserves constant fields and never leaves the input range") {
    CHECK(gaussian_blur(Tensor({6, 7}, 0.3f)) == Tensor({6, 7}, 0.3f));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Tensor in = oracle::random_tensor({14, 28}, seed, 0.0, 1.0).cast<float>();
      const Tensor out = gaussian_blur(in);
      CHECK(min_of(out) >= min_of(in));
      CHECK(max_of(out) <= max_of(in));
    }
  }

  TEST_CASE("corner-aligned bilinear upsampling of a checkerboard") {
    const Tensor checker = grid(2, 2, {0, 1, 1, 0});
    const Tensor three = upsample_bilinear(checker, 3, 3);
    CHECK(three.at(0, 0) == 0.0f);
    CHECK(three.at(0, 2) == 1.0f);
    CHECK(three.at(1, 1) == doctest::Approx(0.5));
    CHECK(three.at(0, 1) == doctest::Approx(0.5));
    const Tensor four = upsample_bilinear(checker, 4, 4);
    CHECK(four.at(1, 1) == doctest::Approx(4.0 / 9.0));
    CHECK(four.at(1, 2) == doctest::Approx(5.0 / 9.0));
    CHECK(four.at(2, 1) == doctest::Approx(5.0 / 9.0));
    CHECK(four.at(2, 2) == doctest::Approx(4.0 / 9.0));
    CHECK(four.at(3, 3) == 0.0f);
  }

  TEST_CASE("upsampling to the same size is the identity and shrinking is refused") {
    const Tensor in = oracle::random_tensor({5, 7}, 3).cast<float>();
    CHECK(upsample_bilinear(in, 5, 7) == in);
    CHECK_THROWS_AS(upsample_bilinear(in, 4, 7), ShapeError);
    CHECK_THROWS_AS(upsample_bilinear(in, 5, 6), ShapeError);
  }

  TEST_CASE("a constant channel upsamples to a constant heatmap") {
    CHECK(gate_heatmap(Tensor({14, 28}, 0.37f), 28, 56) == Tensor({28, 56}, 0.37f));
  }

  TEST_CASE("blur, upsample and overlay stay in [0, 1]") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Tensor gate = oracle::random_tensor({14, 42}, seed, 0.0, 1.0).cast<float>();
      const Tensor img = oracle::random_tensor({1, 28, 84}, seed + 100, 0.0, 1.0).cast<float>();
      const Tensor out = overlay(gate_heatmap(gate, 28, 84), img);
      CHECK(min_of(out) >= 0.0f);
      CHECK(max_of(out) <= 1.0f);
    }
  }

  TEST_CASE("overlay scales brightness by the heatmap") {
    const Tensor img = oracle::random_tensor({1, 4, 6}, 4, 0.0, 1.0).cast<float>();
    const Tensor flat = img.reshaped({4, 6});
    CHECK(overlay(Tensor({4, 6}, 1.0f), img) == flat);
    CHECK(overlay(Tensor({4, 6}, 0.0f), flat) == Tensor({4, 6}, 0.0f));
    CHECK_THROWS_AS(overlay(Tensor({4, 5}, 1.0f), img), ShapeError);
  }

  TEST_CASE("montage layout places 16 panels per group on a 4 x 4 grid") {
    const MontageLayout layout{28, 56};
    CHECK(layout.width() == 4 * 56 + 5 * 2);
    CHECK(layout.grid_height() == 4 * 28 + 3 * 2);
    CHECK(layout.height() == 28 + 2 * layout.grid_height() + 8);
    CHECK(layout.panel_x(0) == 2);
    CHECK(layout.panel_x(5) == 2 + 58);
    CHECK(layout.panel_y(PanelGroup::raw, 0) == 32);
    CHECK(layout.panel_y(PanelGroup::raw, 15) == 32 + 3 * 30);
    CHECK(layout.panel_y(PanelGroup::overlay, 0) == 34 + layout.grid_height());
  }

  TEST_CASE("montage panels equal individually rendered panels") {
    const Tensor gate = sample_gate(5);
    const Tensor image = oracle::random_tensor({28, 56}, 6, 0.0, 1.0).cast<float>();
    const GrayImage montage = render_montage(gate, image);
    const MontageLayout layout{28, 56};
    CHECK(montage.crop(layout.input_y(), layout.input_x(), 28, 56) == to_gray(image));
    for (PanelGroup group : {PanelGroup::raw, PanelGroup::overlay}) {
      for (std::size_t c : {0u, 6u, 15u}) {
        CHECK(montage.crop(layout.panel_y(group, c), layout.panel_x(c), 28, 56) ==
              to_gray(render_panel(gate, image, c, group)));
      }
      const GrayImage grid_only = render_grid(gate, image, group);
      CHECK(grid_only == montage.crop(layout.panel_y(group, 0) - 2, 0, layout.grid_height() + 4, layout.width()));
    }
    CHECK(montage.at(0, 0) == 255);
    CHECK_THROWS_AS(render_montage(Tensor({8, 14, 28}), image), ShapeError);
  }

  TEST_CASE("png encoding is deterministic and lossless") {
    const GrayImage img = render_montage(sample_gate(7), oracle::random_tensor({28, 56}, 8, 0.0, 1.0).cast<float>());
    const auto a = encode_png(img);
    const auto b = encode_png(img);
    CHECK(a == b);
    CHECK(decode(a) == img);
  }

  TEST_CASE("to_gray rounds to nearest and clamps") {
    const GrayImage g = to_gray(grid(1, 4, {0.0f, 0.5f, 1.0f, 1.5f}));
    CHECK(g.pixels == std::vector<std::uint8_t>{0, 128, 255, 255});
  }

  TEST_CASE("filenames") {
    CHECK(montage_filename(Task::spatial3, 2, 7, "montage") == "spatial3_2_7_montage.png");
  }

  TEST_CASE("channel separation on a slot-aligned gate") {
    Tensor gate({16, 14, 42}, 0.2f);
    for (std::size_t c = 0; c < 16; ++c)
      for (std::size_t y = 0; y < 14; ++y)
        for (std::size_t x = 14; x < 28; ++x) gate.at(c, y, x) = c < 10 ? 0.9f : 0.25f;
    const ChannelSeparation sep = channel_separation(gate, CanvasGeometry{3}, 1);
    CHECK(sep.attended_mean[0] == doctest::Approx(0.9));
    CHECK(sep.unattended_mean[0] == doctest::Approx(0.2));
    CHECK(sep.count_separated() == 16);
    CHECK(sep.count_separated(0.1) == 10);
    CHECK(channel_separation(gate, CanvasGeometry{3}, 0).count_separated() == 0);
  }
}
