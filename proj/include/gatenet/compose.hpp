#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gatenet/tensor.hpp"

namespace gatenet {

inline constexpr std::size_t kDigitSide = 28;
inline constexpr std::size_t kDigitPixels = kDigitSide * kDigitSide;
inline constexpr std::uint8_t kBlankSlot = 255;

struct DigitImage {
  std::array<std::uint8_t, kDigitPixels> pixels{};
  std::uint8_t label = 0;
};

/// Digit group used by the feature task: 0 for digits 0-4, 1 for 5-9.
inline std::size_t digit_group(std::uint8_t label) { return label <= 4 ? 0 : 1; }

/// Digits of one MNIST split, indexed by group for the feature task.
class DigitPool {
 public:
  DigitPool() = default;
  explicit DigitPool(std::vector<DigitImage> digits);

  std::size_t size() const { return digits_.size(); }
  bool empty() const { return digits_.empty(); }
  const DigitImage& operator[](std::size_t i) const { return digits_[i]; }
  const std::vector<std::uint32_t>& group(std::size_t g) const { return groups_.at(g); }

 private:
  std::vector<DigitImage> digits_;
  std::array<std::vector<std::uint32_t>, 2> groups_;
};

/// Both MNIST splits plus a digest of the source files.
struct MnistSource {
  DigitPool train;
  DigitPool test;
  std::string digest;
};

/// Loads train/t10k image and label files (raw or .gz) from dir.
MnistSource load_mnist(const std::filesystem::path& dir);

enum class Task { pretrain, spatial2, spatial3, feature2 };

std::string_view task_name(Task task);
Task parse_task(std::string_view name);
/// Canvas slots used by a task (pretraining uses the geometry of its target task).
std::size_t task_slots(Task task);

/// k abutted 28x28 slots; slot i spans columns [28i, 28i + 28).
struct CanvasGeometry {
  std::size_t slots = 2;

  std::size_t height() const { return kDigitSide; }
  std::size_t width() const { return kDigitSide * slots; }
  std::size_t slot_begin(std::size_t slot) const { return kDigitSide * slot; }

  friend bool operator==(const CanvasGeometry&, const CanvasGeometry&) = default;
};

struct CompositeSample {
  Tensor image;                      // 1 x H x W, values in [0, 1]
  std::vector<float> signal;         // one-hot; empty for pretraining samples
  std::uint8_t target = 0;
  std::vector<std::uint8_t> slot_labels;  // kBlankSlot for empty slots
  std::vector<std::uint32_t> sources;     // pool index per slot, UINT32_MAX when blank
};

/// Places digits left to right; nullptr leaves a slot blank. Pixels are byte / 255.
CompositeSample place_digits(std::span<const DigitImage* const> slot_digits);

/// Spatial sample whose signal selects target_slot.
CompositeSample make_spatial_sample(std::span<const DigitImage* const> slot_digits, std::size_t target_slot);

/// Feature sample from two digits (slot order) of different groups; the
/// signal selects target_group.
CompositeSample make_feature_sample(std::span<const DigitImage* const> slot_digits, std::size_t target_group);

/// k distinct digits in slots 0..k-1 and a uniformly drawn target slot.
/// Randomness derives from (seed, stream, index) only.
CompositeSample compose_spatial(const DigitPool& pool, std::size_t k, std::uint64_t index, std::uint64_t seed,
                                std::uint64_t stream = 0);

/// One Group-1 and one Group-2 digit in random order, uniformly drawn target group.
CompositeSample compose_feature(const DigitPool& pool, std::uint64_t index, std::uint64_t seed,
                                std::uint64_t stream = 0);

/// One digit at a uniformly random slot of a k-slot canvas, other slots blank.
CompositeSample compose_pretrain(const DigitPool& pool, std::size_t k, std::uint64_t index, std::uint64_t seed,
                                 std::uint64_t stream = 0);

}  // namespace gatenet
