#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace gatenet {

/// Reproducible random source.
///
/// Bits come from std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. The integer and floating point draws below are implemented
/// here instead of using std:: distributions (those are implementation
/// defined), so a seed gives the same draws on every platform.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for (seed, stream, index); used for counter-based
  /// per-sample randomness.
  static SeededRng for_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01();

  float uniform(float lo, float hi) {
    return lo + static_cast<float>(uniform01()) * (hi - lo);
  }

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

}  // namespace gatenet
