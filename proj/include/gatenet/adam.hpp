#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>

#include "gatenet/tensor.hpp"

namespace gatenet {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are keyed by parameter address,
/// so parameters must not move between steps. Frozen parameters are skipped.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void step(std::span<Parameter* const> params);

  std::uint64_t steps() const { return step_; }
  const AdamOptions& options() const { return options_; }

 private:
  struct Moments {
    std::vector<double> first;
    std::vector<double> second;
  };

  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::unordered_map<const Parameter*, Moments> moments_;
};

void zero_grads(std::span<Parameter* const> params);

}  // namespace gatenet
