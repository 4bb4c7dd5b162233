#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gatenet/adam.hpp"
#include "gatenet/dataset.hpp"
#include "gatenet/networks.hpp"

namespace gatenet {

struct TrainConfig {
  Task task = Task::spatial2;
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  AdamOptions adam;
  std::uint64_t seed = 0;
  std::size_t scale = 1;
  /// Abort when the first epoch's training accuracy falls below this.
  double min_first_epoch_accuracy = 0.15;
  /// Called after every epoch with (epoch, mean loss, training accuracy).
  std::function<void(std::size_t, double, double)> on_epoch;

  /// Protocol defaults: 5 epochs for spatial tasks, 10 for feature2, 3 for pretraining.
  static TrainConfig protocol(Task task, std::uint64_t seed, std::size_t scale = 1);
};

struct PretrainResult {
  FunctionNetwork net;
  double test_accuracy = 0.0;   // held-out MNIST test digits on the canvas
  double train_accuracy = 0.0;  // running accuracy over the final epoch
  std::vector<double> loss_curve;
};

/// Trains a function network on single digits placed on the task canvas and
/// returns it with every parameter frozen.
PretrainResult pretrain(const TrainConfig& config, const Dataset& train, const Dataset& test);

/// Gateless classifier accuracy against the signaled target.
double baseline_eval(FunctionNetwork& fn, const Dataset& test);

struct RunResult {
  std::uint64_t seed = 0;
  double dual_accuracy = 0.0;
  double baseline_accuracy = 0.0;
  double initial_dual_accuracy = 0.0;  // before any context update
  std::vector<double> loss_curve;       // mean loss per epoch
};

/// Cascaded training: cross-entropy of the dual system against the signaled
/// target, propagated through the frozen function network into ctx. Only the
/// context parameters change. Throws FreezeViolation if fn is not frozen.
RunResult train_cascaded(FunctionNetwork& fn, ContextNetwork& ctx, const Dataset& train, const Dataset& test,
                         const TrainConfig& config);

/// Dual-system accuracy. Throws on an empty test set.
double evaluate(FunctionNetwork& fn, ContextNetwork& ctx, const Dataset& test);

/// Gate source for evaluate_with_gate: returns N x 16 x Hg x Wg for the given sample indices.
using GateProvider = std::function<Tensor(const Batch& batch, std::span<const std::size_t> indices)>;

double evaluate_with_gate(FunctionNetwork& fn, const Dataset& test, const GateProvider& gate);

/// Runs `runs` independent context networks; run i uses seed base_seed + i.
std::vector<RunResult> run_protocol(FunctionNetwork& fn, const Dataset& train, const Dataset& test,
                                    const TrainConfig& config, std::size_t runs,
                                    std::vector<ContextNetwork>* trained = nullptr);

}  // namespace gatenet
