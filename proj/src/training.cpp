#include "gatenet/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gatenet/errors.hpp"
#include "gatenet/ops.hpp"
#include "gatenet/rng.hpp"

namespace gatenet {
namespace {

constexpr std::size_t kEvalBatch = 256;
constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t classes = logits.dim(1);
  const float* p = logits.data().data() + row * classes;
  return static_cast<std::size_t>(std::max_element(p, p + classes) - p);
}

std::size_t count_correct(const Tensor& logits, std::span<const std::uint8_t> targets) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) hits += argmax_row(logits, i) == targets[i] ? 1 : 0;
  return hits;
}

template <class LogitsFn>
double accuracy_over(const Dataset& data, LogitsFn&& logits_for) {
  if (data.empty()) throw std::invalid_argument("accuracy is undefined on an empty test set");
  std::size_t hits = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
    idx.resize(std::min(kEvalBatch, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Batch b = data.batch(idx);
    hits += count_correct(logits_for(b, std::span<const std::size_t>(idx)), b.targets);
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

void require_geometry(const CanvasGeometry& net, const Dataset& data, const char* what) {
  if (!(net == data.geometry())) {
    throw ShapeError(std::string(what) + ": network expects a " + std::to_string(net.slots) + "-slot canvas, dataset has " +
                     std::to_string(data.geometry().slots));
  }
}

/// Gate-point features of every sample of a dataset under a frozen function
/// network; they do not change during cascaded training.
class TrunkCache {
 public:
  static constexpr std::size_t kBudgetBytes = std::size_t{2} << 30;

  TrunkCache(FunctionNetwork& fn, const Dataset& data) {
    const Shape g = gate_shape(fn.geometry());
    per_sample_ = shape_size(g);
    if (data.size() * per_sample_ * sizeof(float) > kBudgetBytes) return;
    item_shape_ = g;
    values_.reserve(data.size() * per_sample_);
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
      idx.resize(std::min(kEvalBatch, data.size() - start));
      std::iota(idx.begin(), idx.end(), start);
      const Tensor f = fn.feature_map(data.batch(idx).images);
      values_.insert(values_.end(), f.values().begin(), f.values().end());
    }
  }

  bool enabled() const { return !values_.empty(); }

  Tensor gather(std::span<const std::size_t> indices) const {
    std::vector<float> out(indices.size() * per_sample_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(indices[i] * per_sample_), per_sample_,
                  out.begin() + static_cast<std::ptrdiff_t>(i * per_sample_));
    }
    Shape shape = item_shape_;
    shape.insert(shape.begin(), indices.size());
    return Tensor(std::move(shape), std::move(out));
  }

 private:
  std::size_t per_sample_ = 0;
  Shape item_shape_;
  std::vector<float> values_;
};

struct EpochStats {
  double mean_loss = 0.0;
  double accuracy = 0.0;
};

/// One shuffled pass; step(batch, indices) records, back-propagates and returns (loss, logits).
template <class StepFn>
EpochStats run_epoch(const Dataset& train, const TrainConfig& config, std::size_t epoch, StepFn&& step) {
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  SeededRng rng = SeededRng::for_stream(config.seed, kShuffleStream, epoch);
  rng.shuffle(std::span<std::size_t>(order));

  double loss_sum = 0.0;
  std::size_t hits = 0, batches = 0;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t n = std::min(config.batch_size, order.size() - start);
    const Batch b = train.batch(std::span<const std::size_t>(order).subspan(start, n));
    const auto [loss, logits] = step(b, std::span<const std::size_t>(order).subspan(start, n));
    if (!std::isfinite(loss)) {
      throw TrainingDiverged("training loss became non-finite in epoch " + std::to_string(epoch + 1));
    }
    loss_sum += loss;
    hits += count_correct(logits, b.targets);
    ++batches;
  }
  return {loss_sum / static_cast<double>(batches), static_cast<double>(hits) / static_cast<double>(train.size())};
}

}  // namespace

TrainConfig TrainConfig::protocol(Task task, std::uint64_t seed, std::size_t scale) {
  TrainConfig c;
  c.task = task;
  c.seed = seed;
  c.scale = scale;
  c.epochs = task == Task::feature2 ? 10 : task == Task::pretrain ? 3 : 5;
  return c;
}

PretrainResult pretrain(const TrainConfig& config, const Dataset& train, const Dataset& test) {
  if (train.geometry() != test.geometry()) throw ShapeError("pretrain: train and test canvases differ");
  PretrainResult result{FunctionNetwork(train.geometry(), config.seed), 0.0, 0.0, {}};
  FunctionNetwork& fn = result.net;
  fn.set_trainable(true);
  const auto params = fn.parameters();
  Adam adam(config.adam);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const EpochStats stats = run_epoch(train, config, epoch, [&](const Batch& b, std::span<const std::size_t>) {
      Tape<float> tape;
      auto logits = fn.forward(tape, tape.constant(b.images));
      auto ce = softmax_cross_entropy(logits, b.targets);
      tape.backward(ce.loss);
      adam.step(params);
      zero_grads(params);
      return std::pair<double, Tensor>(ce.loss.value()[0], logits.value());
    });
    result.loss_curve.push_back(stats.mean_loss);
    result.train_accuracy = stats.accuracy;
    if (config.on_epoch) config.on_epoch(epoch, stats.mean_loss, stats.accuracy);
  }
  fn.set_trainable(false);
  result.test_accuracy = baseline_eval(fn, test);
  return result;
}

double baseline_eval(FunctionNetwork& fn, const Dataset& test) {
  require_geometry(fn.geometry(), test, "baseline_eval");
  return accuracy_over(test, [&](const Batch& b, std::span<const std::size_t>) { return fn.logits(b.images); });
}

double evaluate(FunctionNetwork& fn, ContextNetwork& ctx, const Dataset& test) {
  require_geometry(fn.geometry(), test, "evaluate");
  return accuracy_over(test, [&](const Batch& b, std::span<const std::size_t>) {
    Tape<float> tape;
    return dual_forward(fn, ctx, tape, tape.constant(b.images), tape.constant(b.signals)).value();
  });
}

double evaluate_with_gate(FunctionNetwork& fn, const Dataset& test, const GateProvider& gate) {
  require_geometry(fn.geometry(), test, "evaluate_with_gate");
  return accuracy_over(test, [&](const Batch& b, std::span<const std::size_t> idx) {
    const Tensor g = gate(b, idx);
    return fn.logits(b.images, &g);
  });
}

namespace {

void require_frozen(const FunctionNetwork& fn) {
  for (const Parameter* p : fn.parameters()) {
    if (p->trainable) {
      throw FreezeViolation("function network parameter '" + p->name + "' is trainable; cascaded training requires a frozen classifier");
    }
  }
}

RunResult cascaded(FunctionNetwork& fn, ContextNetwork& ctx, const Dataset& train, const Dataset& test,
                   const TrainConfig& config, const TrunkCache& cache) {
  RunResult result;
  result.seed = config.seed;
  result.initial_dual_accuracy = evaluate(fn, ctx, test);
  const auto params = parameters(ctx);
  Adam adam(config.adam);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const EpochStats stats = run_epoch(train, config, epoch, [&](const Batch& b, std::span<const std::size_t> idx) {
      Tape<float> tape;
      auto images = tape.constant(b.images);
      auto gate = context_gate(ctx, tape, images, tape.constant(b.signals));
      auto feats = cache.enabled() ? tape.constant(cache.gather(idx)) : fn.features(tape, images);
      auto logits = fn.gated_head(tape, feats, gate);
      auto ce = softmax_cross_entropy(logits, b.targets);
      tape.backward(ce.loss);
      adam.step(params);
      zero_grads(params);
      return std::pair<double, Tensor>(ce.loss.value()[0], logits.value());
    });
    result.loss_curve.push_back(stats.mean_loss);
    if (config.on_epoch) config.on_epoch(epoch, stats.mean_loss, stats.accuracy);
    if (epoch == 0 && stats.accuracy < config.min_first_epoch_accuracy) {
      throw TrainingDiverged("training accuracy " + std::to_string(stats.accuracy) + " after the first epoch is below " +
                             std::to_string(config.min_first_epoch_accuracy));
    }
  }
  result.dual_accuracy = evaluate(fn, ctx, test);
  result.baseline_accuracy = baseline_eval(fn, test);
  return result;
}

void require_cascade_inputs(FunctionNetwork& fn, const ContextNetwork& ctx, const Dataset& train) {
  require_frozen(fn);
  require_geometry(fn.geometry(), train, "train_cascaded");
  require_geometry(geometry(ctx), train, "train_cascaded");
}

}  // namespace

RunResult train_cascaded(FunctionNetwork& fn, ContextNetwork& ctx, const Dataset& train, const Dataset& test,
                         const TrainConfig& config) {
  require_cascade_inputs(fn, ctx, train);
  return cascaded(fn, ctx, train, test, config, TrunkCache(fn, train));
}

std::vector<RunResult> run_protocol(FunctionNetwork& fn, const Dataset& train, const Dataset& test,
                                    const TrainConfig& config, std::size_t runs, std::vector<ContextNetwork>* trained) {
  require_frozen(fn);
  require_geometry(fn.geometry(), train, "run_protocol");
  const TrunkCache cache(fn, train);
  std::vector<RunResult> results;
  for (std::size_t i = 0; i < runs; ++i) {
    TrainConfig run_config = config;
    run_config.seed = config.seed + i;
    ContextNetwork ctx = make_context_network(config.task, fn.geometry(), run_config.seed);
    require_cascade_inputs(fn, ctx, train);
    results.push_back(cascaded(fn, ctx, train, test, run_config, cache));
    if (trained) trained->push_back(std::move(ctx));
  }
  return results;
}

}  // namespace gatenet
