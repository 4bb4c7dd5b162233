#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gatenet/compose.hpp"
#include "gatenet/tensor.hpp"

namespace gatenet {

/// Stacked inputs for one minibatch.
struct Batch {
  Tensor images;   // N x 1 x H x W
  Tensor signals;  // N x S (absent when S == 0)
  std::vector<std::uint8_t> targets;
};

/// Materialized composites of one task, stored column-wise.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Task task, CanvasGeometry geometry, std::size_t signal_len);

  Task task() const { return task_; }
  const CanvasGeometry& geometry() const { return geometry_; }
  std::size_t signal_len() const { return signal_len_; }
  std::size_t size() const { return targets_.size(); }
  bool empty() const { return targets_.empty(); }

  void reserve(std::size_t n);
  void append(const CompositeSample& sample);
  CompositeSample sample(std::size_t i) const;
  Batch batch(std::span<const std::size_t> indices) const;

  std::uint8_t target(std::size_t i) const { return targets_[i]; }
  std::span<const std::uint8_t> slot_labels(std::size_t i) const;
  /// Pool indices per slot; empty for datasets read back from disk.
  std::span<const std::uint32_t> sources(std::size_t i) const;
  /// Index of the hot signal entry.
  std::size_t signal_index(std::size_t i) const;

  friend bool operator==(const Dataset&, const Dataset&);

 private:
  friend Dataset decode_dataset(std::span<const std::uint8_t> bytes);

  Task task_ = Task::spatial2;
  CanvasGeometry geometry_;
  std::size_t signal_len_ = 0;
  std::vector<float> images_;
  std::vector<std::uint8_t> signals_;
  std::vector<std::uint8_t> targets_;
  std::vector<std::uint8_t> slot_labels_;
  std::vector<std::uint32_t> sources_;
};

/// Packed sample file; layout documented in docs/FORMATS.md.
std::vector<std::uint8_t> encode_dataset(const Dataset& data);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);

struct DatasetSpec {
  Task task = Task::spatial2;
  std::size_t slots = 2;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  std::uint64_t seed = 0;
  std::size_t scale = 1;
};

/// Protocol sizes divided by scale: 80000/20000 for spatial tasks,
/// 160000/40000 for feature2, 60000/10000 for pretraining.
DatasetSpec default_dataset_spec(Task task, std::uint64_t seed, std::size_t scale = 1, std::size_t slots = 0);

/// Key-value text record describing a generated dataset pair.
struct Manifest {
  std::map<std::string, std::string> fields;

  std::string get(const std::string& key) const;
  std::string to_text() const;
  static Manifest parse(const std::string& text);
  static Manifest read(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;
};

struct DatasetBundle {
  DatasetSpec spec;
  Dataset train;
  Dataset test;
  Manifest manifest;
};

/// Composes the train set from the MNIST train split and the test set from
/// the test split. Each sample's randomness depends only on (seed, split, index).
DatasetBundle gen_dataset(const DatasetSpec& spec, const MnistSource& mnist);

/// Writes <stem>_train.bin, <stem>_test.bin and <stem>.manifest under dir.
void write_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir, const std::string& stem);
/// Reads a bundle back and verifies both file digests against its manifest.
DatasetBundle read_bundle(const std::filesystem::path& dir, const std::string& stem);

}  // namespace gatenet
