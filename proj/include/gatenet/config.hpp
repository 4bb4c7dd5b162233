#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gatenet/compose.hpp"
#include "gatenet/training.hpp"

namespace gatenet {

enum class Profile { paper, smoke };

std::string_view profile_name(Profile profile);
Profile parse_profile(std::string_view name);

/// Everything one experiment needs. Defaults reproduce the full protocol.
struct ExperimentConfig {
  std::filesystem::path mnist_dir = "data/mnist";
  std::filesystem::path out_dir = "runs";
  Task task = Task::spatial2;
  Profile profile = Profile::paper;
  std::size_t runs = 5;
  std::uint64_t seed = 1;
  std::size_t scale = 1;
  std::optional<std::size_t> epochs;  // protocol default for the task when unset
  std::size_t pretrain_epochs = 3;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::size_t visualize_run = 0;
  std::vector<std::size_t> visualize_samples{0, 1, 2, 3};

  std::size_t slots() const { return task_slots(task); }
  std::size_t task_epochs() const;
  TrainConfig pretrain_config() const;
  TrainConfig train_config() const;

  /// Sorted-key JSON of every field (paths included).
  std::string to_json() const;
  /// Digest over the fields that influence results; paths are excluded.
  std::string digest() const;
  /// digest() without seed and run count: runs sharing it are comparable.
  std::string protocol_digest() const;
  /// Digest over the fields that influence pretraining only.
  std::string pretrain_digest() const;
};

/// Command-line values; set fields win over the config file.
struct ConfigOverrides {
  std::optional<std::filesystem::path> mnist_dir;
  std::optional<std::filesystem::path> out_dir;
  std::optional<Task> task;
  std::optional<Profile> profile;
  std::optional<std::size_t> runs;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> scale;
  std::optional<std::size_t> epochs;
};

/// Built-in profile values: smoke divides dataset sizes by 8 and runs 3 seeds.
void apply_profile(ExperimentConfig& config, Profile profile);

/// defaults, then profile (flag, else file, else paper), then file keys, then flags.
/// Unknown keys, wrong types and out-of-range values raise ConfigError.
/// base supplies the defaults (for example a build-time MNIST location).
ExperimentConfig resolve_config(const std::optional<std::string>& file_json, const ConfigOverrides& overrides,
                                ExperimentConfig base = {});

std::string read_text_file(const std::filesystem::path& path);

}  // namespace gatenet
