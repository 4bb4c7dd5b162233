#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gatenet/config.hpp"
#include "gatenet/report.hpp"
#include "gatenet/visualize.hpp"

namespace gatenet {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int config = 2;
inline constexpr int data = 3;
inline constexpr int acceptance = 4;
inline constexpr int diverged = 5;
}  // namespace exit_code

/// Artifact locations for one experiment: <out_dir>/<task>/...
struct ExperimentPaths {
  std::filesystem::path root;
  std::filesystem::path data_dir;
  std::filesystem::path function_checkpoint;
  std::filesystem::path pretrain_record;
  std::filesystem::path runs_record;
  std::filesystem::path report_table;
  std::filesystem::path report_csv;
  std::filesystem::path figures_dir;

  std::filesystem::path context_checkpoint(std::size_t run) const;
};

ExperimentPaths experiment_paths(const ExperimentConfig& config);

using Log = std::function<void(const std::string&)>;

/// "k=v;k=v" provenance records embedded in checkpoints.
std::map<std::string, std::string> parse_provenance(const std::string& text);
std::string format_provenance(const std::map<std::string, std::string>& fields);

struct GenDataOutcome {
  bool up_to_date = false;
  Manifest task_manifest;
  Manifest pretrain_manifest;
};

/// Writes the task and pretraining datasets; a no-op when both manifests
/// already describe this configuration and their files verify.
GenDataOutcome cmd_gen_data(const ExperimentConfig& config, const Log& log, const MnistSource* mnist = nullptr);

struct PretrainOutcome {
  double test_accuracy = 0.0;
  double train_accuracy = 0.0;
  std::vector<double> loss_curve;
  std::string checkpoint_digest;
};

PretrainOutcome cmd_pretrain(const ExperimentConfig& config, const Log& log);

struct TrainOutcome {
  std::vector<RunResult> runs;
  std::vector<std::string> context_digests;  // checkpoint payload digests
  /// In-memory parameter digests around cascaded training.
  std::string function_digest_before;
  std::string function_digest_after;
  std::vector<std::string> initial_context_digests;
  std::vector<std::string> trained_context_digests;
};

TrainOutcome cmd_train(const ExperimentConfig& config, const Log& log);

struct EvalOutcome {
  double baseline = 0.0;
  std::vector<double> dual;  // per stored context network
};

EvalOutcome cmd_eval(const ExperimentConfig& config, const Log& log);

struct VisualizeOutcome {
  std::vector<std::filesystem::path> files;
  /// Spatial tasks only: mean gate over up to 100 test samples signaling slot 0.
  ChannelSeparation separation;
  std::size_t audited_samples = 0;
  double attended_brightness = 0.0;    // mean overlay brightness over slot 0
  double unattended_brightness = 0.0;  // over the other slots
};

VisualizeOutcome cmd_visualize(const ExperimentConfig& config, const Log& log);

/// Aggregates the runs record (plus any extra records) into report files.
/// Records whose provenance differs from each other or from the current
/// artifacts are refused with ProvenanceError.
ExperimentReport cmd_report(const ExperimentConfig& config, const Log& log,
                            const std::vector<std::filesystem::path>& extra_records = {});

}  // namespace gatenet
