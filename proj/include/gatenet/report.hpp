#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gatenet/compose.hpp"
#include "gatenet/training.hpp"

namespace gatenet {

struct Statistic {
  double mean = 0.0;
  double standard_error = 0.0;  // sample std / sqrt(n); 0 for a single run
};

struct ExperimentReport {
  Task task = Task::spatial2;
  std::size_t n_runs = 0;
  Statistic baseline;
  Statistic dual;
  Statistic improvement;  // of (dual - baseline) / baseline, taken per run
  std::vector<RunResult> runs;
  bool single_run = false;
};

/// (dual - baseline) / baseline. Throws std::domain_error when baseline is 0.
double improvement(double baseline, double dual);

/// Sample mean and standard error. Needs two values unless allow_single.
Statistic summarize(const std::vector<double>& values, bool allow_single = false);

/// Throws std::invalid_argument for fewer than two runs unless allow_single.
ExperimentReport aggregate(Task task, const std::vector<RunResult>& runs, bool allow_single = false);

/// "93.62%"
std::string format_percent(double fraction);
/// "7.82E-04"
std::string format_standard_error(double se);

/// Three rows (FN, FN + CN, Improvement) in percent, standard errors in parentheses.
std::string render_table(const ExperimentReport& report);
/// Header plus one row per run: task,run,seed,baseline,dual,improvement.
std::string render_csv(const ExperimentReport& report);

/// Accuracy bands (fractions) a report must meet; unset bounds are 0 and 1.
struct AcceptanceBand {
  double baseline_min = 0.0;
  double baseline_max = 1.0;
  double dual_min = 0.0;
  double dual_max = 1.0;
  double min_gap = 0.0;  // dual mean minus baseline mean
};

/// Desk-scale bands (smoke) or full-protocol bands (paper) for a task.
AcceptanceBand acceptance_band(Task task, bool full_protocol);

/// Human-readable violations; empty when the report satisfies the band.
std::vector<std::string> check_band(const ExperimentReport& report, const AcceptanceBand& band);

}  // namespace gatenet
