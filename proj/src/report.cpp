#include "gatenet/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace gatenet {

double improvement(double baseline, double dual) {
  if (baseline == 0.0) throw std::domain_error("improvement is undefined for a zero baseline");
  return (dual - baseline) / baseline;
}

Statistic summarize(const std::vector<double>& values, bool allow_single) {
  if (values.empty() || (values.size() < 2 && !allow_single)) {
    throw std::invalid_argument("standard error needs at least 2 runs, got " + std::to_string(values.size()));
  }
  const double n = static_cast<double>(values.size());
  Statistic s;
  double offset = 0.0;
  for (double v : values) offset += v - values.front();
  s.mean = values.front() + offset / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.standard_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return s;
}

ExperimentReport aggregate(Task task, const std::vector<RunResult>& runs, bool allow_single) {
  std::vector<double> base, dual, gain;
  for (const RunResult& r : runs) {
    base.push_back(r.baseline_accuracy);
    dual.push_back(r.dual_accuracy);
    gain.push_back(improvement(r.baseline_accuracy, r.dual_accuracy));
  }
  ExperimentReport report;
  report.task = task;
  report.n_runs = runs.size();
  report.baseline = summarize(base, allow_single);
  report.dual = summarize(dual, allow_single);
  report.improvement = summarize(gain, allow_single);
  report.runs = runs;
  report.single_run = runs.size() == 1;
  return report;
}

std::string format_percent(double fraction) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f%%", fraction * 100.0);
  return buf;
}

std::string format_standard_error(double se) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2E", se);
  return buf;
}

std::string render_table(const ExperimentReport& report) {
  auto cell = [&](const Statistic& s) {
    return report.single_run ? format_percent(s.mean) : format_percent(s.mean) + " (" + format_standard_error(s.standard_error) + ")";
  };
  char line[160];
  std::ostringstream out;
  out << "task: " << task_name(report.task) << "\n";
  out << "runs: " << report.n_runs << (report.single_run ? " (single run, no standard errors)" : "") << "\n";
  std::snprintf(line, sizeof line, "%-12s %s\n", "", std::string(task_name(report.task)).c_str());
  out << line;
  std::snprintf(line, sizeof line, "%-12s %s\n", "FN", cell(report.baseline).c_str());
  out << line;
  std::snprintf(line, sizeof line, "%-12s %s\n", "FN + CN", cell(report.dual).c_str());
  out << line;
  std::snprintf(line, sizeof line, "%-12s %s\n", "Improvement", cell(report.improvement).c_str());
  out << line;
  return out.str();
}

std::string render_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "task,run,seed,baseline,dual,improvement\n";
  char line[200];
  for (std::size_t i = 0; i < report.runs.size(); ++i) {
    const RunResult& r = report.runs[i];
    std::snprintf(line, sizeof line, "%s,%zu,%llu,%.6f,%.6f,%.6f\n", std::string(task_name(report.task)).c_str(), i,
                  static_cast<unsigned long long>(r.seed), r.baseline_accuracy, r.dual_accuracy,
                  improvement(r.baseline_accuracy, r.dual_accuracy));
    out << line;
  }
  return out.str();
}

AcceptanceBand acceptance_band(Task task, bool full_protocol) {
  AcceptanceBand b;
  switch (task) {
    case Task::spatial2:
      if (full_protocol) {
        b.dual_min = 0.90, b.dual_max = 0.97;
      } else {
        b.baseline_min = 0.25, b.baseline_max = 0.55, b.dual_min = 0.85, b.min_gap = 0.35;
      }
      break;
    case Task::spatial3:
      if (full_protocol) {
        b.dual_min = 0.85, b.dual_max = 0.93;
      } else {
        b.baseline_min = 0.15, b.baseline_max = 0.40, b.dual_min = 0.78;
      }
      break;
    case Task::feature2:
      if (full_protocol) {
        b.dual_min = 0.85, b.dual_max = 0.94;
      } else {
        b.baseline_min = 0.20, b.baseline_max = 0.50, b.dual_min = 0.75;
      }
      break;
    case Task::pretrain: throw std::invalid_argument("pretraining has no acceptance band");
  }
  return b;
}

std::vector<std::string> check_band(const ExperimentReport& report, const AcceptanceBand& band) {
  std::vector<std::string> failures;
  auto range = [&](const char* what, double v, double lo, double hi) {
    if (v < lo || v > hi) {
      failures.push_back(std::string(what) + " " + format_percent(v) + " outside [" + format_percent(lo) + ", " +
                         format_percent(hi) + "]");
    }
  };
  range("baseline", report.baseline.mean, band.baseline_min, band.baseline_max);
  range("dual", report.dual.mean, band.dual_min, band.dual_max);
  const double gap = report.dual.mean - report.baseline.mean;
  if (gap < band.min_gap) {
    failures.push_back("dual - baseline gap " + format_percent(gap) + " below " + format_percent(band.min_gap));
  }
  return failures;
}

}  // namespace gatenet
