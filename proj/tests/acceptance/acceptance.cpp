#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <random>

#include "gatenet/digest.hpp"
#include "gatenet/idx.hpp"
#include "gatenet/pipeline.hpp"
#include "gradcheck_cases.hpp"
#include "oracles.hpp"

namespace {

using namespace gatenet;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

constexpr double kGradcheckSeconds = 120.0;
constexpr std::size_t kIdentityImages = 1000;
constexpr std::size_t kIdentityBatch = 250;
constexpr double kKernelSumTolerance = 1e-6;
constexpr double kConstantTolerance = 1e-6;
constexpr std::size_t kPipelineTrials = 100;
constexpr std::size_t kUniformSamples = 10000;
constexpr double kUniformTolerance = 0.02;
constexpr double kPretrainMin = 0.88;
constexpr std::size_t kSeparatedMin = 12;
constexpr std::size_t kAuditSamples = 100;
constexpr double kImprovementTolerance = 1e-6;
constexpr double kTableBaseline = 0.3967;
constexpr double kTableDual = 0.9362;
constexpr const char* kTableImprovement = "135.97%";

enum class State { pass, fail, skipped };

struct Verdict {
  State state = State::fail;
  std::string detail;
};

Verdict fail(std::string detail) { return {State::fail, std::move(detail)}; }
Verdict verdict(bool ok, std::string detail) { return {ok ? State::pass : State::fail, std::move(detail)}; }

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void progress(const std::string& line) { std::cerr << "  " << line << '\n'; }

Verdict gradient_correctness() {
  const auto start = Clock::now();
  const auto ops = gradcheck::check_ops();
  std::size_t probes = 0;
  double worst = 0.0;
  std::string bad;
  for (const auto& r : ops) {
    probes += r.summary.probes;
    worst = std::max(worst, r.summary.worst);
    if (!gradcheck::clean(r.summary)) bad += " " + r.op;
  }
  std::string dual_bad;
  std::size_t dual_probes = 0;
  for (Task task : {Task::spatial2, Task::feature2}) {
    const gradcheck::Summary s = gradcheck::check_dual(task);
    dual_probes += s.probes;
    worst = std::max(worst, s.worst);
    if (!gradcheck::clean(s)) dual_bad += " " + std::string(task_name(task));
  }
  const double elapsed = seconds_since(start);
  const bool ok = bad.empty() && dual_bad.empty() && elapsed <= kGradcheckSeconds;
  std::string detail = std::to_string(ops.size()) + " ops, " + std::to_string(probes) + " probes; dual networks " +
                       std::to_string(dual_probes) + " probes; worst relative error " + fmt("%.2e", worst) +
                       " (limit " + fmt("%.0e", gradcheck::kTolerance) + "); " + fmt("%.1f", elapsed) + " s (limit " +
                       fmt("%.0f", kGradcheckSeconds) + " s)";
  if (!bad.empty()) detail += "; failing ops:" + bad;
  if (!dual_bad.empty()) detail += "; failing dual checks:" + dual_bad;
  return verdict(ok, detail);
}

Verdict identity_gate() {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<float> pixel(0.0f, 1.0f);
  std::size_t identical = 0, total = 0;
  for (std::size_t slots : {2u, 3u}) {
    FunctionNetwork fn(CanvasGeometry{slots}, 17 + slots);
    const Tensor ones(gate_shape(fn.geometry()), 1.0f);
    for (std::size_t done = 0; done < kIdentityImages; done += kIdentityBatch) {
      Tensor images({kIdentityBatch, 1, kDigitSide, kDigitSide * slots});
      for (float& v : images.data()) v = pixel(gen);
      const Tensor gated = fn.logits(images, &ones);
      const Tensor plain = fn.logits(images);
      for (std::size_t i = 0; i < kIdentityBatch; ++i) {
        bool same = true;
        for (std::size_t k = 0; k < 10; ++k) same = same && gated.at(i, k) == plain.at(i, k);
        identical += same ? 1 : 0;
        ++total;
      }
    }
  }
  return verdict(identical == total, std::to_string(identical) + " of " + std::to_string(total) +
                                         " random images (1000 per canvas width) give bitwise-identical logits");
}

float min_of(const Tensor& t) { return *std::min_element(t.data().begin(), t.data().end()); }
float max_of(const Tensor& t) { return *std::max_element(t.data().begin(), t.data().end()); }

struct VisualChecks {
  double kernel_sum_error = 0.0;
  double constant_error = 0.0;
  float lowest = 1.0f, highest = 0.0f;
};

VisualChecks visualization_properties() {
  VisualChecks v;
  const auto taps = gaussian_taps(kBlurKernelSize, kBlurSigma);
  double total = 0.0;
  for (double a : taps)
    for (double b : taps) total += a * b;
  v.kernel_sum_error = std::abs(total - 1.0);
  for (float level : {0.0f, 0.37f, 1.0f}) {
    for (const Tensor& out : {gaussian_blur(Tensor({14, 28}, level)), gate_heatmap(Tensor({14, 42}, level), 28, 84)}) {
      v.constant_error = std::max({v.constant_error, std::abs(double(min_of(out)) - level),
                                   std::abs(double(max_of(out)) - level)});
    }
  }
  for (std::uint64_t seed = 0; seed < kPipelineTrials; ++seed) {
    const Tensor gate = oracle::random_tensor({14, 42}, seed, 0.0, 1.0).cast<float>();
    const Tensor image = oracle::random_tensor({1, 28, 84}, seed + 1000, 0.0, 1.0).cast<float>();
    const Tensor out = overlay(gate_heatmap(gate, 28, 84), image);
    v.lowest = std::min(v.lowest, min_of(out));
    v.highest = std::max(v.highest, max_of(out));
  }
  return v;
}

/// One desk-scale (or paper-scale) experiment run through the pipeline commands.
struct Experiment {
  ExperimentConfig config;
  GenDataOutcome data;
  PretrainOutcome pretrain;
  TrainOutcome train;
  ExperimentReport report;
  VisualizeOutcome figures;
  std::map<std::string, std::string> figure_digests;
  std::map<std::string, std::string> repeat_figure_digests;
  double seconds = 0.0;
  std::string error;
};

std::map<std::string, std::string> digests_of(const std::vector<fs::path>& files) {
  std::map<std::string, std::string> out;
  for (const auto& f : files) out[f.filename().string()] = sha256_hex(read_file_bytes(f));
  return out;
}

Experiment run_experiment(Task task, Profile profile, const fs::path& out_dir, const fs::path& mnist_dir,
                          const MnistSource& mnist) {
  Experiment e;
  e.config.mnist_dir = mnist_dir;
  e.config.out_dir = out_dir / profile_name(profile);
  e.config.task = task;
  apply_profile(e.config, profile);
  const auto start = Clock::now();
  std::cerr << "[" << task_name(task) << ", " << profile_name(profile) << " profile]\n";
  try {
    fs::remove_all(experiment_paths(e.config).root);
    e.data = cmd_gen_data(e.config, progress, &mnist);
    e.pretrain = cmd_pretrain(e.config, progress);
    e.train = cmd_train(e.config, progress);
    e.report = cmd_report(e.config, progress);
    e.figures = cmd_visualize(e.config, progress);
    e.figure_digests = digests_of(e.figures.files);
    e.repeat_figure_digests = digests_of(cmd_visualize(e.config, nullptr).files);
  } catch (const std::exception& ex) {
    e.error = ex.what();
    std::cerr << "  error: " << e.error << '\n';
  }
  e.seconds = seconds_since(start);
  std::cerr << "  " << fmt("%.0f", e.seconds) << " s\n";
  return e;
}

Verdict freeze_contract(const std::vector<Experiment>& runs) {
  std::size_t frozen = 0, changed = 0, contexts = 0;
  for (const Experiment& e : runs) {
    if (!e.error.empty()) return fail(std::string(task_name(e.config.task)) + " run failed: " + e.error);
    frozen += e.train.function_digest_before == e.train.function_digest_after ? 1 : 0;
    for (std::size_t i = 0; i < e.train.trained_context_digests.size(); ++i) {
      changed += e.train.trained_context_digests[i] != e.train.initial_context_digests[i] ? 1 : 0;
      ++contexts;
    }
  }
  return verdict(frozen == runs.size() && changed == contexts && contexts > 0,
                 "function digest unchanged in " + std::to_string(frozen) + " of " + std::to_string(runs.size()) +
                     " experiments; context digest changed in " + std::to_string(changed) + " of " +
                     std::to_string(contexts) + " runs");
}

Verdict dataset_constraints(const std::vector<Experiment>& runs, const MnistSource& mnist) {
  std::size_t feature_ok = 0, feature_total = 0;
  double worst_uniform = 0.0;
  std::size_t regenerated = 0, bundles = 0;
  for (const Experiment& e : runs) {
    if (!e.error.empty()) return fail(std::string(task_name(e.config.task)) + " run failed: " + e.error);
    const ExperimentPaths paths = experiment_paths(e.config);
    const DatasetBundle stored = read_bundle(paths.data_dir, std::string(task_name(e.config.task)));
    const DatasetBundle again = gen_dataset(stored.spec, mnist);
    for (const char* key : {"content_digest", "train_digest", "test_digest"}) {
      regenerated += again.manifest.get(key) == stored.manifest.get(key) ? 1 : 0;
      ++bundles;
    }
    if (e.config.task == Task::feature2) {
      for (const Dataset* d : {&stored.train, &stored.test}) {
        for (std::size_t i = 0; i < d->size(); ++i) {
          const auto labels = d->slot_labels(i);
          feature_ok += labels.size() == 2 && digit_group(labels[0]) != digit_group(labels[1]) ? 1 : 0;
          ++feature_total;
        }
      }
    } else {
      const std::size_t k = e.config.slots();
      std::vector<std::size_t> counts(k);
      const std::size_t n = std::min(kUniformSamples, stored.train.size());
      for (std::size_t i = 0; i < n; ++i) ++counts[stored.train.signal_index(i)];
      for (std::size_t c : counts) {
        worst_uniform = std::max(worst_uniform, std::abs(double(c) / double(n) - 1.0 / double(k)));
      }
    }
  }
  const bool ok = feature_total > 0 && feature_ok == feature_total && worst_uniform <= kUniformTolerance &&
                  regenerated == bundles;
  return verdict(ok, std::to_string(feature_ok) + " of " + std::to_string(feature_total) +
                         " feature samples hold one digit per group; spatial signal marginal off uniform by at most " +
                         fmt("%.4f", worst_uniform) + " over " + std::to_string(kUniformSamples) + " samples (limit " +
                         fmt("%.2f", kUniformTolerance) + "); " + std::to_string(regenerated) + " of " +
                         std::to_string(bundles) + " manifest digests reproduced by regeneration");
}

Verdict visualization(const VisualChecks& v, const Experiment& spatial) {
  bool deterministic = spatial.error.empty() && !spatial.figure_digests.empty() &&
                       spatial.figure_digests == spatial.repeat_figure_digests;
  const bool ok = v.kernel_sum_error <= kKernelSumTolerance && v.constant_error <= kConstantTolerance &&
                  v.lowest >= 0.0f && v.highest <= 1.0f && deterministic;
  return verdict(ok, "kernel sum off by " + fmt("%.1e", v.kernel_sum_error) + " (limit " +
                         fmt("%.0e", kKernelSumTolerance) + "); constant field off by " +
                         fmt("%.1e", v.constant_error) + "; pipeline range [" + fmt("%.4f", v.lowest) + ", " +
                         fmt("%.4f", v.highest) + "] over " + std::to_string(kPipelineTrials) + " inputs; " +
                         std::to_string(spatial.figure_digests.size()) + " montage files " +
                         (deterministic ? "identical" : "NOT identical") + " across two renders");
}

Verdict pretrain_accuracy(const std::vector<Experiment>& runs) {
  bool ok = true;
  std::string detail;
  for (const Experiment& e : runs) {
    if (!detail.empty()) detail += "; ";
    detail += std::string(task_name(e.config.task)) + " canvas ";
    if (!e.error.empty()) {
      ok = false;
      detail += "failed: " + e.error;
      continue;
    }
    ok = ok && e.pretrain.test_accuracy >= kPretrainMin;
    detail += format_percent(e.pretrain.test_accuracy);
  }
  return verdict(ok, detail + " held-out single-digit accuracy (limit " + format_percent(kPretrainMin) + ")");
}

Verdict band(const Experiment& e, bool full_protocol) {
  if (!e.error.empty()) return fail("run failed: " + e.error);
  const AcceptanceBand b = acceptance_band(e.config.task, full_protocol);
  const auto failures = check_band(e.report, b);
  std::string detail = std::to_string(e.report.n_runs) + " runs: baseline " + format_percent(e.report.baseline.mean) +
                       ", dual " + format_percent(e.report.dual.mean) + " (s.e. " +
                       format_standard_error(e.report.dual.standard_error) + "), gap " +
                       fmt("%.2f", 100.0 * (e.report.dual.mean - e.report.baseline.mean)) + " points; band baseline [" +
                       format_percent(b.baseline_min) + ", " + format_percent(b.baseline_max) + "], dual [" +
                       format_percent(b.dual_min) + ", " + format_percent(b.dual_max) + "]";
  if (b.min_gap > 0.0) detail += ", gap >= " + fmt("%.0f", 100.0 * b.min_gap) + " points";
  for (const auto& f : failures) detail += "; " + f;
  return verdict(failures.empty(), detail);
}

Verdict localization(const Experiment& e) {
  if (!e.error.empty()) return fail("run failed: " + e.error);
  const std::size_t n = e.figures.separation.count_separated(0.0);
  return verdict(n >= kSeparatedMin && e.figures.audited_samples == kAuditSamples,
                 std::to_string(n) + " of " + std::to_string(e.figures.separation.attended_mean.size()) +
                     " channels brighter over the attended half, averaged over " +
                     std::to_string(e.figures.audited_samples) + " test samples (limit " +
                     std::to_string(kSeparatedMin) + "); " + std::to_string(e.figures.separation.count_separated(0.1)) +
                     " by more than 0.1");
}

Verdict improvement_formula(const std::vector<Experiment>& runs) {
  double worst = 0.0;
  std::size_t checked = 0;
  for (const Experiment& e : runs) {
    if (!e.error.empty()) continue;
    double sum = 0.0;
    for (const RunResult& r : e.report.runs) {
      const double expected = (r.dual_accuracy - r.baseline_accuracy) / r.baseline_accuracy;
      worst = std::max(worst, std::abs(improvement(r.baseline_accuracy, r.dual_accuracy) - expected));
      sum += expected;
      ++checked;
    }
    worst = std::max(worst, std::abs(e.report.improvement.mean - sum / double(e.report.runs.size())));
  }
  const std::string table = format_percent(improvement(kTableBaseline, kTableDual));
  const bool formula_ok = checked > 0 && worst <= kImprovementTolerance;
  const bool table_ok = table == kTableImprovement;
  return verdict(formula_ok && table_ok,
                 std::to_string(checked) + " per-run improvements and their means match (dual - base) / base within " +
                     fmt("%.1e", worst) + " (limit " + fmt("%.0e", kImprovementTolerance) + "); table means " +
                     format_percent(kTableBaseline) + " -> " + format_percent(kTableDual) + " give " + table +
                     ", expected " + kTableImprovement);
}

void print(int id, const std::string& title, const Verdict& v, std::size_t& failures) {
  const char* tag = v.state == State::pass ? "PASS" : v.state == State::fail ? "FAIL" : "SKIPPED";
  if (v.state == State::fail) ++failures;
  std::cout << tag << " [" << id << "] " << title << ": " << v.detail << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite for the dual-network attention system"};
  fs::path out_dir = "acceptance_runs";
  fs::path mnist_dir = GATENET_TEST_MNIST_DIR;
  bool paper = false;
  app.add_option("--out", out_dir, "directory for experiment artifacts");
  app.add_option("--mnist", mnist_dir, "directory with the four MNIST IDX files");
  app.add_flag("--paper", paper, "also run the full-size protocol for criterion 11 (hours)");
  CLI11_PARSE(app, argc, argv);

  const auto start = Clock::now();
  std::cerr << "[gradient checks]\n";
  const Verdict c1 = gradient_correctness();
  const Verdict c2 = identity_gate();
  const VisualChecks visual = visualization_properties();

  std::optional<MnistSource> mnist;
  std::string mnist_error;
  try {
    mnist = load_mnist(mnist_dir);
  } catch (const std::exception& e) {
    mnist_error = e.what();
  }

  std::vector<Experiment> desk, full;
  if (mnist) {
    for (Task task : {Task::spatial2, Task::spatial3, Task::feature2}) {
      desk.push_back(run_experiment(task, Profile::smoke, out_dir, mnist_dir, *mnist));
    }
    if (paper) {
      for (Task task : {Task::spatial2, Task::spatial3, Task::feature2}) {
        full.push_back(run_experiment(task, Profile::paper, out_dir, mnist_dir, *mnist));
      }
    }
  }

  std::size_t failures = 0;
  const Verdict no_data = fail("MNIST unavailable: " + mnist_error);
  print(1, "gradient correctness", c1, failures);
  print(2, "identity-gate equivalence", c2, failures);
  print(3, "freeze contract", mnist ? freeze_contract(desk) : no_data, failures);
  print(4, "dataset constraints", mnist ? dataset_constraints(desk, *mnist) : no_data, failures);
  print(5, "visualization pipeline", mnist ? visualization(visual, desk[0]) : no_data, failures);
  print(6, "pretrained single-digit accuracy", mnist ? pretrain_accuracy(desk) : no_data, failures);
  print(7, "spatial-2 desk scale", mnist ? band(desk[0], false) : no_data, failures);
  print(8, "spatial-3 desk scale", mnist ? band(desk[1], false) : no_data, failures);
  print(9, "feature-2 desk scale", mnist ? band(desk[2], false) : no_data, failures);
  print(10, "attention localization", mnist ? localization(desk[0]) : no_data, failures);
  if (!paper) {
    print(11, "paper-scale bands", {State::skipped, "run with --paper (hours on CPU)"}, failures);
  } else if (!mnist) {
    print(11, "paper-scale bands", no_data, failures);
  } else {
    const Verdict s2 = band(full[0], true), s3 = band(full[1], true), f2 = band(full[2], true);
    const bool ok = s2.state == State::pass && s3.state == State::pass && f2.state == State::pass;
    print(11, "paper-scale bands",
          verdict(ok, "spatial-2 " + s2.detail + " | spatial-3 " + s3.detail + " | feature-2 " + f2.detail), failures);
  }
  print(12, "improvement formula", improvement_formula(desk), failures);

  double desk_seconds = 0.0;
  for (const Experiment& e : desk) desk_seconds += e.seconds;
  std::cout << failures << " criteria failed; desk-scale pipeline " << fmt("%.0f", desk_seconds) << " s, total "
            << fmt("%.0f", seconds_since(start)) << " s\n";
  return failures == 0 ? exit_code::ok : exit_code::acceptance;
}
