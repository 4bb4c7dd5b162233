#include "gatenet/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <set>
#include <utility>

#include "gatenet/checkpoint.hpp"
#include "gatenet/digest.hpp"
#include "gatenet/errors.hpp"

namespace gatenet {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kPretrainStem = "pretrain";
constexpr const char* kRunsFormat = "gatenet-runs 1";
constexpr std::size_t kAuditSamples = 100;

std::string fmt(const char* pattern, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, value);
  return buf;
}

void say(const Log& log, const std::string& line) {
  if (log) log(line);
}

std::string task_stem(const ExperimentConfig& c) { return std::string(task_name(c.task)); }

DatasetSpec task_spec(const ExperimentConfig& c) { return default_dataset_spec(c.task, c.seed, c.scale); }

DatasetSpec pretrain_spec(const ExperimentConfig& c) {
  return default_dataset_spec(Task::pretrain, c.seed, c.scale, c.slots());
}

Manifest read_manifest(const fs::path& dir, const std::string& stem, const char* producer) {
  const fs::path path = dir / (stem + ".manifest");
  if (!fs::exists(path)) throw MissingInput(path.string() + " not found; run `gatenet " + producer + "` first");
  return Manifest::read(path);
}

bool manifest_describes(const Manifest& m, const DatasetSpec& spec, const std::string& mnist_digest) {
  const std::map<std::string, std::string> expected{{"task", std::string(task_name(spec.task))},
                                                    {"slots", std::to_string(spec.slots)},
                                                    {"seed", std::to_string(spec.seed)},
                                                    {"scale", std::to_string(spec.scale)},
                                                    {"train_count", std::to_string(spec.train_count)},
                                                    {"test_count", std::to_string(spec.test_count)}};
  for (const auto& [key, value] : expected) {
    auto it = m.fields.find(key);
    if (it == m.fields.end() || it->second != value) return false;
  }
  return mnist_digest.empty() || (m.fields.count("mnist_digest") && m.fields.at("mnist_digest") == mnist_digest);
}

/// Reads a bundle and insists it was generated for this configuration.
DatasetBundle load_current_bundle(const ExperimentConfig& c, const std::string& stem, const DatasetSpec& spec) {
  const ExperimentPaths paths = experiment_paths(c);
  const Manifest m = read_manifest(paths.data_dir, stem, "gen-data");
  if (!manifest_describes(m, spec, "")) {
    throw ProvenanceError(paths.data_dir.string() + "/" + stem +
                          ".manifest was generated for a different seed, scale or task; rerun `gatenet gen-data`");
  }
  return read_bundle(paths.data_dir, stem);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json read_json(const fs::path& path, const char* producer) {
  if (!fs::exists(path)) throw MissingInput(path.string() + " not found; run `gatenet " + producer + "` first");
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

struct Upstream {
  Manifest task_manifest;
  CheckpointInfo function_info;
};

/// Verifies the chain data -> function checkpoint for this configuration.
Upstream check_function_upstream(const ExperimentConfig& c) {
  const ExperimentPaths paths = experiment_paths(c);
  Upstream up;
  up.task_manifest = read_manifest(paths.data_dir, task_stem(c), "gen-data");
  if (!manifest_describes(up.task_manifest, task_spec(c), "")) {
    throw ProvenanceError("task dataset does not match the configuration; rerun `gatenet gen-data`");
  }
  const Manifest pre = read_manifest(paths.data_dir, kPretrainStem, "gen-data");
  if (!fs::exists(paths.function_checkpoint)) {
    throw MissingInput(paths.function_checkpoint.string() + " not found; run `gatenet pretrain` first");
  }
  up.function_info = read_checkpoint_info(paths.function_checkpoint);
  const auto prov = parse_provenance(up.function_info.provenance);
  auto field = [&](const char* key) {
    auto it = prov.find(key);
    return it == prov.end() ? std::string() : it->second;
  };
  if (field("data") != pre.get("content_digest") || field("pretrain_config") != c.pretrain_digest() ||
      field("mnist") != up.task_manifest.get("mnist_digest")) {
    throw ProvenanceError("function checkpoint " + paths.function_checkpoint.string() +
                          " was trained on different data or settings; rerun `gatenet pretrain`");
  }
  return up;
}

Tensor gates_for(ContextNetwork& ctx, const Batch& batch) {
  Tape<float> tape;
  return context_gate(ctx, tape, tape.constant(batch.images), tape.constant(batch.signals)).value();
}

Tensor sample_slice(const Tensor& batched, std::size_t i) {
  Shape item(batched.shape().begin() + 1, batched.shape().end());
  const std::size_t n = shape_size(item);
  std::vector<float> v(batched.values().begin() + static_cast<std::ptrdiff_t>(i * n),
                       batched.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
  return Tensor(std::move(item), std::move(v));
}

struct RunsRecord {
  json provenance;
  std::vector<RunResult> runs;
};

RunsRecord parse_runs_record(const json& j, const fs::path& path) {
  if (j.value("format", "") != kRunsFormat) throw FormatError(path.string() + ": not a runs record");
  RunsRecord r;
  r.provenance = j.at("provenance");
  for (const json& e : j.at("runs")) {
    RunResult run;
    run.seed = e.at("seed").get<std::uint64_t>();
    run.baseline_accuracy = e.at("baseline").get<double>();
    run.dual_accuracy = e.at("dual").get<double>();
    run.initial_dual_accuracy = e.at("initial_dual").get<double>();
    run.loss_curve = e.at("loss_curve").get<std::vector<double>>();
    r.runs.push_back(std::move(run));
  }
  return r;
}

}  // namespace

fs::path ExperimentPaths::context_checkpoint(std::size_t run) const {
  return root / ("context_" + std::to_string(run) + ".ckpt");
}

ExperimentPaths experiment_paths(const ExperimentConfig& config) {
  ExperimentPaths p;
  p.root = config.out_dir / task_name(config.task);
  p.data_dir = p.root / "data";
  p.function_checkpoint = p.root / "function.ckpt";
  p.pretrain_record = p.root / "pretrain.json";
  p.runs_record = p.root / "runs.json";
  p.report_table = p.root / "report.txt";
  p.report_csv = p.root / "report.csv";
  p.figures_dir = p.root / "figures";
  return p;
}

std::map<std::string, std::string> parse_provenance(const std::string& text) {
  std::map<std::string, std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t end = std::min(text.find(';', start), text.size());
    const std::string item = text.substr(start, end - start);
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos) throw FormatError("malformed provenance entry '" + item + "'");
    out[item.substr(0, eq)] = item.substr(eq + 1);
    start = end + 1;
  }
  return out;
}

std::string format_provenance(const std::map<std::string, std::string>& fields) {
  std::string out;
  for (const auto& [k, v] : fields) out += (out.empty() ? "" : ";") + k + "=" + v;
  return out;
}

GenDataOutcome cmd_gen_data(const ExperimentConfig& config, const Log& log, const MnistSource* mnist) {
  const ExperimentPaths paths = experiment_paths(config);
  std::optional<MnistSource> loaded;
  if (!mnist) {
    loaded = load_mnist(config.mnist_dir);
    mnist = &*loaded;
  }
  const std::pair<std::string, DatasetSpec> jobs[] = {{task_stem(config), task_spec(config)},
                                                      {kPretrainStem, pretrain_spec(config)}};
  GenDataOutcome outcome;
  outcome.up_to_date = true;
  for (const auto& [stem, spec] : jobs) {
    const fs::path manifest_path = paths.data_dir / (stem + ".manifest");
    if (fs::exists(manifest_path) && manifest_describes(Manifest::read(manifest_path), spec, mnist->digest)) {
      try {
        DatasetBundle existing = read_bundle(paths.data_dir, stem);
        say(log, stem + ": up to date (" + existing.manifest.get("content_digest").substr(0, 16) + ")");
        (stem == kPretrainStem ? outcome.pretrain_manifest : outcome.task_manifest) = existing.manifest;
        continue;
      } catch (const FormatError&) {
        say(log, stem + ": stored files fail verification, regenerating");
      }
    }
    outcome.up_to_date = false;
    DatasetBundle bundle = gen_dataset(spec, *mnist);
    bundle.manifest.fields["config_digest"] = config.digest();
    write_bundle(bundle, paths.data_dir, stem);
    say(log, stem + ": wrote " + std::to_string(bundle.train.size()) + " train / " +
                 std::to_string(bundle.test.size()) + " test samples to " + paths.data_dir.string());
    (stem == kPretrainStem ? outcome.pretrain_manifest : outcome.task_manifest) =
        Manifest::read(paths.data_dir / (stem + ".manifest"));
  }
  return outcome;
}

PretrainOutcome cmd_pretrain(const ExperimentConfig& config, const Log& log) {
  const ExperimentPaths paths = experiment_paths(config);
  const DatasetBundle data = load_current_bundle(config, kPretrainStem, pretrain_spec(config));
  TrainConfig tc = config.pretrain_config();
  tc.on_epoch = [&](std::size_t epoch, double loss, double acc) {
    say(log, "pretrain epoch " + std::to_string(epoch + 1) + ": loss " + fmt("%.4f", loss) + ", train accuracy " +
                 format_percent(acc));
  };
  PretrainResult result = pretrain(tc, data.train, data.test);
  const std::string provenance = format_provenance({{"mnist", data.manifest.get("mnist_digest")},
                                                    {"data", data.manifest.get("content_digest")},
                                                    {"pretrain_config", config.pretrain_digest()},
                                                    {"config", config.digest()}});
  save_model(paths.function_checkpoint, result.net, provenance);
  PretrainOutcome out{result.test_accuracy, result.train_accuracy, result.loss_curve,
                      read_checkpoint_info(paths.function_checkpoint).digest};
  write_json(paths.pretrain_record, json{{"held_out_accuracy", out.test_accuracy},
                                         {"final_epoch_train_accuracy", out.train_accuracy},
                                         {"loss_curve", out.loss_curve},
                                         {"checkpoint_digest", out.checkpoint_digest},
                                         {"provenance", provenance}});
  say(log, "pretrain held-out accuracy " + format_percent(out.test_accuracy) + "; saved " +
               paths.function_checkpoint.string());
  return out;
}

TrainOutcome cmd_train(const ExperimentConfig& config, const Log& log) {
  const ExperimentPaths paths = experiment_paths(config);
  const Upstream up = check_function_upstream(config);
  const DatasetBundle data = load_current_bundle(config, task_stem(config), task_spec(config));
  FunctionNetwork fn = load_function_network(paths.function_checkpoint);

  TrainConfig tc = config.train_config();
  TrainOutcome out;
  json runs = json::array();
  std::size_t epochs_seen = 0;
  tc.on_epoch = [&](std::size_t epoch, double loss, double acc) {
    if (epoch == 0) say(log, "run " + std::to_string(epochs_seen / tc.epochs) + " (seed " +
                                 std::to_string(config.seed + epochs_seen / tc.epochs) + ")");
    ++epochs_seen;
    say(log, "  epoch " + std::to_string(epoch + 1) + ": loss " + fmt("%.4f", loss) + ", train accuracy " +
                 format_percent(acc));
  };
  auto digest_of = [](const std::vector<const Parameter*>& params) {
    return parameters_digest(std::span<const Parameter* const>(params));
  };
  out.function_digest_before = digest_of(std::as_const(fn).parameters());
  std::vector<ContextNetwork> trained;
  const std::vector<RunResult> results = run_protocol(fn, data.train, data.test, tc, config.runs, &trained);
  out.function_digest_after = digest_of(std::as_const(fn).parameters());
  for (std::size_t i = 0; i < results.size(); ++i) {
    const RunResult& r = results[i];
    const ContextNetwork initial = make_context_network(config.task, fn.geometry(), r.seed);
    out.initial_context_digests.push_back(digest_of(parameters(initial)));
    out.trained_context_digests.push_back(digest_of(parameters(std::as_const(trained[i]))));
    const fs::path ckpt = paths.context_checkpoint(i);
    save_model(ckpt, trained[i],
               format_provenance({{"function", up.function_info.digest},
                                  {"data", data.manifest.get("content_digest")},
                                  {"protocol", config.protocol_digest()},
                                  {"config", config.digest()},
                                  {"seed", std::to_string(r.seed)}}));
    out.context_digests.push_back(read_checkpoint_info(ckpt).digest);
    say(log, "  baseline " + format_percent(r.baseline_accuracy) + ", dual " + format_percent(r.dual_accuracy));
    runs.push_back(json{{"run", i},
                        {"seed", r.seed},
                        {"baseline", r.baseline_accuracy},
                        {"dual", r.dual_accuracy},
                        {"initial_dual", r.initial_dual_accuracy},
                        {"loss_curve", r.loss_curve},
                        {"context_digest", out.context_digests.back()}});
    out.runs.push_back(r);
  }
  write_json(paths.runs_record, json{{"format", kRunsFormat},
                                     {"task", task_stem(config)},
                                     {"config_digest", config.digest()},
                                     {"provenance",
                                      {{"mnist", up.task_manifest.get("mnist_digest")},
                                       {"dataset", data.manifest.get("content_digest")},
                                       {"function", up.function_info.digest},
                                       {"protocol", config.protocol_digest()}}},
                                     {"runs", runs}});
  return out;
}

EvalOutcome cmd_eval(const ExperimentConfig& config, const Log& log) {
  const ExperimentPaths paths = experiment_paths(config);
  const Upstream up = check_function_upstream(config);
  const DatasetBundle data = load_current_bundle(config, task_stem(config), task_spec(config));
  FunctionNetwork fn = load_function_network(paths.function_checkpoint);
  const RunsRecord record = parse_runs_record(read_json(paths.runs_record, "train"), paths.runs_record);

  EvalOutcome out;
  out.baseline = baseline_eval(fn, data.test);
  say(log, "baseline " + format_percent(out.baseline));
  for (std::size_t i = 0; i < record.runs.size(); ++i) {
    const fs::path ckpt = paths.context_checkpoint(i);
    if (!fs::exists(ckpt)) throw MissingInput(ckpt.string() + " not found; rerun `gatenet train`");
    if (parse_provenance(read_checkpoint_info(ckpt).provenance)["function"] != up.function_info.digest) {
      throw ProvenanceError(ckpt.string() + " was trained against another function network; rerun `gatenet train`");
    }
    ContextNetwork ctx = load_context_network(ckpt);
    out.dual.push_back(evaluate(fn, ctx, data.test));
    const bool same = out.dual.back() == record.runs[i].dual_accuracy;
    say(log, "run " + std::to_string(i) + ": dual " + format_percent(out.dual.back()) +
                 (same ? " (matches record)" : " (differs from record " + format_percent(record.runs[i].dual_accuracy) + ")"));
  }
  return out;
}

VisualizeOutcome cmd_visualize(const ExperimentConfig& config, const Log& log) {
  const ExperimentPaths paths = experiment_paths(config);
  check_function_upstream(config);
  const DatasetBundle data = load_current_bundle(config, task_stem(config), task_spec(config));
  const fs::path ckpt = paths.context_checkpoint(config.visualize_run);
  if (!fs::exists(ckpt)) throw MissingInput(ckpt.string() + " not found; run `gatenet train` first");
  ContextNetwork ctx = load_context_network(ckpt);
  fs::create_directories(paths.figures_dir);

  VisualizeOutcome out;
  for (std::size_t s : config.visualize_samples) {
    if (s >= data.test.size()) {
      throw ConfigError("visualize sample " + std::to_string(s) + " is outside the test set of " +
                        std::to_string(data.test.size()));
    }
    const std::size_t idx[] = {s};
    const Batch b = data.test.batch(idx);
    const Tensor gate = sample_slice(gates_for(ctx, b), 0);
    const Tensor image = sample_slice(b.images, 0);
    const std::pair<const char*, GrayImage> variants[] = {{"montage", render_montage(gate, image)},
                                                          {"raw", render_grid(gate, image, PanelGroup::raw)},
                                                          {"overlay", render_grid(gate, image, PanelGroup::overlay)}};
    for (const auto& [variant, picture] : variants) {
      const fs::path file = paths.figures_dir / montage_filename(config.task, config.visualize_run, s, variant);
      write_png(file, picture);
      out.files.push_back(file);
    }
  }
  say(log, "wrote " + std::to_string(out.files.size()) + " images to " + paths.figures_dir.string());

  if (config.task == Task::feature2) return out;
  std::vector<std::size_t> attended;
  for (std::size_t i = 0; i < data.test.size() && attended.size() < kAuditSamples; ++i) {
    if (data.test.signal_index(i) == 0) attended.push_back(i);
  }
  const Batch b = data.test.batch(attended);
  const Tensor gates = gates_for(ctx, b);
  const CanvasGeometry& geom = data.test.geometry();
  out.audited_samples = attended.size();
  out.separation = channel_separation(batch_mean(gates), geom, 0);
  double lit = 0.0, dim = 0.0;
  for (std::size_t i = 0; i < attended.size(); ++i) {
    const Tensor gate = sample_slice(gates, i), image = sample_slice(b.images, i);
    for (std::size_t c = 0; c < gate.dim(0); ++c) {
      const Tensor o = render_panel(gate, image, c, PanelGroup::overlay);
      lit += slot_mean(o, geom, 0);
      for (std::size_t slot = 1; slot < geom.slots; ++slot) dim += slot_mean(o, geom, slot) / double(geom.slots - 1);
    }
  }
  const double count = static_cast<double>(attended.size() * gates.dim(1));
  out.attended_brightness = lit / count;
  out.unattended_brightness = dim / count;
  std::ofstream audit(paths.figures_dir / "separation.txt", std::ios::trunc);
  audit << "samples signaling slot 0: " << out.audited_samples << "\n"
        << "channels with attended mean > unattended mean: " << out.separation.count_separated(0.0) << " of "
        << out.separation.attended_mean.size() << "\n"
        << "channels separated by more than 0.1: " << out.separation.count_separated(0.1) << "\n"
        << "mean overlay brightness attended/unattended: " << fmt("%.4f", out.attended_brightness) << " / "
        << fmt("%.4f", out.unattended_brightness) << "\n";
  say(log, "channels separated: " + std::to_string(out.separation.count_separated(0.0)) + " of " +
               std::to_string(out.separation.attended_mean.size()) + " (" +
               std::to_string(out.separation.count_separated(0.1)) + " by more than 0.1)");
  return out;
}

ExperimentReport cmd_report(const ExperimentConfig& config, const Log& log, const std::vector<fs::path>& extra_records) {
  const ExperimentPaths paths = experiment_paths(config);
  const Upstream up = check_function_upstream(config);
  const json expected{{"mnist", up.task_manifest.get("mnist_digest")},
                      {"dataset", up.task_manifest.get("content_digest")},
                      {"function", up.function_info.digest},
                      {"protocol", config.protocol_digest()}};
  std::vector<fs::path> sources{paths.runs_record};
  sources.insert(sources.end(), extra_records.begin(), extra_records.end());
  std::vector<RunResult> runs;
  std::set<std::uint64_t> seeds;
  for (const fs::path& src : sources) {
    RunsRecord record = parse_runs_record(read_json(src, "train"), src);
    if (record.provenance != expected) {
      throw ProvenanceError(src.string() + " comes from different data, function network or protocol than " +
                            "the current artifacts; refusing to mix provenance (rerun `gatenet train`)");
    }
    for (RunResult& r : record.runs) {
      if (!seeds.insert(r.seed).second) throw ProvenanceError("seed " + std::to_string(r.seed) + " appears twice");
      runs.push_back(std::move(r));
    }
  }
  const ExperimentReport report = aggregate(config.task, runs, runs.size() == 1);
  std::string table = render_table(report);
  table += "provenance: mnist=" + expected["mnist"].get<std::string>().substr(0, 16) +
           " dataset=" + expected["dataset"].get<std::string>().substr(0, 16) +
           " function=" + expected["function"].get<std::string>().substr(0, 16) +
           " config=" + config.digest().substr(0, 16) + "\n";
  std::ofstream(paths.report_table, std::ios::trunc) << table;
  std::ofstream(paths.report_csv, std::ios::trunc) << render_csv(report);
  say(log, table);
  return report;
}

}  // namespace gatenet
