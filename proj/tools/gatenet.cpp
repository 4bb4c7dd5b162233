#include <CLI11.hpp>
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <fstream>
#include <iostream>

#include "gatenet/errors.hpp"
#include "gatenet/pipeline.hpp"

#ifndef GATENET_DEFAULT_MNIST_DIR
#define GATENET_DEFAULT_MNIST_DIR "data/mnist"
#endif

namespace {

using namespace gatenet;
namespace fs = std::filesystem;

constexpr const char* kDefaultMirror = "https://ossci-datasets.s3.amazonaws.com/mnist/";
constexpr const char* kMnistFiles[] = {"train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz",
                                       "t10k-images-idx3-ubyte.gz", "t10k-labels-idx1-ubyte.gz"};

struct Flags {
  std::string config_path;
  std::string mnist_dir, out_dir, task, profile;
  std::size_t runs = 0, scale = 0, epochs = 0;
  std::uint64_t seed = 0;
};

ExperimentConfig load(const CLI::App& app, const Flags& f) {
  auto given = [&](const char* name) { return app.count(name) > 0; };
  try {
    ConfigOverrides o;
    if (given("--mnist")) o.mnist_dir = f.mnist_dir;
    if (given("--out")) o.out_dir = f.out_dir;
    if (given("--task")) o.task = parse_task(f.task);
    if (given("--profile")) o.profile = parse_profile(f.profile);
    if (given("--runs")) o.runs = f.runs;
    if (given("--seed")) o.seed = f.seed;
    if (given("--scale")) o.scale = f.scale;
    if (given("--epochs")) o.epochs = f.epochs;
    std::optional<std::string> file;
    if (given("--config")) file = read_text_file(f.config_path);
    ExperimentConfig base;
    base.mnist_dir = GATENET_DEFAULT_MNIST_DIR;
    return resolve_config(file, o, base);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void log_line(const std::string& line) { std::cerr << line << '\n'; }

int fetch(const fs::path& dir, const std::string& mirror) {
  const std::size_t scheme = mirror.find("://");
  const std::size_t path_start = mirror.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (scheme == std::string::npos || path_start == std::string::npos) {
    throw ConfigError("mirror must look like https://host/path/, got " + mirror);
  }
  httplib::Client client(mirror.substr(0, path_start));
  client.set_follow_location(true);
  fs::create_directories(dir);
  for (const char* name : kMnistFiles) {
    const std::string url_path = mirror.substr(path_start) + name;
    auto res = client.Get(url_path);
    if (!res || res->status != 200) {
      std::cerr << "download of " << mirror << name << " failed"
                << (res ? " with HTTP " + std::to_string(res->status) : ": " + httplib::to_string(res.error())) << '\n';
      return exit_code::data;
    }
    std::ofstream(dir / name, std::ios::binary | std::ios::trunc) << res->body;
    std::cerr << "wrote " << (dir / name).string() << " (" << res->body.size() << " bytes)\n";
  }
  const MnistSource src = load_mnist(dir);
  std::cerr << "MNIST digest " << src.digest << '\n';
  return exit_code::ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-network top-down attention on multi-digit MNIST canvases"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "gatenet 1.0");

  Flags f;
  app.add_option("--config", f.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--mnist", f.mnist_dir, "directory with the four MNIST IDX files");
  app.add_option("--task", f.task, "spatial2 | spatial3 | feature2");
  app.add_option("--runs", f.runs, "independent context-network runs (default 5)")->check(CLI::PositiveNumber);
  app.add_option("--seed", f.seed, "base seed; run i uses seed + i");
  app.add_option("--scale", f.scale, "divide dataset sizes by this factor")->check(CLI::PositiveNumber);
  app.add_option("--epochs", f.epochs, "override the task's epoch count")->check(CLI::PositiveNumber);
  app.add_option("--out", f.out_dir, "output directory (default runs)");
  app.add_option("--profile", f.profile, "paper | smoke");

  auto* gen = app.add_subcommand("gen-data", "compose the task and pretraining datasets");
  auto* pre = app.add_subcommand("pretrain", "train and freeze the function network");
  auto* train = app.add_subcommand("train", "cascaded training of the context networks");
  auto* eval = app.add_subcommand("eval", "re-evaluate stored networks on the test set");
  auto* vis = app.add_subcommand("visualize", "write gate montages and the channel separation audit");
  auto* report = app.add_subcommand("report", "aggregate runs into a table and CSV");
  auto* show = app.add_subcommand("show-config", "print the resolved configuration");
  auto* fetch_cmd = app.add_subcommand("fetch", "download MNIST (requires --allow-network)");

  std::vector<std::string> extra_records;
  bool check = false;
  report->add_option("--merge", extra_records, "additional runs.json files with identical provenance");
  report->add_flag("--check", check, "exit 4 when the report misses the profile's acceptance band");
  bool allow_network = false;
  std::string mirror = kDefaultMirror;
  fetch_cmd->add_flag("--allow-network", allow_network, "permit network access");
  fetch_cmd->add_option("--mirror", mirror, "base URL holding the gzipped IDX files");
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_code::ok : exit_code::config;
  }

  try {
    const ExperimentConfig config = load(app, f);
    if (*show) {
      std::cout << config.to_json() << "\ndigest " << config.digest() << '\n';
    } else if (*gen) {
      const GenDataOutcome out = cmd_gen_data(config, log_line);
      std::cout << (out.up_to_date ? "up to date" : "generated") << '\n';
    } else if (*pre) {
      const PretrainOutcome out = cmd_pretrain(config, log_line);
      std::cout << "held-out accuracy " << format_percent(out.test_accuracy) << '\n';
    } else if (*train) {
      cmd_train(config, log_line);
    } else if (*eval) {
      cmd_eval(config, log_line);
    } else if (*vis) {
      cmd_visualize(config, log_line);
    } else if (*report) {
      std::vector<fs::path> extra(extra_records.begin(), extra_records.end());
      const ExperimentReport rep = cmd_report(config, nullptr, extra);
      std::cout << render_table(rep);
      if (check) {
        const auto failures = check_band(rep, acceptance_band(config.task, config.profile == Profile::paper));
        for (const auto& failure : failures) std::cout << "FAIL " << failure << '\n';
        if (!failures.empty()) return exit_code::acceptance;
        std::cout << "PASS " << profile_name(config.profile) << " acceptance band\n";
      }
    } else if (*fetch_cmd) {
      if (!allow_network) {
        std::cerr << "fetch needs --allow-network. Without it, place train-images-idx3-ubyte, "
                     "train-labels-idx1-ubyte, t10k-images-idx3-ubyte and t10k-labels-idx1-ubyte "
                     "(raw or .gz) in "
                  << config.mnist_dir.string() << '\n';
        return exit_code::config;
      }
      return fetch(config.mnist_dir, mirror);
    }
    return exit_code::ok;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_code::config;
  } catch (const MissingInput& e) {
    std::cerr << "missing input: " << e.what() << '\n';
    return exit_code::data;
  } catch (const ProvenanceError& e) {
    std::cerr << "stale artifact: " << e.what() << '\n';
    return exit_code::data;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return exit_code::data;
  } catch (const TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return exit_code::diverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::failure;
  }
}
