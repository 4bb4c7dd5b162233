#include "gatenet/config.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "gatenet/digest.hpp"
#include "gatenet/errors.hpp"

namespace gatenet {
namespace {

using nlohmann::json;

constexpr std::size_t kSmokeScale = 8;
constexpr std::size_t kSmokeRuns = 3;

json result_fields(const ExperimentConfig& c) {
  return json{{"task", std::string(task_name(c.task))},
              {"runs", c.runs},
              {"seed", c.seed},
              {"scale", c.scale},
              {"epochs", c.task_epochs()},
              {"pretrain_epochs", c.pretrain_epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate}};
}

template <class T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + j.dump());
  }
}

std::size_t positive(const json& j, const std::string& key) {
  if (!j.is_number_unsigned() || j.get<std::uint64_t>() == 0) {
    throw ConfigError("config key '" + key + "' must be a positive integer, got " + j.dump());
  }
  return j.get<std::size_t>();
}

void require_positive(std::size_t v, const char* what) {
  if (v == 0) throw ConfigError(std::string(what) + " must be positive");
}

}  // namespace

std::string_view profile_name(Profile profile) { return profile == Profile::smoke ? "smoke" : "paper"; }

Profile parse_profile(std::string_view name) {
  if (name == "paper") return Profile::paper;
  if (name == "smoke") return Profile::smoke;
  throw ConfigError("unknown profile '" + std::string(name) + "' (expected paper or smoke)");
}

std::size_t ExperimentConfig::task_epochs() const {
  return epochs.value_or(TrainConfig::protocol(task, seed, scale).epochs);
}

TrainConfig ExperimentConfig::pretrain_config() const {
  TrainConfig c = TrainConfig::protocol(Task::pretrain, seed, scale);
  c.epochs = pretrain_epochs;
  c.batch_size = batch_size;
  c.adam.lr = learning_rate;
  return c;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig c = TrainConfig::protocol(task, seed, scale);
  c.epochs = task_epochs();
  c.batch_size = batch_size;
  c.adam.lr = learning_rate;
  return c;
}

std::string ExperimentConfig::to_json() const {
  json j = result_fields(*this);
  j["profile"] = std::string(profile_name(profile));
  j["mnist_dir"] = mnist_dir.string();
  j["out_dir"] = out_dir.string();
  j["visualize_run"] = visualize_run;
  j["visualize_samples"] = visualize_samples;
  return j.dump(2);
}

std::string ExperimentConfig::digest() const { return sha256_hex(result_fields(*this).dump()); }

std::string ExperimentConfig::protocol_digest() const {
  json j = result_fields(*this);
  j.erase("seed");
  j.erase("runs");
  return sha256_hex(j.dump());
}

std::string ExperimentConfig::pretrain_digest() const {
  const json j{{"slots", slots()},
               {"seed", seed},
               {"scale", scale},
               {"pretrain_epochs", pretrain_epochs},
               {"batch_size", batch_size},
               {"learning_rate", learning_rate}};
  return sha256_hex(j.dump());
}

void apply_profile(ExperimentConfig& config, Profile profile) {
  config.profile = profile;
  if (profile == Profile::smoke) {
    config.scale = kSmokeScale;
    config.runs = kSmokeRuns;
  }
}

ExperimentConfig resolve_config(const std::optional<std::string>& file_json, const ConfigOverrides& overrides,
                                ExperimentConfig base) {
  json file = json::object();
  if (file_json) {
    try {
      file = json::parse(*file_json);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!file.is_object()) throw ConfigError("config must be a JSON object");
  }

  ExperimentConfig c = std::move(base);
  Profile profile = Profile::paper;
  if (file.contains("profile")) profile = parse_profile(get_as<std::string>(file["profile"], "profile"));
  if (overrides.profile) profile = *overrides.profile;
  apply_profile(c, profile);

  try {
    for (const auto& [key, value] : file.items()) {
      if (key == "profile") continue;
      if (key == "mnist_dir") c.mnist_dir = get_as<std::string>(value, key);
      else if (key == "out_dir") c.out_dir = get_as<std::string>(value, key);
      else if (key == "task") c.task = parse_task(get_as<std::string>(value, key));
      else if (key == "runs") c.runs = positive(value, key);
      else if (key == "seed") c.seed = get_as<std::uint64_t>(value, key);
      else if (key == "scale") c.scale = positive(value, key);
      else if (key == "epochs") c.epochs = value.is_null() ? std::nullopt : std::optional(positive(value, key));
      else if (key == "pretrain_epochs") c.pretrain_epochs = positive(value, key);
      else if (key == "batch_size") c.batch_size = positive(value, key);
      else if (key == "learning_rate") c.learning_rate = get_as<double>(value, key);
      else if (key == "visualize_run") c.visualize_run = get_as<std::size_t>(value, key);
      else if (key == "visualize_samples") c.visualize_samples = get_as<std::vector<std::size_t>>(value, key);
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const std::invalid_argument& e) {
    if (dynamic_cast<const ConfigError*>(&e)) throw;
    throw ConfigError(e.what());
  }

  if (overrides.mnist_dir) c.mnist_dir = *overrides.mnist_dir;
  if (overrides.out_dir) c.out_dir = *overrides.out_dir;
  if (overrides.task) c.task = *overrides.task;
  if (overrides.runs) c.runs = *overrides.runs;
  if (overrides.seed) c.seed = *overrides.seed;
  if (overrides.scale) c.scale = *overrides.scale;
  if (overrides.epochs) c.epochs = *overrides.epochs;

  if (c.task == Task::pretrain) throw ConfigError("task must be spatial2, spatial3 or feature2");
  require_positive(c.runs, "runs");
  require_positive(c.scale, "scale");
  require_positive(c.batch_size, "batch_size");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (c.visualize_run >= c.runs) throw ConfigError("visualize_run must be below runs");
  return c;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInput("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace gatenet
