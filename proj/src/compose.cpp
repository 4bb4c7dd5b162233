#include "gatenet/compose.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "gatenet/digest.hpp"
#include "gatenet/errors.hpp"
#include "gatenet/idx.hpp"
#include "gatenet/rng.hpp"

namespace gatenet {
namespace {

constexpr std::uint32_t kNoSource = std::numeric_limits<std::uint32_t>::max();

std::filesystem::path find_mnist_file(const std::filesystem::path& dir, const std::string& stem) {
  for (const std::string& name : {stem, stem + ".gz"}) {
    if (std::filesystem::exists(dir / name)) return dir / name;
  }
  throw MissingInput("MNIST file " + (dir / stem).string() + "[.gz] not found; expected " +
                           "train-images-idx3-ubyte, train-labels-idx1-ubyte, t10k-images-idx3-ubyte, " +
                           "t10k-labels-idx1-ubyte (optionally gzipped) in " + dir.string());
}

std::vector<DigitImage> load_split(const std::filesystem::path& dir, const std::string& prefix, Sha256& hash) {
  const auto image_path = find_mnist_file(dir, prefix + "-images-idx3-ubyte");
  const auto label_path = find_mnist_file(dir, prefix + "-labels-idx1-ubyte");
  const auto image_bytes = read_file_bytes(image_path);
  const auto label_bytes = read_file_bytes(label_path);
  hash.update(image_bytes).update(label_bytes);

  IdxContent image_content = parse_idx(image_bytes);
  IdxContent label_content = parse_idx(label_bytes);
  const auto* img = std::get_if<IdxImages>(&image_content);
  const auto* lab = std::get_if<IdxLabels>(&label_content);
  if (!img) throw FormatError(image_path.string() + ": not an IDX image file");
  if (!lab) throw FormatError(label_path.string() + ": not an IDX label file");
  if (img->rows != kDigitSide || img->cols != kDigitSide) {
    throw FormatError(image_path.string() + ": expected 28x28 digits, got " + std::to_string(img->rows) + "x" +
                      std::to_string(img->cols));
  }
  if (img->count != lab->labels.size()) {
    throw FormatError(prefix + ": " + std::to_string(img->count) + " images but " +
                      std::to_string(lab->labels.size()) + " labels");
  }
  std::vector<DigitImage> digits(img->count);
  for (std::size_t i = 0; i < img->count; ++i) {
    auto px = img->image(i);
    std::copy(px.begin(), px.end(), digits[i].pixels.begin());
    digits[i].label = lab->labels[i];
    if (digits[i].label > 9) {
      throw FormatError(label_path.string() + ": label " + std::to_string(digits[i].label) + " at index " +
                        std::to_string(i) + " outside [0, 9]");
    }
  }
  return digits;
}

}  // namespace

DigitPool::DigitPool(std::vector<DigitImage> digits) : digits_(std::move(digits)) {
  for (std::size_t i = 0; i < digits_.size(); ++i) {
    if (digits_[i].label > 9) throw std::invalid_argument("digit label outside [0, 9]");
    groups_[digit_group(digits_[i].label)].push_back(static_cast<std::uint32_t>(i));
  }
}

MnistSource load_mnist(const std::filesystem::path& dir) {
  Sha256 hash;
  MnistSource src;
  src.train = DigitPool(load_split(dir, "train", hash));
  src.test = DigitPool(load_split(dir, "t10k", hash));
  src.digest = hash.hex();
  return src;
}

std::string_view task_name(Task task) {
  switch (task) {
    case Task::pretrain: return "pretrain";
    case Task::spatial2: return "spatial2";
    case Task::spatial3: return "spatial3";
    case Task::feature2: return "feature2";
  }
  return "unknown";
}

Task parse_task(std::string_view name) {
  for (Task t : {Task::pretrain, Task::spatial2, Task::spatial3, Task::feature2}) {
    if (task_name(t) == name) return t;
  }
  throw std::invalid_argument("unknown task '" + std::string(name) + "' (expected spatial2, spatial3, feature2 or pretrain)");
}

std::size_t task_slots(Task task) {
  switch (task) {
    case Task::spatial2: return 2;
    case Task::spatial3: return 3;
    case Task::feature2: return 2;
    case Task::pretrain: break;
  }
  throw std::invalid_argument("pretraining has no fixed canvas; it takes the geometry of its downstream task");
}

CompositeSample place_digits(std::span<const DigitImage* const> slot_digits) {
  const CanvasGeometry geom{slot_digits.size()};
  CompositeSample s;
  s.image = Tensor({1, geom.height(), geom.width()});
  s.slot_labels.assign(geom.slots, kBlankSlot);
  s.sources.assign(geom.slots, kNoSource);
  for (std::size_t slot = 0; slot < geom.slots; ++slot) {
    const DigitImage* d = slot_digits[slot];
    if (!d) continue;
    s.slot_labels[slot] = d->label;
    for (std::size_t y = 0; y < kDigitSide; ++y)
      for (std::size_t x = 0; x < kDigitSide; ++x) {
        s.image[y * geom.width() + geom.slot_begin(slot) + x] =
            static_cast<float>(d->pixels[y * kDigitSide + x]) / 255.0f;
      }
  }
  return s;
}

CompositeSample make_spatial_sample(std::span<const DigitImage* const> slot_digits, std::size_t target_slot) {
  if (target_slot >= slot_digits.size() || !slot_digits[target_slot]) {
    throw std::invalid_argument("spatial sample: target slot " + std::to_string(target_slot) + " holds no digit");
  }
  CompositeSample s = place_digits(slot_digits);
  s.signal.assign(slot_digits.size(), 0.0f);
  s.signal[target_slot] = 1.0f;
  s.target = s.slot_labels[target_slot];
  return s;
}

CompositeSample make_feature_sample(std::span<const DigitImage* const> slot_digits, std::size_t target_group) {
  if (slot_digits.size() != 2 || !slot_digits[0] || !slot_digits[1]) {
    throw std::invalid_argument("feature sample needs exactly two digits");
  }
  const std::size_t g0 = digit_group(slot_digits[0]->label);
  const std::size_t g1 = digit_group(slot_digits[1]->label);
  if (g0 == g1) throw std::invalid_argument("feature sample digits must come from different groups");
  if (target_group > 1) throw std::invalid_argument("target group must be 0 or 1");
  CompositeSample s = place_digits(slot_digits);
  s.signal = {0.0f, 0.0f};
  s.signal[target_group] = 1.0f;
  s.target = g0 == target_group ? slot_digits[0]->label : slot_digits[1]->label;
  return s;
}

CompositeSample compose_spatial(const DigitPool& pool, std::size_t k, std::uint64_t index, std::uint64_t seed,
                                std::uint64_t stream) {
  if (k != 2 && k != 3) throw std::invalid_argument("spatial canvas needs 2 or 3 slots");
  if (pool.size() < k) throw std::invalid_argument("digit pool smaller than slot count");
  SeededRng rng = SeededRng::for_stream(seed, stream, index);
  std::vector<std::uint32_t> picks;
  while (picks.size() < k) {
    const auto i = static_cast<std::uint32_t>(rng.uniform_index(pool.size()));
    if (std::find(picks.begin(), picks.end(), i) == picks.end()) picks.push_back(i);
  }
  std::vector<const DigitImage*> digits;
  for (auto i : picks) digits.push_back(&pool[i]);
  const auto target = static_cast<std::size_t>(rng.uniform_index(k));
  CompositeSample s = make_spatial_sample(digits, target);
  s.sources.assign(picks.begin(), picks.end());
  return s;
}

CompositeSample compose_feature(const DigitPool& pool, std::uint64_t index, std::uint64_t seed,
                                std::uint64_t stream) {
  if (pool.group(0).empty() || pool.group(1).empty()) {
    throw std::invalid_argument("feature task needs digits from both groups");
  }
  SeededRng rng = SeededRng::for_stream(seed, stream, index);
  const std::uint32_t first = pool.group(0)[rng.uniform_index(pool.group(0).size())];
  const std::uint32_t second = pool.group(1)[rng.uniform_index(pool.group(1).size())];
  const bool group1_left = rng.uniform_index(2) == 0;
  const auto target_group = static_cast<std::size_t>(rng.uniform_index(2));
  const std::array<std::uint32_t, 2> picks = group1_left ? std::array{first, second} : std::array{second, first};
  const std::array<const DigitImage*, 2> digits{&pool[picks[0]], &pool[picks[1]]};
  CompositeSample s = make_feature_sample(digits, target_group);
  s.sources.assign(picks.begin(), picks.end());
  return s;
}

CompositeSample compose_pretrain(const DigitPool& pool, std::size_t k, std::uint64_t index, std::uint64_t seed,
                                 std::uint64_t stream) {
  if (k == 0) throw std::invalid_argument("canvas needs at least one slot");
  if (pool.empty()) throw std::invalid_argument("empty digit pool");
  SeededRng rng = SeededRng::for_stream(seed, stream, index);
  const auto pick = static_cast<std::uint32_t>(rng.uniform_index(pool.size()));
  const auto slot = static_cast<std::size_t>(rng.uniform_index(k));
  std::vector<const DigitImage*> digits(k, nullptr);
  digits[slot] = &pool[pick];
  CompositeSample s = place_digits(digits);
  s.target = pool[pick].label;
  s.sources[slot] = pick;
  return s;
}

}  // namespace gatenet
