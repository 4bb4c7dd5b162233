#include "gatenet/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "gatenet/digest.hpp"
#include "gatenet/errors.hpp"
#include "gatenet/idx.hpp"

namespace gatenet {
namespace {

static_assert(std::endian::native == std::endian::little, "packed formats assume a little-endian host");

constexpr char kDatasetMagic[4] = {'G', 'N', 'D', 'S'};
constexpr std::uint32_t kDatasetVersion = 1;

template <class T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)).data(), sizeof(T));
    return value;
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw FormatError("dataset file truncated: need " + std::to_string(pos_ + n) + " bytes, have " +
                        std::to_string(bytes_.size()));
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint64_t split_stream(Task task, bool test) { return static_cast<std::uint64_t>(task) * 2 + (test ? 1 : 0); }

Dataset compose_split(const DatasetSpec& spec, const DigitPool& pool, std::size_t count, bool test) {
  const std::size_t signal_len = spec.task == Task::pretrain ? 0 : spec.task == Task::feature2 ? 2 : spec.slots;
  Dataset data(spec.task, CanvasGeometry{spec.slots}, signal_len);
  data.reserve(count);
  const std::uint64_t stream = split_stream(spec.task, test);
  for (std::size_t i = 0; i < count; ++i) {
    switch (spec.task) {
      case Task::pretrain: data.append(compose_pretrain(pool, spec.slots, i, spec.seed, stream)); break;
      case Task::spatial2:
      case Task::spatial3: data.append(compose_spatial(pool, spec.slots, i, spec.seed, stream)); break;
      case Task::feature2: data.append(compose_feature(pool, i, spec.seed, stream)); break;
    }
  }
  return data;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

Dataset::Dataset(Task task, CanvasGeometry geometry, std::size_t signal_len)
    : task_(task), geometry_(geometry), signal_len_(signal_len) {}

void Dataset::reserve(std::size_t n) {
  images_.reserve(n * geometry_.height() * geometry_.width());
  signals_.reserve(n * signal_len_);
  targets_.reserve(n);
  slot_labels_.reserve(n * geometry_.slots);
  sources_.reserve(n * geometry_.slots);
}

void Dataset::append(const CompositeSample& s) {
  const Shape expected{1, geometry_.height(), geometry_.width()};
  if (s.image.shape() != expected) {
    throw ShapeError("dataset expects images " + shape_str(expected) + ", got " + shape_str(s.image.shape()));
  }
  if (s.signal.size() != signal_len_ || s.slot_labels.size() != geometry_.slots) {
    throw ShapeError("sample signal/slot layout does not match dataset");
  }
  images_.insert(images_.end(), s.image.data().begin(), s.image.data().end());
  for (float v : s.signal) signals_.push_back(v != 0.0f ? 1 : 0);
  targets_.push_back(s.target);
  slot_labels_.insert(slot_labels_.end(), s.slot_labels.begin(), s.slot_labels.end());
  if (s.sources.size() == geometry_.slots) {
    sources_.insert(sources_.end(), s.sources.begin(), s.sources.end());
  }
}

std::span<const std::uint8_t> Dataset::slot_labels(std::size_t i) const {
  return std::span<const std::uint8_t>(slot_labels_).subspan(i * geometry_.slots, geometry_.slots);
}

std::span<const std::uint32_t> Dataset::sources(std::size_t i) const {
  if (sources_.size() != size() * geometry_.slots) return {};
  return std::span<const std::uint32_t>(sources_).subspan(i * geometry_.slots, geometry_.slots);
}

std::size_t Dataset::signal_index(std::size_t i) const {
  for (std::size_t j = 0; j < signal_len_; ++j) {
    if (signals_[i * signal_len_ + j]) return j;
  }
  throw std::logic_error("sample has no signal");
}

CompositeSample Dataset::sample(std::size_t i) const {
  if (i >= size()) throw std::out_of_range("sample index " + std::to_string(i) + " beyond dataset size");
  const std::size_t pixels = geometry_.height() * geometry_.width();
  CompositeSample s;
  s.image = Tensor({1, geometry_.height(), geometry_.width()},
                   std::vector<float>(images_.begin() + static_cast<std::ptrdiff_t>(i * pixels),
                                      images_.begin() + static_cast<std::ptrdiff_t>((i + 1) * pixels)));
  for (std::size_t j = 0; j < signal_len_; ++j) s.signal.push_back(signals_[i * signal_len_ + j] ? 1.0f : 0.0f);
  s.target = targets_[i];
  auto labels = slot_labels(i);
  s.slot_labels.assign(labels.begin(), labels.end());
  auto src = sources(i);
  s.sources.assign(src.begin(), src.end());
  return s;
}

Batch Dataset::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw std::invalid_argument("empty batch");
  const std::size_t n = indices.size(), h = geometry_.height(), w = geometry_.width(), pixels = h * w;
  Batch b;
  b.images = Tensor({n, 1, h, w});
  if (signal_len_ > 0) b.signals = Tensor({n, signal_len_});
  b.targets.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = indices[k];
    if (i >= size()) throw std::out_of_range("batch index beyond dataset size");
    std::copy_n(images_.begin() + static_cast<std::ptrdiff_t>(i * pixels), pixels,
                b.images.data().begin() + static_cast<std::ptrdiff_t>(k * pixels));
    for (std::size_t j = 0; j < signal_len_; ++j) b.signals[k * signal_len_ + j] = signals_[i * signal_len_ + j];
    b.targets.push_back(targets_[i]);
  }
  return b;
}

bool operator==(const Dataset& a, const Dataset& b) {
  return a.task_ == b.task_ && a.geometry_ == b.geometry_ && a.signal_len_ == b.signal_len_ &&
         a.images_ == b.images_ && a.signals_ == b.signals_ && a.targets_ == b.targets_ &&
         a.slot_labels_ == b.slot_labels_;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& data) {
  std::vector<std::uint8_t> out;
  const std::size_t pixels = data.geometry().height() * data.geometry().width();
  out.reserve(36 + data.size() * (pixels * 4 + data.signal_len() + 1 + data.geometry().slots));
  out.insert(out.end(), std::begin(kDatasetMagic), std::end(kDatasetMagic));
  put<std::uint32_t>(out, kDatasetVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.task()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.geometry().slots));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.geometry().height()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.geometry().width()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.signal_len()));
  put<std::uint64_t>(out, data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const CompositeSample s = data.sample(i);
    for (float v : s.image.data()) put<float>(out, v);
    for (float v : s.signal) out.push_back(v != 0.0f ? 1 : 0);
    out.push_back(s.target);
    out.insert(out.end(), s.slot_labels.begin(), s.slot_labels.end());
  }
  return out;
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), std::begin(kDatasetMagic))) {
    throw FormatError("not a packed dataset file (bad magic)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetVersion) {
    throw FormatError("dataset format version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kDatasetVersion) + ")");
  }
  const auto task = r.get<std::uint32_t>();
  if (task > static_cast<std::uint32_t>(Task::feature2)) throw FormatError("dataset file names unknown task id");
  const auto slots = r.get<std::uint32_t>();
  const auto height = r.get<std::uint32_t>();
  const auto width = r.get<std::uint32_t>();
  const auto signal_len = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  const CanvasGeometry geom{slots};
  if (slots == 0 || height != geom.height() || width != geom.width()) {
    throw FormatError("dataset canvas " + std::to_string(height) + "x" + std::to_string(width) +
                      " inconsistent with " + std::to_string(slots) + " slots");
  }
  const std::size_t pixels = std::size_t{height} * width;
  const std::size_t record = pixels * 4 + signal_len + 1 + slots;
  if (r.remaining() != count * record) {
    throw FormatError("dataset payload holds " + std::to_string(r.remaining()) + " bytes, expected " +
                      std::to_string(count * record));
  }
  Dataset data(static_cast<Task>(task), geom, signal_len);
  data.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    for (std::size_t p = 0; p < pixels; ++p) data.images_.push_back(r.get<float>());
    auto sig = r.take(signal_len);
    data.signals_.insert(data.signals_.end(), sig.begin(), sig.end());
    data.targets_.push_back(r.get<std::uint8_t>());
    auto labels = r.take(slots);
    data.slot_labels_.insert(data.slot_labels_.end(), labels.begin(), labels.end());
  }
  return data;
}

DatasetSpec default_dataset_spec(Task task, std::uint64_t seed, std::size_t scale, std::size_t slots) {
  if (scale == 0) throw std::invalid_argument("scale must be positive");
  DatasetSpec spec;
  spec.task = task;
  spec.seed = seed;
  spec.scale = scale;
  switch (task) {
    case Task::pretrain:
      if (slots == 0) throw std::invalid_argument("pretraining dataset needs the downstream slot count");
      spec.slots = slots;
      spec.train_count = 60000;
      spec.test_count = 10000;
      break;
    case Task::spatial2:
    case Task::spatial3:
      spec.slots = task_slots(task);
      spec.train_count = 80000;
      spec.test_count = 20000;
      break;
    case Task::feature2:
      spec.slots = 2;
      spec.train_count = 160000;
      spec.test_count = 40000;
      break;
  }
  spec.train_count /= scale;
  spec.test_count /= scale;
  if (spec.train_count == 0 || spec.test_count == 0) throw std::invalid_argument("scale leaves an empty split");
  return spec;
}

std::string Manifest::get(const std::string& key) const {
  auto it = fields.find(key);
  if (it == fields.end()) throw FormatError("manifest lacks field '" + key + "'");
  return it->second;
}

std::string Manifest::to_text() const {
  std::string out;
  for (const auto& [k, v] : fields) out += k + " = " + v + "\n";
  return out;
}

Manifest Manifest::parse(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw FormatError("malformed manifest line: " + line);
    m.fields[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return m;
}

Manifest Manifest::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void Manifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << to_text();
}

DatasetBundle gen_dataset(const DatasetSpec& spec, const MnistSource& mnist) {
  if (spec.train_count == 0 || spec.test_count == 0) throw std::invalid_argument("dataset counts must be positive");
  if (spec.task != Task::pretrain && spec.slots != task_slots(spec.task)) {
    throw std::invalid_argument("slot count does not match task");
  }
  DatasetBundle b;
  b.spec = spec;
  b.train = compose_split(spec, mnist.train, spec.train_count, false);
  b.test = compose_split(spec, mnist.test, spec.test_count, true);

  const std::string train_digest = sha256_hex(encode_dataset(b.train));
  const std::string test_digest = sha256_hex(encode_dataset(b.test));
  auto& f = b.manifest.fields;
  f["format"] = "gatenet-dataset 1";
  f["task"] = std::string(task_name(spec.task));
  f["slots"] = std::to_string(spec.slots);
  f["seed"] = std::to_string(spec.seed);
  f["scale"] = std::to_string(spec.scale);
  f["train_count"] = std::to_string(spec.train_count);
  f["test_count"] = std::to_string(spec.test_count);
  f["mnist_digest"] = mnist.digest;
  f["train_digest"] = train_digest;
  f["test_digest"] = test_digest;
  f["content_digest"] = sha256_hex(train_digest + ":" + test_digest);
  return b;
}

void write_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  Manifest m = bundle.manifest;
  m.fields["train_file"] = stem + "_train.bin";
  m.fields["test_file"] = stem + "_test.bin";
  write_bytes(dir / m.fields["train_file"], encode_dataset(bundle.train));
  write_bytes(dir / m.fields["test_file"], encode_dataset(bundle.test));
  m.write(dir / (stem + ".manifest"));
}

DatasetBundle read_bundle(const std::filesystem::path& dir, const std::string& stem) {
  DatasetBundle b;
  b.manifest = Manifest::read(dir / (stem + ".manifest"));
  const auto train_bytes = read_file_bytes(dir / b.manifest.get("train_file"));
  const auto test_bytes = read_file_bytes(dir / b.manifest.get("test_file"));
  if (sha256_hex(train_bytes) != b.manifest.get("train_digest")) {
    throw DigestError("train file digest does not match manifest in " + dir.string());
  }
  if (sha256_hex(test_bytes) != b.manifest.get("test_digest")) {
    throw DigestError("test file digest does not match manifest in " + dir.string());
  }
  b.train = decode_dataset(train_bytes);
  b.test = decode_dataset(test_bytes);
  b.spec.task = parse_task(b.manifest.get("task"));
  try {
    b.spec.slots = std::stoul(b.manifest.get("slots"));
    b.spec.seed = std::stoull(b.manifest.get("seed"));
    b.spec.scale = std::stoul(b.manifest.get("scale"));
  } catch (const std::logic_error&) {
    throw FormatError("manifest in " + dir.string() + " holds a malformed number");
  }
  b.spec.train_count = b.train.size();
  b.spec.test_count = b.test.size();
  return b;
}

}  // namespace gatenet
