#include "gatenet/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gatenet/digest.hpp"
#include "gatenet/errors.hpp"
#include "gatenet/idx.hpp"

namespace gatenet {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint payload is little-endian");

constexpr std::string_view kMagicLine = "GATENET-CHECKPOINT";

std::uint64_t parse_number(const std::string& text) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) throw FormatError("checkpoint field '" + text + "' is not a number");
  return v;
}

ModelKind parse_kind(const std::string& name) {
  for (ModelKind k : {ModelKind::function, ModelKind::spatial_context, ModelKind::feature_context}) {
    if (model_kind_name(k) == name) return k;
  }
  throw FormatError("checkpoint names unknown model kind '" + name + "'");
}

Shape parse_shape(const std::string& text) {
  Shape s;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, 'x')) s.push_back(parse_number(part));
  return s;
}

std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

ModelKind kind_of(const ContextNetwork& net) {
  return std::holds_alternative<SpatialContextNetwork>(net) ? ModelKind::spatial_context
                                                            : ModelKind::feature_context;
}

void save(const std::filesystem::path& path, ModelKind kind, const CanvasGeometry& geometry,
          std::span<const Parameter* const> params, const std::string& provenance) {
  std::vector<std::uint8_t> payload;
  for (const Parameter* p : params) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(p->value.data().data());
    payload.insert(payload.end(), bytes, bytes + p->value.size() * sizeof(float));
  }
  std::ostringstream header;
  header << kMagicLine << "\n";
  header << "version = " << kCheckpointVersion << "\n";
  header << "kind = " << model_kind_name(kind) << "\n";
  header << "slots = " << geometry.slots << "\n";
  header << "provenance = " << (provenance.empty() ? "-" : provenance) << "\n";
  header << "layers = " << params.size() << "\n";
  for (const Parameter* p : params) {
    header << "layer = " << p->name << " " << shape_text(p->value.shape()) << " "
           << (p->trainable ? "trainable" : "frozen") << "\n";
  }
  header << "payload_bytes = " << payload.size() << "\n";
  header << "digest = " << sha256_hex(payload) << "\n";
  header << "end\n";

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  const std::string h = header.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("write failed for checkpoint " + path.string());
}

struct Parsed {
  CheckpointInfo info;
  std::vector<std::uint8_t> payload;
};

Parsed parse(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  Parsed out;
  std::size_t pos = 0;
  auto next_line = [&]() {
    const auto start = pos;
    while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    if (pos >= bytes.size()) throw FormatError(path.string() + ": truncated checkpoint header");
    std::string line(bytes.begin() + static_cast<std::ptrdiff_t>(start), bytes.begin() + static_cast<std::ptrdiff_t>(pos));
    ++pos;
    return line;
  };
  auto field = [&](const std::string& key) {
    const std::string line = next_line();
    const std::string prefix = key + " = ";
    if (line.rfind(prefix, 0) != 0) throw FormatError(path.string() + ": expected '" + key + "' in header, got '" + line + "'");
    return line.substr(prefix.size());
  };

  if (next_line() != kMagicLine) throw FormatError(path.string() + ": not a gatenet checkpoint");
  CheckpointInfo& info = out.info;
  info.version = static_cast<std::uint32_t>(parse_number(field("version")));
  if (info.version != kCheckpointVersion) {
    throw FormatError(path.string() + ": checkpoint version " + std::to_string(info.version) + " unsupported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  info.kind = parse_kind(field("kind"));
  info.geometry = CanvasGeometry{parse_number(field("slots"))};
  info.provenance = field("provenance");
  if (info.provenance == "-") info.provenance.clear();
  const std::size_t count = parse_number(field("layers"));
  std::size_t expected_bytes = 0;
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream in(field("layer"));
    LayerRecord rec;
    std::string shape, flag;
    in >> rec.name >> shape >> flag;
    rec.shape = parse_shape(shape);
    rec.trainable = flag == "trainable";
    expected_bytes += shape_size(rec.shape) * sizeof(float);
    info.layers.push_back(std::move(rec));
  }
  const std::size_t payload_bytes = parse_number(field("payload_bytes"));
  info.digest = field("digest");
  if (next_line() != "end") throw FormatError(path.string() + ": missing header terminator");
  if (payload_bytes != expected_bytes) throw FormatError(path.string() + ": payload size disagrees with layer list");
  if (bytes.size() - pos != payload_bytes) {
    throw FormatError(path.string() + ": truncated payload: expected " + std::to_string(payload_bytes) + " bytes, found " +
                      std::to_string(bytes.size() - pos));
  }
  out.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  if (sha256_hex(out.payload) != info.digest) {
    throw DigestError(path.string() + ": payload digest mismatch (file corrupted)");
  }
  return out;
}

void restore(const Parsed& parsed, ModelKind expected, std::span<Parameter* const> params,
             const std::filesystem::path& path) {
  const CheckpointInfo& info = parsed.info;
  if (info.kind != expected) {
    throw FormatError(path.string() + ": holds a " + std::string(model_kind_name(info.kind)) + " model, expected " +
                      std::string(model_kind_name(expected)));
  }
  if (info.layers.size() != params.size()) {
    throw ShapeError(path.string() + ": " + std::to_string(info.layers.size()) + " layers stored, model has " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (info.layers[i].name != params[i]->name) {
      throw ShapeError(path.string() + ": layer " + std::to_string(i) + " is '" + info.layers[i].name + "', model expects '" +
                       params[i]->name + "'");
    }
    if (info.layers[i].shape != params[i]->value.shape()) {
      throw ShapeError(path.string() + ": layer '" + params[i]->name + "' stored as " + shape_str(info.layers[i].shape) +
                       " but model expects " + shape_str(params[i]->value.shape()));
    }
  }
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    std::memcpy(p.value.data().data(), parsed.payload.data() + offset, p.value.size() * sizeof(float));
    offset += p.value.size() * sizeof(float);
    p.trainable = info.layers[i].trainable;
    p.zero_grad();
  }
}

}  // namespace

std::string_view model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::function: return "function";
    case ModelKind::spatial_context: return "spatial_context";
    case ModelKind::feature_context: return "feature_context";
  }
  return "unknown";
}

void save_model(const std::filesystem::path& path, const FunctionNetwork& net, const std::string& provenance) {
  save(path, ModelKind::function, net.geometry(), net.parameters(), provenance);
}

void save_model(const std::filesystem::path& path, const ContextNetwork& net, const std::string& provenance) {
  save(path, kind_of(net), geometry(net), parameters(net), provenance);
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) { return parse(path).info; }

CheckpointInfo load_model(const std::filesystem::path& path, FunctionNetwork& net) {
  Parsed parsed = parse(path);
  restore(parsed, ModelKind::function, net.parameters(), path);
  return parsed.info;
}

CheckpointInfo load_model(const std::filesystem::path& path, ContextNetwork& net) {
  Parsed parsed = parse(path);
  restore(parsed, kind_of(net), parameters(net), path);
  return parsed.info;
}

FunctionNetwork load_function_network(const std::filesystem::path& path) {
  Parsed parsed = parse(path);
  FunctionNetwork net(parsed.info.geometry, 0);
  restore(parsed, ModelKind::function, net.parameters(), path);
  return net;
}

ContextNetwork load_context_network(const std::filesystem::path& path) {
  Parsed parsed = parse(path);
  const Task task = parsed.info.kind == ModelKind::feature_context ? Task::feature2
                    : parsed.info.geometry.slots == 3              ? Task::spatial3
                                                                   : Task::spatial2;
  if (parsed.info.kind == ModelKind::function) throw FormatError(path.string() + ": holds a function network");
  ContextNetwork net = make_context_network(task, parsed.info.geometry, 0);
  restore(parsed, parsed.info.kind, parameters(net), path);
  return net;
}

}  // namespace gatenet
