#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gatenet/compose.hpp"
#include "gatenet/networks.hpp"
#include "gatenet/tensor.hpp"

namespace gatenet {

enum class ModelKind { function, spatial_context, feature_context };

std::string_view model_kind_name(ModelKind kind);

struct LayerRecord {
  std::string name;
  Shape shape;
  bool trainable = false;
};

/// Parsed checkpoint header.
struct CheckpointInfo {
  std::uint32_t version = 0;
  ModelKind kind = ModelKind::function;
  CanvasGeometry geometry;
  std::string provenance;  // digest of whatever produced the weights
  std::vector<LayerRecord> layers;
  std::string digest;      // SHA-256 of the float payload
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_model(const std::filesystem::path& path, const FunctionNetwork& net, const std::string& provenance = "");
void save_model(const std::filesystem::path& path, const ContextNetwork& net, const std::string& provenance = "");

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Restores values and trainable flags into net. The stored kind must match
/// and every layer shape must agree; a mismatch names the offending layer.
CheckpointInfo load_model(const std::filesystem::path& path, FunctionNetwork& net);
CheckpointInfo load_model(const std::filesystem::path& path, ContextNetwork& net);

/// Builds a network of the stored kind and geometry and loads it.
FunctionNetwork load_function_network(const std::filesystem::path& path);
ContextNetwork load_context_network(const std::filesystem::path& path);

}  // namespace gatenet
