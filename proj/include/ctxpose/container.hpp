#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxpose/grid.hpp"

namespace ctxpose {

// Volume file: one JSON header line, then N*M*|grid| little-endian float32
// values in FeatureVolume layout.
void write_volume(const std::filesystem::path& path, const FeatureVolume& vol);
FeatureVolume read_volume(const std::filesystem::path& path);

// Exports one scalar field per joint (attention maps, heatmaps).
void write_heatmap_volume(const std::filesystem::path& path, const Heatmap& hm);

enum class BlobType { Float32, Float64 };

struct Tensor {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<double> data;
};

// Parameter container: one JSON header line listing tensors (name, shape,
// offset in elements) plus free-form metadata, then a little-endian blob.
struct TensorContainer {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<Tensor> tensors;

  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
};

void write_container(const std::filesystem::path& path, const TensorContainer& c, BlobType type);
TensorContainer read_container(const std::filesystem::path& path);

nlohmann::json grid_to_json(const VoxelGrid& g);
VoxelGrid grid_from_json(const nlohmann::json& j);

}  // namespace ctxpose
