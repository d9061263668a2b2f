#pragma once

#include <filesystem>
#include <map>
#include <vector>

#include "ctxpose/synthgen.hpp"

namespace ctxpose {

// On-disk layout: manifest.json (config, seed, sample list), one
// sample_XXXX.vol feature volume per sample, and poses.csv with the ground
// truth joints.
struct Dataset {
  SynthConfig config;
  std::vector<Sample> samples;

  const SkeletonGraph& graph() const { return config.skeleton.graph; }
  const VoxelGrid& grid() const { return config.grid; }
};

void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& dir);

// CSV rows "sample_id,joint,x,y,z", coordinates at full double precision.
using PoseTable = std::map<int, PoseEstimate>;
void write_poses_csv(const std::filesystem::path& path, const PoseTable& poses);
PoseTable read_poses_csv(const std::filesystem::path& path);

}  // namespace ctxpose
