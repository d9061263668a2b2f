#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "ctxpose/types.hpp"

namespace ctxpose {

// Regular voxelization of an axis-aligned box. Flat index layout is x-major:
// flat = (x * H + y) * W + z with x in [0, D), y in [0, H), z in [0, W).
// Voxel centers are origin + (index + 0.5) * spacing per axis.
struct VoxelGrid {
  std::array<int, 3> dims{1, 1, 1};
  Vec3 origin = Vec3::Zero();
  Vec3 spacing = Vec3::Ones();

  VoxelGrid() = default;
  VoxelGrid(std::array<int, 3> d, Vec3 o, Vec3 s);

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t flat(int x, int y, int z) const noexcept {
    return (static_cast<std::size_t>(x) * dims[1] + y) * dims[2] + z;
  }
  std::array<int, 3> unflat(std::size_t i) const noexcept;
  Vec3 center(std::size_t i) const;  // unchecked
  // Box covered by the voxels, [origin, origin + dims * spacing].
  Vec3 box_min() const { return origin; }
  Vec3 box_max() const;
  double voxel_diagonal() const { return spacing.norm(); }
  bool contains(const Vec3& p) const;

  bool operator==(const VoxelGrid& o) const {
    return dims == o.dims && origin == o.origin && spacing == o.spacing;
  }
};

// Per-joint scalar fields over the grid, values[u * |grid| + k].
struct Heatmap {
  VoxelGrid grid;
  int n_joints = 0;
  std::vector<double> values;

  Heatmap() = default;
  Heatmap(VoxelGrid g, int n) : grid(g), n_joints(n), values(static_cast<std::size_t>(n) * g.size(), 0.0) {}
  std::span<double> joint(int u) { return {values.data() + u * grid.size(), grid.size()}; }
  std::span<const double> joint(int u) const { return {values.data() + u * grid.size(), grid.size()}; }
};

// Per-joint, per-voxel feature vectors; values[(u * M + c) * |grid| + k], i.e.
// an (N*M) x D x H x W tensor split into N groups of M channels.
struct FeatureVolume {
  VoxelGrid grid;
  int n_joints = 0;
  int channels = 0;
  std::vector<double> values;

  FeatureVolume() = default;
  FeatureVolume(VoxelGrid g, int n, int m);

  std::size_t channel_offset(int u, int c) const noexcept {
    return (static_cast<std::size_t>(u) * channels + c) * grid.size();
  }
  double& at(int u, int c, std::size_t k) { return values[channel_offset(u, c) + k]; }
  double at(int u, int c, std::size_t k) const { return values[channel_offset(u, c) + k]; }
  std::span<const double> channel(int u, int c) const { return {values.data() + channel_offset(u, c), grid.size()}; }
  std::span<double> channel(int u, int c) { return {values.data() + channel_offset(u, c), grid.size()}; }
};

// Throws IndexOutOfRange.
Vec3 voxel_center(const VoxelGrid& grid, std::size_t flat_index);
// Nearest voxel center; points outside the box are clamped onto it.
std::size_t nearest_voxel(const VoxelGrid& grid, const Vec3& p);

// Unnormalized exp(-|c_k - center|^2 / (2 sigma^2)). Throws NonPositiveSigma.
std::vector<double> gaussian_heatmap(const VoxelGrid& grid, const Vec3& center, double sigma_mm);

std::vector<double> spatial_softmax(std::span<const double> field);
Heatmap softmax_heatmap(const Heatmap& scores);

// Expectation of voxel centers under each joint's field. Throws
// UnnormalizedHeatmap when a joint's mass deviates from 1 by more than 1e-6.
PoseEstimate integrate_pose(const Heatmap& hm);

}  // namespace ctxpose
