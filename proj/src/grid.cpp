#include "ctxpose/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ctxpose/error.hpp"

namespace ctxpose {

VoxelGrid::VoxelGrid(std::array<int, 3> d, Vec3 o, Vec3 s) : dims(d), origin(std::move(o)), spacing(std::move(s)) {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] <= 0) fail(ErrorCode::InvalidConfig, "grid dims must be positive");
    if (!(spacing[a] > 0.0)) fail(ErrorCode::InvalidConfig, "grid spacing must be positive");
  }
}

std::array<int, 3> VoxelGrid::unflat(std::size_t i) const noexcept {
  const int z = static_cast<int>(i % dims[2]);
  i /= dims[2];
  const int y = static_cast<int>(i % dims[1]);
  const int x = static_cast<int>(i / dims[1]);
  return {x, y, z};
}

Vec3 VoxelGrid::center(std::size_t i) const {
  const auto idx = unflat(i);
  return {origin[0] + (idx[0] + 0.5) * spacing[0], origin[1] + (idx[1] + 0.5) * spacing[1],
          origin[2] + (idx[2] + 0.5) * spacing[2]};
}

Vec3 VoxelGrid::box_max() const {
  return {origin[0] + dims[0] * spacing[0], origin[1] + dims[1] * spacing[1],
          origin[2] + dims[2] * spacing[2]};
}

bool VoxelGrid::contains(const Vec3& p) const {
  const Vec3 hi = box_max();
  for (int a = 0; a < 3; ++a) {
    if (!(p[a] >= origin[a] && p[a] <= hi[a])) return false;
  }
  return true;
}

FeatureVolume::FeatureVolume(VoxelGrid g, int n, int m) : grid(g), n_joints(n), channels(m) {
  if (m <= 0) fail(ErrorCode::ShapeMismatch, "feature width M must be positive");
  values.assign(static_cast<std::size_t>(n) * m * grid.size(), 0.0);
}

Vec3 voxel_center(const VoxelGrid& grid, std::size_t flat_index) {
  if (flat_index >= grid.size()) {
    fail(ErrorCode::IndexOutOfRange, "voxel index " + std::to_string(flat_index) + " >= " +
                                         std::to_string(grid.size()));
  }
  return grid.center(flat_index);
}

std::size_t nearest_voxel(const VoxelGrid& grid, const Vec3& p) {
  std::array<int, 3> idx{};
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor((p[a] - grid.origin[a]) / grid.spacing[a]);
    idx[a] = static_cast<int>(std::clamp(f, 0.0, static_cast<double>(grid.dims[a] - 1)));
  }
  return grid.flat(idx[0], idx[1], idx[2]);
}

std::vector<double> gaussian_heatmap(const VoxelGrid& grid, const Vec3& center, double sigma_mm) {
  if (!(sigma_mm > 0.0)) fail(ErrorCode::NonPositiveSigma, "gaussian width must be positive");
  std::vector<double> out(grid.size());
  const double inv = 1.0 / (2.0 * sigma_mm * sigma_mm);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = std::exp(-(grid.center(k) - center).squaredNorm() * inv);
  }
  return out;
}

std::vector<double> spatial_softmax(std::span<const double> field) {
  std::vector<double> out(field.size());
  if (field.empty()) return out;
  const double mx = *std::max_element(field.begin(), field.end());
  double total = 0.0;
  for (std::size_t k = 0; k < field.size(); ++k) {
    out[k] = std::exp(field[k] - mx);
    total += out[k];
  }
  const double inv = 1.0 / total;
  for (double& v : out) v *= inv;
  return out;
}

Heatmap softmax_heatmap(const Heatmap& scores) {
  Heatmap out(scores.grid, scores.n_joints);
  for (int u = 0; u < scores.n_joints; ++u) {
    const auto p = spatial_softmax(scores.joint(u));
    std::copy(p.begin(), p.end(), out.joint(u).begin());
  }
  return out;
}

PoseEstimate integrate_pose(const Heatmap& hm) {
  PoseEstimate pose(static_cast<std::size_t>(hm.n_joints));
  const std::size_t n_vox = hm.grid.size();
  for (int u = 0; u < hm.n_joints; ++u) {
    const auto field = hm.joint(u);
    double mass = 0.0;
    double peak = 0.0;
    Vec3 acc = Vec3::Zero();
    for (std::size_t k = 0; k < n_vox; ++k) {
      mass += field[k];
      peak = std::max(peak, field[k]);
      acc += field[k] * hm.grid.center(k);
    }
    if (!(std::abs(mass - 1.0) <= 1e-6)) {
      fail(ErrorCode::UnnormalizedHeatmap,
           "joint " + std::to_string(u) + " heatmap sums to " + std::to_string(mass));
    }
    pose.joints[u] = acc;
    pose.confidence[u] = peak;
  }
  return pose;
}

}  // namespace ctxpose
