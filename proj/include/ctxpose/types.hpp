#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

namespace ctxpose {

using Vec3 = Eigen::Vector3d;

// N continuous joint locations in millimeters with per-joint confidence.
struct PoseEstimate {
  std::vector<Vec3> joints;
  std::vector<double> confidence;

  PoseEstimate() = default;
  explicit PoseEstimate(std::size_t n) : joints(n, Vec3::Zero()), confidence(n, 1.0) {}
  explicit PoseEstimate(std::vector<Vec3> j) : joints(std::move(j)), confidence(joints.size(), 1.0) {}

  std::size_t size() const noexcept { return joints.size(); }
  const Vec3& operator[](std::size_t i) const { return joints[i]; }
  Vec3& operator[](std::size_t i) { return joints[i]; }
};

}  // namespace ctxpose
