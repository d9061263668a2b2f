#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "ctxpose/skeleton.hpp"
#include "ctxpose/types.hpp"

namespace ctxpose {

// Mean Euclidean joint error with no alignment.
double mean_joint_error(const PoseEstimate& pred, const PoseEstimate& gt);

// Protocol #1: translate pred so its root coincides with the gt root.
double mpjpe_p1(const PoseEstimate& pred, const PoseEstimate& gt, int root = 0);

struct RigidAlignment {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

// Least-squares similarity (or rigid, when with_scale is false) map taking
// pred onto gt. Proper rotations only. Throws DegenerateConfiguration for
// fewer than 3 joints or collinear gt.
RigidAlignment procrustes_align(const PoseEstimate& pred, const PoseEstimate& gt, bool with_scale);

// Protocol #2: error after optimal rigid alignment.
double mpjpe_p2(const PoseEstimate& pred, const PoseEstimate& gt, bool with_scale = false);

double mplle(const PoseEstimate& pred, const PoseEstimate& gt, const SkeletonGraph& g);
// Radians. Limb vectors point from the lower to the higher joint index.
double mplae(const PoseEstimate& pred, const PoseEstimate& gt, const SkeletonGraph& g);

struct PckConfig {
  double threshold_mm = 150.0;
  double curve_max_mm = 150.0;
  double curve_step_mm = 5.0;
};

struct PckAuc {
  double pck = 0.0;
  double auc = 0.0;
};

// Raw joint distances; callers align per protocol #1 first. A joint counts as
// correct when its error is <= the threshold.
PckAuc pck_auc(std::span<const PoseEstimate> preds, std::span<const PoseEstimate> gts,
               const PckConfig& cfg = {});

struct SampleMetrics {
  double mpjpe_p1 = 0.0;
  double mpjpe_p2 = 0.0;
  double mpjpe_p2_scaled = 0.0;
  double mplle = 0.0;
  double mplae = 0.0;
};

struct MetricReport {
  double mpjpe_p1 = 0.0;
  double mpjpe_p2 = 0.0;
  double mpjpe_p2_scaled = 0.0;
  double mplle = 0.0;
  double mplae = 0.0;
  double pck = 0.0;
  double auc = 0.0;
  std::vector<SampleMetrics> per_sample;
};

MetricReport evaluate(std::span<const PoseEstimate> preds, std::span<const PoseEstimate> gts,
                      const SkeletonGraph& g, const PckConfig& pck = {}, int root = 0);

}  // namespace ctxpose
