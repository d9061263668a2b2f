#pragma once

#include <vector>

#include "ctxpose/contextpose.hpp"
#include "ctxpose/grid.hpp"
#include "ctxpose/types.hpp"

namespace ctxpose {

// How V_u(J_u^gt) is read from the heatmap.
enum class HeatmapLookup { Nearest, Trilinear };

struct LossConfig {
  double beta = 1e-2;
  double lambda = 1e6;
  double ga_sigma_mm = 1.0;  // width of the attention target
  HeatmapLookup lookup = HeatmapLookup::Nearest;
};

// Defaults with the attention target width set to two voxel pitches.
LossConfig default_loss_config(const VoxelGrid& grid);

struct Loss3D {
  double value = 0.0;
  std::vector<Vec3> grad_pose;       // dL/dJ_u
  std::vector<double> grad_heatmap;  // dL/dV, heatmap layout
};

// (1/N) sum_u (|J_u - J_u^gt|_1 - beta log V_u(J_u^gt)).
Loss3D loss_3d(const PoseEstimate& pred, const PoseEstimate& gt, const Heatmap& hm, const LossConfig& cfg);

struct LossGA {
  double value = 0.0;
  std::vector<double> grad_ga;
};

// (1 / (N |grid|)) sum_u |G_u - G_u^gt|^2 against a peak-1 Gaussian target.
LossGA loss_ga(const GlobalAttention& ga, const PoseEstimate& gt, const LossConfig& cfg);

struct TotalLoss {
  double value = 0.0;
  double l3d = 0.0;
  double lga = 0.0;
  std::vector<Vec3> grad_pose;
  std::vector<double> grad_heatmap;
  std::vector<double> grad_ga;
};

// L3D + lambda * LGA with the matching weighted gradients.
TotalLoss total_loss(const PoseEstimate& pred, const PoseEstimate& gt, const Heatmap& hm,
                     const GlobalAttention& ga, const LossConfig& cfg);

}  // namespace ctxpose
