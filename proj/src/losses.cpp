#include "ctxpose/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "ctxpose/error.hpp"

namespace ctxpose {

namespace {

void require_inside(const VoxelGrid& grid, const PoseEstimate& gt) {
  for (std::size_t u = 0; u < gt.size(); ++u) {
    if (!grid.contains(gt[u])) {
      fail(ErrorCode::GtOutsideGrid, "ground-truth joint " + std::to_string(u) + " lies outside the grid");
    }
  }
}

void require_normalized(std::span<const double> field, int u) {
  double mass = 0.0;
  for (double v : field) mass += v;
  if (!(std::abs(mass - 1.0) <= 1e-6)) {
    fail(ErrorCode::UnnormalizedHeatmap, "joint " + std::to_string(u) + " field sums to " + std::to_string(mass));
  }
}

struct Corner {
  std::size_t index;
  double weight;
};

// Trilinear interpolation weights over the surrounding voxel centers, clamped
// at the border.
std::vector<Corner> trilinear_corners(const VoxelGrid& grid, const Vec3& p) {
  std::array<int, 3> lo{};
  std::array<int, 3> hi{};
  std::array<double, 3> t{};
  for (int a = 0; a < 3; ++a) {
    const double f = std::clamp((p[a] - grid.origin[a]) / grid.spacing[a] - 0.5, 0.0,
                                static_cast<double>(grid.dims[a] - 1));
    lo[a] = static_cast<int>(std::floor(f));
    hi[a] = std::min(lo[a] + 1, grid.dims[a] - 1);
    t[a] = f - lo[a];
  }
  std::vector<Corner> out;
  for (int bx = 0; bx < 2; ++bx) {
    for (int by = 0; by < 2; ++by) {
      for (int bz = 0; bz < 2; ++bz) {
        const double w = (bx ? t[0] : 1.0 - t[0]) * (by ? t[1] : 1.0 - t[1]) * (bz ? t[2] : 1.0 - t[2]);
        if (w == 0.0) continue;
        out.push_back({grid.flat(bx ? hi[0] : lo[0], by ? hi[1] : lo[1], bz ? hi[2] : lo[2]), w});
      }
    }
  }
  return out;
}

}  // namespace

LossConfig default_loss_config(const VoxelGrid& grid) {
  LossConfig cfg;
  cfg.ga_sigma_mm = 2.0 * grid.spacing.maxCoeff();
  return cfg;
}

Loss3D loss_3d(const PoseEstimate& pred, const PoseEstimate& gt, const Heatmap& hm, const LossConfig& cfg) {
  const std::size_t n = pred.size();
  if (gt.size() != n || static_cast<std::size_t>(hm.n_joints) != n || n == 0) {
    fail(ErrorCode::ShapeMismatch, "pose and heatmap joint counts differ");
  }
  require_inside(hm.grid, gt);
  const double inv_n = 1.0 / static_cast<double>(n);
  Loss3D out;
  out.grad_pose.assign(n, Vec3::Zero());
  out.grad_heatmap.assign(hm.values.size(), 0.0);
  for (std::size_t u = 0; u < n; ++u) {
    const int ui = static_cast<int>(u);
    require_normalized(hm.joint(ui), ui);
    const Vec3 diff = pred[u] - gt[u];
    double term = diff.cwiseAbs().sum();
    for (int a = 0; a < 3; ++a) {
      out.grad_pose[u][a] = inv_n * (diff[a] > 0.0 ? 1.0 : diff[a] < 0.0 ? -1.0 : 0.0);
    }
    double* gh = out.grad_heatmap.data() + u * hm.grid.size();
    const auto field = hm.joint(ui);
    if (cfg.lookup == HeatmapLookup::Nearest) {
      const std::size_t k = nearest_voxel(hm.grid, gt[u]);
      term -= cfg.beta * std::log(field[k]);
      gh[k] -= inv_n * cfg.beta / field[k];
    } else {
      const auto corners = trilinear_corners(hm.grid, gt[u]);
      double val = 0.0;
      for (const auto& c : corners) val += c.weight * field[c.index];
      term -= cfg.beta * std::log(val);
      for (const auto& c : corners) gh[c.index] -= inv_n * cfg.beta * c.weight / val;
    }
    out.value += inv_n * term;
  }
  return out;
}

LossGA loss_ga(const GlobalAttention& ga, const PoseEstimate& gt, const LossConfig& cfg) {
  const std::size_t n = gt.size();
  if (static_cast<std::size_t>(ga.n_joints) != n || n == 0) {
    fail(ErrorCode::ShapeMismatch, "attention and pose joint counts differ");
  }
  require_inside(ga.grid, gt);
  const std::size_t n_vox = ga.grid.size();
  const double scale = 1.0 / (static_cast<double>(n) * static_cast<double>(n_vox));
  LossGA out;
  out.grad_ga.assign(ga.values.size(), 0.0);
  for (std::size_t u = 0; u < n; ++u) {
    const int ui = static_cast<int>(u);
    require_normalized(ga.joint(ui), ui);
    const auto target = gaussian_heatmap(ga.grid, gt[u], cfg.ga_sigma_mm);
    const auto g = ga.joint(ui);
    for (std::size_t k = 0; k < n_vox; ++k) {
      const double r = g[k] - target[k];
      out.value += scale * r * r;
      out.grad_ga[u * n_vox + k] = 2.0 * scale * r;
    }
  }
  return out;
}

TotalLoss total_loss(const PoseEstimate& pred, const PoseEstimate& gt, const Heatmap& hm,
                     const GlobalAttention& ga, const LossConfig& cfg) {
  const Loss3D l3 = loss_3d(pred, gt, hm, cfg);
  const LossGA lg = loss_ga(ga, gt, cfg);
  TotalLoss t;
  t.l3d = l3.value;
  t.lga = lg.value;
  t.value = l3.value + cfg.lambda * lg.value;
  t.grad_pose = l3.grad_pose;
  t.grad_heatmap = l3.grad_heatmap;
  t.grad_ga = lg.grad_ga;
  for (double& g : t.grad_ga) g *= cfg.lambda;
  return t;
}

}  // namespace ctxpose
