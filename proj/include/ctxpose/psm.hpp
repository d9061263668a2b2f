#pragma once

#include <cstddef>
#include <vector>

#include "ctxpose/grid.hpp"
#include "ctxpose/skeleton.hpp"

namespace ctxpose {

// Nonnegative per-joint appearance likelihoods over the grid.
struct UnaryScores : Heatmap {
  using Heatmap::Heatmap;
  UnaryScores() = default;
  explicit UnaryScores(Heatmap h) : Heatmap(std::move(h)) {}
};

struct PsmConfig {
  double epsilon_mm = 1.0;
  std::size_t max_search = 1'000'000;  // cap on |grid|^N for brute force
};

// epsilon defaults to half the voxel diagonal.
PsmConfig default_psm_config(const VoxelGrid& grid);

using Assignment = std::vector<std::size_t>;  // per-joint flat voxel index

struct MapResult {
  Assignment assignment;
  double energy = 0.0;      // linear scale
  double log_energy = 0.0;  // -inf when infeasible
};

// 1 when |q - k| lies in the closed window [mu - eps, mu + eps].
int hard_pairwise(const Vec3& q, const Vec3& k, const LimbPrior& prior, const PsmConfig& cfg);

double log_energy(const Assignment& assign, const UnaryScores& unary, const SkeletonGraph& g,
                  const PriorTable& priors, const PsmConfig& cfg);
double energy(const Assignment& assign, const UnaryScores& unary, const SkeletonGraph& g,
              const PriorTable& priors, const PsmConfig& cfg);

// Exhaustive maximization; ties resolve to the lexicographically smallest
// assignment. Throws SearchSpaceTooLarge past cfg.max_search.
MapResult brute_force_map(const UnaryScores& unary, const SkeletonGraph& g, const PriorTable& priors,
                          const PsmConfig& cfg);

struct DpResult : MapResult {
  double root_log_max = 0.0;  // max_q log y_{root,q} from the upward pass
};

// Max-product dynamic programming over a rooted tree with backtracking.
DpResult dp_map(const UnaryScores& unary, const RootedTree& tree, const PriorTable& priors,
                const PsmConfig& cfg);

PoseEstimate decode_assignment(const Assignment& assign, const VoxelGrid& grid);

struct ReprojectCheck {
  double limb_err = 0.0;   // MPLLE of the decoded pose, mm
  double joint_err = 0.0;  // mean joint error of the decoded pose, mm
};

ReprojectCheck reproject_check(const Assignment& assign, const VoxelGrid& grid, const PoseEstimate& gt,
                               const SkeletonGraph& g);

}  // namespace ctxpose
