#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxpose/grid.hpp"
#include "ctxpose/psm.hpp"
#include "ctxpose/rng.hpp"
#include "ctxpose/skeleton.hpp"

namespace ctxpose {

// Kinematic description used to sample poses: each non-root joint hangs off its
// tree parent at a fixed bone length along a canonical direction.
struct SynthSkeleton {
  SkeletonGraph graph;
  int root = 0;
  std::vector<double> bone_length;  // mm, indexed by child joint
  std::vector<Vec3> bone_dir;       // unit, indexed by child joint
};

SynthSkeleton h36m_synth_skeleton();
// Straight chain 0-1-...-(n-1) along +x.
SynthSkeleton chain_synth_skeleton(int n, double bone_length_mm);

struct RenderConfig {
  double noise = 0.05;            // amplitude of the uniform noise floor
  double occlusion_prob = 0.0;    // per joint
  double bump_sigma_mm = 0.0;     // 0: one voxel pitch
  double occluded_level = 0.5;    // value of an occluded joint's flat field
  double feature_noise = 0.1;     // std of channels 1..M-1
  int channels = 3;
};

struct SynthConfig {
  std::uint64_t seed = 0;
  int n_samples = 1;
  SynthSkeleton skeleton;
  VoxelGrid grid;
  double angle_range_deg = 30.0;  // per-bone azimuth/elevation perturbation
  double yaw_range_deg = 180.0;   // global rotation about the vertical axis
  double root_jitter_mm = 0.0;    // root offset from the grid center, per axis
  RenderConfig render;
};

// Rejection-samples a pose whose joints all lie within the hull of voxel
// centers. Throws BoxTooSmall after 1000 tries.
PoseEstimate sample_pose(const SynthConfig& cfg, Rng& rng);

struct RenderedUnaries {
  UnaryScores unary;
  std::vector<std::uint8_t> occluded;
};

// Gaussian bump plus a uniform noise floor for visible joints; a constant
// field for occluded ones.
RenderedUnaries render_unaries(const PoseEstimate& pose, const VoxelGrid& grid, const RenderConfig& rc,
                               Rng& rng);

struct RenderedFeatures {
  FeatureVolume features;
  std::vector<std::uint8_t> occluded;
};

// Channel 0 carries the unary field, channels 1..M-1 seeded Gaussian noise.
RenderedFeatures render_features(const PoseEstimate& pose, const VoxelGrid& grid, const RenderConfig& rc,
                                 Rng& rng);

struct Sample {
  int id = 0;
  PoseEstimate pose;
  FeatureVolume features;
  std::vector<std::uint8_t> occluded;
};

// Sample i draws from Rng(seed).split(i), so generation order is irrelevant.
Sample generate_sample(const SynthConfig& cfg, int sample_id);
std::vector<Sample> generate_samples(const SynthConfig& cfg);

// Limb priors with sigma floored at 1 mm, from the configured bone lengths.
PriorTable synthetic_priors(const SynthSkeleton& s);

SynthConfig synth_config_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
nlohmann::json synth_config_to_json(const SynthConfig& cfg);

}  // namespace ctxpose
