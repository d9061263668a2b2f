#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxpose/adam.hpp"
#include "ctxpose/losses.hpp"
#include "ctxpose/metrics.hpp"
#include "ctxpose/model.hpp"
#include "ctxpose/synthgen.hpp"

namespace ctxpose {

struct TrainConfig {
  ModelVariant variant = ModelVariant::ContextPose;
  int epochs = 1;
  int batch = 4;
  int channels = 0;              // 0: take from the data
  int checkpoint_every = 0;      // epochs; 0 disables intermediate checkpoints
  double sigma_floor_mm = 1.0;   // lower bound on estimated limb sigma
  std::uint64_t seed = 0;
  int threads = 1;               // per-sample work is spread over threads
  AdamConfig adam;
  LossConfig loss;
  ModelInit init;
};

// Limb priors from training poses with sigma floored; exact synthetic limbs
// otherwise give a zero-width pairwise kernel.
PriorTable training_priors(std::span<const Sample> samples, const SkeletonGraph& g, double sigma_floor_mm);

struct BatchStats {
  double loss = 0.0;
  double l3d = 0.0;
  double lga = 0.0;
  std::vector<double> grad;  // flat, matches flatten_parameters
};

// Mean loss and gradient over samples[indices]. Per-sample results are
// reduced in index order, so the outcome does not depend on `threads`.
BatchStats batch_gradient(const ToyModel& m, std::span<const Sample> samples, std::span<const std::size_t> indices,
                          const LossConfig& loss, int threads = 1);

struct TrainState {
  ToyModel model;
  AdamState adam;
  int epoch = 0;           // completed epochs
  std::int64_t step = 0;   // completed optimizer steps
};

TrainState init_training(const TrainConfig& cfg, std::span<const Sample> train, const SkeletonGraph& g,
                         const VoxelGrid& grid);

// Deterministic permutation for an epoch, derived from (seed, epoch).
std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n);

struct EpochLog {
  int epoch = 0;
  std::int64_t step = 0;
  double loss = 0.0;  // sample-weighted means over the epoch
  double l3d = 0.0;
  double lga = 0.0;
};

// One optimizer step on the batch; returns its stats.
BatchStats train_step(TrainState& st, std::span<const Sample> train, std::span<const std::size_t> batch,
                      const TrainConfig& cfg);
EpochLog train_epoch(TrainState& st, std::span<const Sample> train, const TrainConfig& cfg);

std::vector<PoseEstimate> predict(const ToyModel& m, std::span<const Sample> samples);

void save_checkpoint(const std::filesystem::path& path, TrainState& st, const nlohmann::json& config);
// Returns the stored config alongside the state.
TrainState load_checkpoint(const std::filesystem::path& path, nlohmann::json* config = nullptr);

struct GradEntry {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradEntry> entries;
  double max_rel_error = 0.0;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps structurally zero gradients
// (e.g. weights whose contribution is constant over the grid and cancels in
// the spatial softmax) from being judged on finite-difference roundoff alone.
double relative_error(double analytic, double numeric, double floor = 1e-3);

// Fourth-order central differences of the total loss on one sample against
// backward(), step rel_step * max(1, |theta|). The numeric value is assembled
// as FD(L3D) + lambda * FD(LGA) so that a large lambda does not cancel away
// the L3D digits.
GradCheckReport gradcheck(const ToyModel& m, const Sample& sample, const LossConfig& loss, double rel_step = 3e-4);

struct GradCheckInstance {
  ToyModel model;
  Sample sample;
  LossConfig loss;
};

// Small random problem (2 joints, 2x2x2 grid, 2 channels) with nonzero weights
// everywhere so that every parameter influences the loss.
GradCheckInstance make_gradcheck_instance(ModelVariant variant, std::uint64_t seed);

}  // namespace ctxpose
