#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ctxpose/grid.hpp"
#include "ctxpose/skeleton.hpp"

namespace ctxpose {

// Which attention terms weight the messages. GlobalOnly sets the pairwise
// term to 1 for every pair; PairwiseOnly replaces the global attention with a
// uniform distribution and ignores d.
enum class AttentionMode { Full, GlobalOnly, PairwiseOnly };

struct ContextParams {
  int n_joints = 0;
  int channels = 0;
  std::vector<double> W;             // [u][v] blocks of M x M, row-major
  std::vector<double> d;             // [v] vectors of width M
  std::vector<std::uint8_t> active;  // [u][v]; inactive pairs send no message
  double alpha = 1500.0;
  double eps = 1e-8;  // mm^2
  AttentionMode mode = AttentionMode::Full;

  ContextParams() = default;
  ContextParams(int n, int m);  // ShapeMismatch when m <= 0

  std::size_t block() const { return static_cast<std::size_t>(channels) * channels; }
  std::span<double> w(int u, int v) { return {W.data() + (static_cast<std::size_t>(u) * n_joints + v) * block(), block()}; }
  std::span<const double> w(int u, int v) const { return {W.data() + (static_cast<std::size_t>(u) * n_joints + v) * block(), block()}; }
  std::span<double> dv(int v) { return {d.data() + static_cast<std::size_t>(v) * channels, static_cast<std::size_t>(channels)}; }
  std::span<const double> dv(int v) const { return {d.data() + static_cast<std::size_t>(v) * channels, static_cast<std::size_t>(channels)}; }
  bool is_active(int u, int v) const { return active[static_cast<std::size_t>(u) * n_joints + v] != 0; }
};

// Per-joint distribution over voxels, values[v * |grid| + k].
struct GlobalAttention {
  VoxelGrid grid;
  int n_joints = 0;
  std::vector<double> values;

  std::span<const double> joint(int v) const { return {values.data() + v * grid.size(), grid.size()}; }
  std::span<double> joint(int v) { return {values.data() + v * grid.size(), grid.size()}; }
};

// Normalized pairwise term P(q, k) for one ordered pair (u, v). When the pair
// is not connected the term is identically 1 and nothing is stored.
struct PairwiseKernel {
  int u = -1;
  int v = -1;
  bool connected = false;
  std::size_t n_voxels = 0;
  std::vector<double> values;      // |grid| x |grid|, row q, column k
  std::vector<double> normalizer;  // Z(q) = sum_k G_k exp(...)

  double at(std::size_t q, std::size_t k) const { return connected ? values[q * n_voxels + k] : 1.0; }
};

// All ordered pairs, indexed [u * N + v].
struct KernelSet {
  int n_joints = 0;
  std::vector<PairwiseKernel> pairs;

  const PairwiseKernel& at(int u, int v) const { return pairs[static_cast<std::size_t>(u) * n_joints + v]; }
};

// Softmax over voxels of d_v . x_{v,k}.
GlobalAttention global_attention(const FeatureVolume& x, std::span<const double> d);

// The unnormalized kernel exp(-(|q-k| - mu)^2 / (2 alpha sigma^2 + eps)) depends
// only on the index offset between q and k; the table is indexed by
// (|dx| * H + |dy|) * W + |dz|.
std::vector<double> offset_kernel_table(const VoxelGrid& grid, const LimbPrior& prior, double alpha,
                                        double eps);

// Kernel for a connected pair, normalized so sum_k G_k P(q, k) = 1 for every q.
// Throws DegenerateNormalizer if some Z(q) underflows to 0.
PairwiseKernel pairwise_kernel(const VoxelGrid& grid, const LimbPrior& prior, std::span<const double> ga,
                               double alpha, double eps);

// P == 1 for a pair that is not an edge. Throws InvalidEdge if (u, v) is an edge.
PairwiseKernel non_connected_rule(int u, int v, const SkeletonGraph& g);

KernelSet build_kernels(const VoxelGrid& grid, const SkeletonGraph& g, const PriorTable& priors,
                        const GlobalAttention& ga, const ContextParams& params);

// y_{u,q} = x_{u,q} + sum_v sum_k G_{v,k} P_{u,v}(q,k) W_{u,v} x_{v,k}, with
// v running over every joint (ascending) whose pair is active.
FeatureVolume context_update(const FeatureVolume& x, const GlobalAttention& ga, const KernelSet& kernels,
                             const ContextParams& params);

struct ContextOutput {
  FeatureVolume y;
  GlobalAttention ga;
  KernelSet kernels;
};

ContextOutput context_forward(const FeatureVolume& x, const SkeletonGraph& g, const PriorTable& priors,
                              const ContextParams& params);

struct ContextGrads {
  std::vector<double> W;
  std::vector<double> d;
  std::vector<double> x;
};

// Reverse mode through context_forward. grad_y matches y's layout; grad_ga
// (may be empty) is an extra gradient on the global attention values.
ContextGrads context_backward(const FeatureVolume& x, const ContextOutput& fwd, const ContextParams& params,
                              std::span<const double> grad_y, std::span<const double> grad_ga);

}  // namespace ctxpose
