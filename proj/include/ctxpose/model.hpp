#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctxpose/contextpose.hpp"
#include "ctxpose/gnn.hpp"
#include "ctxpose/grid.hpp"
#include "ctxpose/skeleton.hpp"

namespace ctxpose {

// Toy pipeline: identity encoder, a context block, per-joint affine readout
// over channels, spatial softmax, integral pose.
enum class ModelVariant {
  Baseline,      // context block present but every pair disabled
  ContextPose,   // global x pairwise attention
  GlobalOnly,    // pairwise term fixed to 1
  PairwiseOnly,  // uniform global attention
  FCN,           // per-voxel graph layer, dense mask
  GNN,           // per-voxel graph layer, skeleton mask, shared weights
  LCN,           // per-voxel graph layer, skeleton mask, per-pair weights
};

ModelVariant parse_model_variant(std::string_view name);
std::string_view to_string(ModelVariant v);
bool uses_graph_layer(ModelVariant v);

struct ToyModel {
  ModelVariant variant = ModelVariant::ContextPose;
  VoxelGrid grid;
  SkeletonGraph graph;
  PriorTable priors;
  ContextParams context;
  GnnLayerParams graph_layer;      // graph-layer variants only
  StructureMatrix structure;       // graph-layer variants only
  // [u][c]; no bias, a per-joint constant cancels in the spatial softmax
  std::vector<double> readout_w;

  int n_joints() const { return graph.n_joints(); }
  int channels() const { return context.channels; }
};

struct ModelInit {
  double weight_scale = 0.0;   // std of the initial context / graph weights
  double readout_gain = 1.0;   // initial weight on channel 0
  double alpha = 1500.0;
  double eps = 1e-8;
};

ToyModel make_toy_model(ModelVariant variant, const VoxelGrid& grid, const SkeletonGraph& g,
                        const PriorTable& priors, int channels, const ModelInit& init, std::uint64_t seed);

// Intermediates of one forward pass; consumed by a single backward.
struct GradientTape {
  FeatureVolume x;
  ContextOutput context;  // context variants
  FeatureVolume y;        // block output
  Heatmap heatmap;        // post-softmax
  bool consumed = false;
};

struct ForwardResult {
  PoseEstimate pose;
  Heatmap heatmap;
  GlobalAttention ga;
  GradientTape tape;
};

ForwardResult forward(const ToyModel& m, const FeatureVolume& x);

struct Upstream {
  std::vector<Vec3> grad_pose;       // may be empty
  std::vector<double> grad_heatmap;  // may be empty
  std::vector<double> grad_ga;       // may be empty
};

struct ModelGrads {
  std::vector<double> W;
  std::vector<double> d;
  std::vector<double> graph_weights;
  std::vector<double> readout_w;
  std::vector<double> x;
};

// Throws TapeConsumed on a second call with the same tape.
ModelGrads backward(const ToyModel& m, GradientTape& tape, const Upstream& upstream);

struct NamedSpan {
  std::string name;
  std::span<double> values;
};

// Trainable parameters and the matching gradient buffers, in one fixed order.
std::vector<NamedSpan> parameter_views(ToyModel& m);
std::vector<NamedSpan> gradient_views(ModelGrads& g);
std::vector<double> flatten_parameters(ToyModel& m);
void assign_parameters(ToyModel& m, std::span<const double> flat);
std::vector<double> flatten_gradients(ModelGrads& g);

}  // namespace ctxpose
