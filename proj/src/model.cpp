#include "ctxpose/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ctxpose/error.hpp"
#include "ctxpose/rng.hpp"

namespace ctxpose {

ModelVariant parse_model_variant(std::string_view name) {
  if (name == "baseline") return ModelVariant::Baseline;
  if (name == "contextpose") return ModelVariant::ContextPose;
  if (name == "ga_only") return ModelVariant::GlobalOnly;
  if (name == "pa_only") return ModelVariant::PairwiseOnly;
  if (name == "fcn") return ModelVariant::FCN;
  if (name == "gnn") return ModelVariant::GNN;
  if (name == "lcn") return ModelVariant::LCN;
  fail(ErrorCode::InvalidConfig, "unknown model variant '" + std::string(name) + "'");
}

std::string_view to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::Baseline: return "baseline";
    case ModelVariant::ContextPose: return "contextpose";
    case ModelVariant::GlobalOnly: return "ga_only";
    case ModelVariant::PairwiseOnly: return "pa_only";
    case ModelVariant::FCN: return "fcn";
    case ModelVariant::GNN: return "gnn";
    case ModelVariant::LCN: return "lcn";
  }
  return "?";
}

bool uses_graph_layer(ModelVariant v) {
  return v == ModelVariant::FCN || v == ModelVariant::GNN || v == ModelVariant::LCN;
}

namespace {

GnnVariant graph_variant(ModelVariant v) {
  switch (v) {
    case ModelVariant::FCN: return GnnVariant::FCN;
    case ModelVariant::GNN: return GnnVariant::GNN;
    default: return GnnVariant::LCN;
  }
}

// y_{u,q} = x_{u,q} + sum_v S(u,v) W(u,v) x_{v,q}, independently at every voxel.
FeatureVolume graph_block(const ToyModel& m, const FeatureVolume& x) {
  FeatureVolume y = x;
  const std::size_t n = x.grid.size();
  const int ch = x.channels;
  for (int u = 0; u < x.n_joints; ++u) {
    for (int v = 0; v < x.n_joints; ++v) {
      if (!m.structure.at(u, v)) continue;
      const auto w = m.graph_layer.weight(u, v);
      for (int r = 0; r < ch; ++r) {
        double* yr = y.values.data() + y.channel_offset(u, r);
        for (int c = 0; c < ch; ++c) {
          const double wrc = w[static_cast<std::size_t>(r) * ch + c];
          const double* xc = x.values.data() + x.channel_offset(v, c);
          for (std::size_t q = 0; q < n; ++q) yr[q] += wrc * xc[q];
        }
      }
    }
  }
  return y;
}

void check_input(const ToyModel& m, const FeatureVolume& x) {
  if (!(x.grid == m.grid) || x.n_joints != m.n_joints() || x.channels != m.channels()) {
    fail(ErrorCode::ShapeMismatch, "input volume does not match the model");
  }
}

}  // namespace

ToyModel make_toy_model(ModelVariant variant, const VoxelGrid& grid, const SkeletonGraph& g,
                        const PriorTable& priors, int channels, const ModelInit& init, std::uint64_t seed) {
  ToyModel m;
  m.variant = variant;
  m.grid = grid;
  m.graph = g;
  m.priors = priors;
  const int n = g.n_joints();
  m.context = ContextParams(n, channels);
  m.context.alpha = init.alpha;
  m.context.eps = init.eps;
  Rng rng(seed);
  Rng wrng = rng.split(1);
  switch (variant) {
    case ModelVariant::Baseline:
      std::fill(m.context.active.begin(), m.context.active.end(), 0);
      break;
    case ModelVariant::GlobalOnly:
      m.context.mode = AttentionMode::GlobalOnly;
      break;
    case ModelVariant::PairwiseOnly:
      m.context.mode = AttentionMode::PairwiseOnly;
      break;
    default:
      break;
  }
  if (uses_graph_layer(variant)) {
    std::fill(m.context.active.begin(), m.context.active.end(), 0);
    const GnnVariant gv = graph_variant(variant);
    m.graph_layer = GnnLayerParams(gv, default_sharing(gv), n, channels, channels);
    m.structure = build_structure(g, gv, true);
    for (double& w : m.graph_layer.weights) w = init.weight_scale * wrng.normal();
  } else if (variant != ModelVariant::Baseline) {
    for (double& w : m.context.W) w = init.weight_scale * wrng.normal();
  }
  m.readout_w.assign(static_cast<std::size_t>(n) * channels, 0.0);
  for (int u = 0; u < n; ++u) m.readout_w[static_cast<std::size_t>(u) * channels] = init.readout_gain;
  return m;
}

ForwardResult forward(const ToyModel& m, const FeatureVolume& x) {
  check_input(m, x);
  ForwardResult out;
  GradientTape& tape = out.tape;
  tape.x = x;
  if (uses_graph_layer(m.variant)) {
    tape.context.ga = global_attention(x, m.context.d);
    tape.y = graph_block(m, x);
  } else {
    tape.context = context_forward(x, m.graph, m.priors, m.context);
    tape.y = tape.context.y;
  }

  const std::size_t n = x.grid.size();
  const int ch = x.channels;
  Heatmap scores(x.grid, x.n_joints);
  for (int u = 0; u < x.n_joints; ++u) {
    auto s = scores.joint(u);
    for (int c = 0; c < ch; ++c) {
      const double w = m.readout_w[static_cast<std::size_t>(u) * ch + c];
      const auto yc = tape.y.channel(u, c);
      for (std::size_t q = 0; q < n; ++q) s[q] += w * yc[q];
    }
  }
  tape.heatmap = softmax_heatmap(scores);
  out.heatmap = tape.heatmap;
  out.pose = integrate_pose(tape.heatmap);
  out.ga = tape.context.ga;
  return out;
}

ModelGrads backward(const ToyModel& m, GradientTape& tape, const Upstream& up) {
  if (tape.consumed) fail(ErrorCode::TapeConsumed, "gradient tape already consumed");
  tape.consumed = true;
  const FeatureVolume& x = tape.x;
  const std::size_t n = x.grid.size();
  const int nj = x.n_joints;
  const int ch = x.channels;
  const Heatmap& hm = tape.heatmap;
  if (!up.grad_pose.empty() && up.grad_pose.size() != static_cast<std::size_t>(nj)) {
    fail(ErrorCode::ShapeMismatch, "pose gradient shape mismatch");
  }
  if (!up.grad_heatmap.empty() && up.grad_heatmap.size() != hm.values.size()) {
    fail(ErrorCode::ShapeMismatch, "heatmap gradient shape mismatch");
  }

  ModelGrads g;
  g.readout_w.assign(m.readout_w.size(), 0.0);
  std::vector<double> grad_y(x.values.size(), 0.0);
  std::vector<double> gv(n);
  std::vector<Vec3> centers(n);
  for (std::size_t q = 0; q < n; ++q) centers[q] = x.grid.center(q);

  for (int u = 0; u < nj; ++u) {
    const auto v = hm.joint(u);
    for (std::size_t q = 0; q < n; ++q) {
      double val = up.grad_heatmap.empty() ? 0.0 : up.grad_heatmap[u * n + q];
      if (!up.grad_pose.empty()) val += up.grad_pose[u].dot(centers[q]);
      gv[q] = val;
    }
    double mean = 0.0;
    for (std::size_t q = 0; q < n; ++q) mean += v[q] * gv[q];
    for (std::size_t q = 0; q < n; ++q) {
      gv[q] = v[q] * (gv[q] - mean);  // now d/d score
    }
    for (int c = 0; c < ch; ++c) {
      const double w = m.readout_w[static_cast<std::size_t>(u) * ch + c];
      const auto yc = tape.y.channel(u, c);
      double* gyc = grad_y.data() + x.channel_offset(u, c);
      double s = 0.0;
      for (std::size_t q = 0; q < n; ++q) {
        s += gv[q] * yc[q];
        gyc[q] = gv[q] * w;
      }
      g.readout_w[static_cast<std::size_t>(u) * ch + c] = s;
    }
  }

  if (uses_graph_layer(m.variant)) {
    g.graph_weights.assign(m.graph_layer.weights.size(), 0.0);
    g.x = grad_y;
    for (int u = 0; u < nj; ++u) {
      for (int v = 0; v < nj; ++v) {
        if (!m.structure.at(u, v)) continue;
        const auto w = m.graph_layer.weight(u, v);
        double* gw = g.graph_weights.data() + m.graph_layer.offset(u, v);
        for (int r = 0; r < ch; ++r) {
          const double* gyr = grad_y.data() + x.channel_offset(u, r);
          for (int c = 0; c < ch; ++c) {
            const double* xc = x.values.data() + x.channel_offset(v, c);
            double* gxc = g.x.data() + x.channel_offset(v, c);
            const double wrc = w[static_cast<std::size_t>(r) * ch + c];
            double s = 0.0;
            for (std::size_t q = 0; q < n; ++q) {
              s += gyr[q] * xc[q];
              gxc[q] += wrc * gyr[q];
            }
            gw[static_cast<std::size_t>(r) * ch + c] += s;
          }
        }
      }
    }
    // The attention maps only feed the attention loss here.
    const ContextOutput& c = tape.context;
    g.d.assign(m.context.d.size(), 0.0);
    g.W.assign(m.context.W.size(), 0.0);
    if (!up.grad_ga.empty()) {
      for (int v = 0; v < nj; ++v) {
        const auto gav = c.ga.joint(v);
        const double* gg = up.grad_ga.data() + static_cast<std::size_t>(v) * n;
        double mean = 0.0;
        for (std::size_t k = 0; k < n; ++k) mean += gav[k] * gg[k];
        for (std::size_t k = 0; k < n; ++k) {
          const double gl = gav[k] * (gg[k] - mean);
          for (int cc = 0; cc < ch; ++cc) {
            g.d[static_cast<std::size_t>(v) * ch + cc] += gl * x.at(v, cc, k);
            g.x[x.channel_offset(v, cc) + k] += gl * m.context.dv(v)[cc];
          }
        }
      }
    }
    return g;
  }

  ContextGrads cg = context_backward(x, tape.context, m.context, grad_y, up.grad_ga);
  g.W = std::move(cg.W);
  g.d = std::move(cg.d);
  g.x = std::move(cg.x);
  return g;
}

std::vector<NamedSpan> parameter_views(ToyModel& m) {
  std::vector<NamedSpan> v;
  v.push_back({"context.W", m.context.W});
  v.push_back({"context.d", m.context.d});
  v.push_back({"graph.W", m.graph_layer.weights});
  v.push_back({"readout.w", m.readout_w});
  return v;
}

std::vector<NamedSpan> gradient_views(ModelGrads& g) {
  std::vector<NamedSpan> v;
  v.push_back({"context.W", g.W});
  v.push_back({"context.d", g.d});
  v.push_back({"graph.W", g.graph_weights});
  v.push_back({"readout.w", g.readout_w});
  return v;
}

std::vector<double> flatten_parameters(ToyModel& m) {
  std::vector<double> out;
  for (const auto& p : parameter_views(m)) out.insert(out.end(), p.values.begin(), p.values.end());
  return out;
}

void assign_parameters(ToyModel& m, std::span<const double> flat) {
  std::size_t off = 0;
  for (auto& p : parameter_views(m)) {
    if (off + p.values.size() > flat.size()) fail(ErrorCode::ShapeMismatch, "flat parameter vector too short");
    std::copy(flat.begin() + off, flat.begin() + off + p.values.size(), p.values.begin());
    off += p.values.size();
  }
  if (off != flat.size()) fail(ErrorCode::ShapeMismatch, "flat parameter vector too long");
}

std::vector<double> flatten_gradients(ModelGrads& g) {
  std::vector<double> out;
  for (const auto& p : gradient_views(g)) out.insert(out.end(), p.values.begin(), p.values.end());
  return out;
}

}  // namespace ctxpose
