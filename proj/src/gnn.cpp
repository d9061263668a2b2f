#include "ctxpose/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "ctxpose/error.hpp"

namespace ctxpose {

GnnVariant parse_gnn_variant(std::string_view name) {
  if (name == "fcn") return GnnVariant::FCN;
  if (name == "gnn") return GnnVariant::GNN;
  if (name == "lcn") return GnnVariant::LCN;
  fail(ErrorCode::InvalidConfig, "unknown graph layer variant '" + std::string(name) + "'");
}

std::string_view to_string(GnnVariant v) {
  switch (v) {
    case GnnVariant::FCN: return "fcn";
    case GnnVariant::GNN: return "gnn";
    case GnnVariant::LCN: return "lcn";
  }
  return "?";
}

bool default_sharing(GnnVariant v) { return v == GnnVariant::GNN; }

StructureMatrix build_structure(const SkeletonGraph& g, GnnVariant variant, bool self_loop) {
  const int n = g.n_joints();
  StructureMatrix s{n, std::vector<std::uint8_t>(static_cast<std::size_t>(n) * n, 0)};
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      bool on = false;
      if (variant == GnnVariant::FCN) {
        on = true;
      } else {
        on = g.connected(u, v) || (self_loop && u == v);
      }
      s.mask[static_cast<std::size_t>(u) * n + v] = on ? 1 : 0;
    }
  }
  return s;
}

GnnLayerParams::GnnLayerParams(GnnVariant v, bool share, int n, int in, int out)
    : variant(v), shared(share), n_joints(n), m_in(in), m_out(out) {
  if (n <= 0 || in <= 0 || out <= 0) fail(ErrorCode::ShapeMismatch, "layer dimensions must be positive");
  weights.assign(share ? matrix_size() : static_cast<std::size_t>(n) * n * matrix_size(), 0.0);
}

namespace {

void check_shapes(const JointFeatures& x, const GnnLayerParams& p) {
  if (x.n_joints != p.n_joints || x.width != p.m_in) {
    fail(ErrorCode::ShapeMismatch, "joint features do not match layer input shape");
  }
  if (x.values.size() != static_cast<std::size_t>(x.n_joints) * x.width) {
    fail(ErrorCode::ShapeMismatch, "joint feature storage is inconsistent");
  }
}

// out += W x for an m_out x m_in matrix.
void add_matvec(std::span<const double> w, std::span<const double> x, std::span<double> out) {
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < out.size(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * x[c];
    out[r] += acc;
  }
}

}  // namespace

JointFeatures layer_forward(const JointFeatures& x, const StructureMatrix& s, const GnnLayerParams& p) {
  check_shapes(x, p);
  if (s.n_joints != x.n_joints) fail(ErrorCode::ShapeMismatch, "structure matrix size differs");
  JointFeatures y(x.n_joints, p.m_out);
  for (int u = 0; u < x.n_joints; ++u) {
    for (int v = 0; v < x.n_joints; ++v) {
      if (s.at(u, v)) add_matvec(p.weight(u, v), x.row(v), y.row(u));
    }
  }
  return y;
}

UpdateFunction parse_update_function(std::string_view name) {
  if (name == "add") return UpdateFunction::Add;
  if (name == "concat_affine") return UpdateFunction::ConcatAffine;
  if (name == "gated_add") return UpdateFunction::GatedAdd;
  fail(ErrorCode::UnknownUpdateFunction, "no update function named '" + std::string(name) + "'");
}

JointFeatures cau_forward(const JointFeatures& x, const SkeletonGraph& g, const GnnLayerParams& p,
                          UpdateFunction f, const UpdateParams& up, std::span<const int> collect_order,
                          bool self_loop) {
  check_shapes(x, p);
  const int n = x.n_joints;
  if (g.n_joints() != n) fail(ErrorCode::ShapeMismatch, "graph size differs from features");
  std::vector<int> order(collect_order.begin(), collect_order.end());
  if (order.empty()) {
    for (int v = 0; v < n; ++v) order.push_back(v);
  }
  if (order.size() != static_cast<std::size_t>(n)) {
    fail(ErrorCode::ShapeMismatch, "collection order must list every joint once");
  }
  const std::size_t cat = static_cast<std::size_t>(p.m_in) + p.m_out;
  if (f != UpdateFunction::Add) {
    if (up.affine.size() != static_cast<std::size_t>(p.m_out) * cat ||
        up.bias.size() != static_cast<std::size_t>(p.m_out)) {
      fail(ErrorCode::ShapeMismatch, "update parameters do not match layer widths");
    }
  }
  if (f == UpdateFunction::GatedAdd && p.m_in != p.m_out) {
    fail(ErrorCode::ShapeMismatch, "gated_add needs equal input and output widths");
  }

  const StructureMatrix s = build_structure(g, p.variant, self_loop);
  JointFeatures y(n, p.m_out);
  std::vector<std::pair<int, std::vector<double>>> collected;
  std::vector<double> agg(static_cast<std::size_t>(p.m_out));
  std::vector<double> joined(cat);
  for (int u = 0; u < n; ++u) {
    // Collection.
    collected.clear();
    for (int v : order) {
      if (!s.at(u, v)) continue;
      std::vector<double> phi(static_cast<std::size_t>(p.m_out), 0.0);
      add_matvec(p.weight(u, v), x.row(v), phi);
      collected.emplace_back(v, std::move(phi));
    }
    // Aggregation: a sum, canonicalized to ascending v.
    std::sort(collected.begin(), collected.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::fill(agg.begin(), agg.end(), 0.0);
    for (const auto& [v, phi] : collected) {
      for (std::size_t c = 0; c < agg.size(); ++c) agg[c] += phi[c];
    }
    // Update.
    auto out = y.row(u);
    if (f == UpdateFunction::Add) {
      std::copy(agg.begin(), agg.end(), out.begin());
      continue;
    }
    const auto xu = x.row(u);
    std::copy(xu.begin(), xu.end(), joined.begin());
    std::copy(agg.begin(), agg.end(), joined.begin() + p.m_in);
    for (int r = 0; r < p.m_out; ++r) {
      double z = up.bias[r];
      for (std::size_t c = 0; c < cat; ++c) z += up.affine[r * cat + c] * joined[c];
      if (f == UpdateFunction::ConcatAffine) {
        out[r] = up.relu ? std::max(z, 0.0) : z;
      } else {
        const double gate = 1.0 / (1.0 + std::exp(-z));
        out[r] = (1.0 - gate) * xu[r] + gate * agg[r];
      }
    }
  }
  return y;
}

}  // namespace ctxpose
