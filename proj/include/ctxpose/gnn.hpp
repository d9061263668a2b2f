#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "ctxpose/skeleton.hpp"

namespace ctxpose {

enum class GnnVariant { FCN, GNN, LCN };

GnnVariant parse_gnn_variant(std::string_view name);
std::string_view to_string(GnnVariant v);

// Binary prior structure S: S(u, v) = 1 when v is a contextual joint of u.
struct StructureMatrix {
  int n_joints = 0;
  std::vector<std::uint8_t> mask;  // row-major N x N

  std::uint8_t at(int u, int v) const { return mask[static_cast<std::size_t>(u) * n_joints + v]; }
};

// FCN: all ones. GNN/LCN: ones on edges, plus the diagonal when self_loop.
StructureMatrix build_structure(const SkeletonGraph& g, GnnVariant variant, bool self_loop = true);

// Weights W(u, v) of shape m_out x m_in, either one shared matrix or one per
// ordered joint pair.
struct GnnLayerParams {
  GnnVariant variant = GnnVariant::LCN;
  bool shared = false;
  int n_joints = 0;
  int m_in = 0;
  int m_out = 0;
  std::vector<double> weights;

  GnnLayerParams() = default;
  GnnLayerParams(GnnVariant v, bool share, int n, int in, int out);

  std::size_t matrix_size() const { return static_cast<std::size_t>(m_in) * m_out; }
  std::size_t offset(int u, int v) const {
    return shared ? 0 : (static_cast<std::size_t>(u) * n_joints + v) * matrix_size();
  }
  std::span<const double> weight(int u, int v) const { return {weights.data() + offset(u, v), matrix_size()}; }
  std::span<double> weight(int u, int v) { return {weights.data() + offset(u, v), matrix_size()}; }
};

// GNN shares one matrix; FCN and LCN use unshared per-pair weights.
bool default_sharing(GnnVariant v);

// Joint-level features, values[u * width + c].
struct JointFeatures {
  int n_joints = 0;
  int width = 0;
  std::vector<double> values;

  JointFeatures() = default;
  JointFeatures(int n, int w) : n_joints(n), width(w), values(static_cast<std::size_t>(n) * w, 0.0) {}
  std::span<const double> row(int u) const { return {values.data() + static_cast<std::size_t>(u) * width, static_cast<std::size_t>(width)}; }
  std::span<double> row(int u) { return {values.data() + static_cast<std::size_t>(u) * width, static_cast<std::size_t>(width)}; }
};

// y_u = sum_v S(u, v) W(u, v) x_v, summed in ascending v. No activation.
JointFeatures layer_forward(const JointFeatures& x, const StructureMatrix& s, const GnnLayerParams& p);

// Registered update functions f(x_u, a_u) of the collect/aggregate/update form.
//   add:            a_u; the joint's own term enters through the diagonal of S.
//   concat_affine:  relu(A [x_u; a_u] + b)
//   gated_add:      (1 - g) * x_u + g * a_u, g = sigmoid(A [x_u; a_u] + b);
//                   requires m_in == m_out
enum class UpdateFunction { Add, ConcatAffine, GatedAdd };

UpdateFunction parse_update_function(std::string_view name);

struct UpdateParams {
  std::vector<double> affine;  // m_out x (m_in + m_out), row-major
  std::vector<double> bias;    // m_out
  bool relu = true;            // concat_affine only
};

// Collect phi_v = S(u, v) W(u, v) x_v in `collect_order` (ascending when
// empty), aggregate by a sum in canonical ascending-v order, update with f.
JointFeatures cau_forward(const JointFeatures& x, const SkeletonGraph& g, const GnnLayerParams& p,
                          UpdateFunction f, const UpdateParams& up = {},
                          std::span<const int> collect_order = {}, bool self_loop = true);

}  // namespace ctxpose
