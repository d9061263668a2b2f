#include "ctxpose/metrics.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "ctxpose/error.hpp"

namespace ctxpose {

namespace {

void require_same_shape(const PoseEstimate& a, const PoseEstimate& b) {
  if (a.size() != b.size()) fail(ErrorCode::ShapeMismatch, "pred and gt joint counts differ");
  if (a.size() == 0) fail(ErrorCode::ShapeMismatch, "empty pose");
}

void require_graph(const PoseEstimate& a, const SkeletonGraph& g) {
  if (a.size() != static_cast<std::size_t>(g.n_joints())) {
    fail(ErrorCode::ShapeMismatch, "pose joint count differs from skeleton");
  }
}

Eigen::Matrix3Xd as_matrix(const PoseEstimate& p) {
  Eigen::Matrix3Xd m(3, static_cast<Eigen::Index>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = p[i];
  return m;
}

}  // namespace

double mean_joint_error(const PoseEstimate& pred, const PoseEstimate& gt) {
  require_same_shape(pred, gt);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += (pred[i] - gt[i]).norm();
  return total / static_cast<double>(pred.size());
}

double mpjpe_p1(const PoseEstimate& pred, const PoseEstimate& gt, int root) {
  require_same_shape(pred, gt);
  if (root < 0 || static_cast<std::size_t>(root) >= pred.size()) {
    fail(ErrorCode::IndexOutOfRange, "root joint out of range");
  }
  const Vec3 shift = gt[root] - pred[root];
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += (pred[i] + shift - gt[i]).norm();
  return total / static_cast<double>(pred.size());
}

RigidAlignment procrustes_align(const PoseEstimate& pred, const PoseEstimate& gt, bool with_scale) {
  require_same_shape(pred, gt);
  if (pred.size() < 3) fail(ErrorCode::DegenerateConfiguration, "alignment needs at least 3 joints");
  const Eigen::Matrix3Xd P = as_matrix(pred);
  const Eigen::Matrix3Xd G = as_matrix(gt);
  const Vec3 pc = P.rowwise().mean();
  const Vec3 gc = G.rowwise().mean();
  const Eigen::Matrix3Xd Pc = P.colwise() - pc;
  const Eigen::Matrix3Xd Gc = G.colwise() - gc;

  Eigen::JacobiSVD<Eigen::Matrix3Xd> gsvd(Gc);
  const auto gs = gsvd.singularValues();
  if (!(gs[1] > 1e-9 * std::max(gs[0], 1e-300))) {
    fail(ErrorCode::DegenerateConfiguration, "ground-truth joints are collinear");
  }

  const Eigen::Matrix3d H = Pc * Gc.transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d U = svd.matrixU();
  const Eigen::Matrix3d V = svd.matrixV();
  Eigen::Vector3d d(1.0, 1.0, (V * U.transpose()).determinant() < 0.0 ? -1.0 : 1.0);

  RigidAlignment out;
  out.rotation = V * d.asDiagonal() * U.transpose();
  if (with_scale) {
    const double var = Pc.squaredNorm();
    if (!(var > 0.0)) fail(ErrorCode::DegenerateConfiguration, "prediction collapses to a point");
    out.scale = svd.singularValues().dot(d) / var;
  }
  out.translation = gc - out.scale * (out.rotation * pc);
  return out;
}

double mpjpe_p2(const PoseEstimate& pred, const PoseEstimate& gt, bool with_scale) {
  const RigidAlignment a = procrustes_align(pred, gt, with_scale);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += (a.apply(pred[i]) - gt[i]).norm();
  return total / static_cast<double>(pred.size());
}

double mplle(const PoseEstimate& pred, const PoseEstimate& gt, const SkeletonGraph& g) {
  require_same_shape(pred, gt);
  require_graph(pred, g);
  if (g.edges().empty()) return 0.0;
  double total = 0.0;
  for (const auto& [u, v] : g.edges()) {
    total += std::abs((pred[u] - pred[v]).norm() - (gt[u] - gt[v]).norm());
  }
  return total / static_cast<double>(g.edges().size());
}

double mplae(const PoseEstimate& pred, const PoseEstimate& gt, const SkeletonGraph& g) {
  require_same_shape(pred, gt);
  require_graph(pred, g);
  if (g.edges().empty()) return 0.0;
  double total = 0.0;
  for (const auto& [u, v] : g.edges()) {
    const Vec3 a = pred[v] - pred[u];
    const Vec3 b = gt[v] - gt[u];
    const double la = a.norm();
    const double lb = b.norm();
    if (!(la > 1e-6) || !(lb > 1e-6)) {
      fail(ErrorCode::ZeroLengthLimb,
           "limb (" + std::to_string(u) + "," + std::to_string(v) + ") has zero length");
    }
    total += std::acos(std::clamp(a.dot(b) / (la * lb), -1.0, 1.0));
  }
  return total / static_cast<double>(g.edges().size());
}

PckAuc pck_auc(std::span<const PoseEstimate> preds, std::span<const PoseEstimate> gts,
               const PckConfig& cfg) {
  if (preds.size() != gts.size()) fail(ErrorCode::ShapeMismatch, "pred and gt sample counts differ");
  if (!(cfg.curve_step_mm > 0.0)) fail(ErrorCode::InvalidConfig, "PCK curve step must be positive");
  std::vector<double> errors;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    require_same_shape(preds[s], gts[s]);
    for (std::size_t j = 0; j < preds[s].size(); ++j) errors.push_back((preds[s][j] - gts[s][j]).norm());
  }
  if (errors.empty()) fail(ErrorCode::EmptyDataset, "no joints to score");
  const auto fraction_within = [&](double t) {
    std::size_t hit = 0;
    for (double e : errors) hit += e <= t ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(errors.size());
  };
  PckAuc out;
  out.pck = fraction_within(cfg.threshold_mm);
  const auto steps = static_cast<int>(std::floor(cfg.curve_max_mm / cfg.curve_step_mm + 1e-9));
  double acc = 0.0;
  for (int i = 0; i <= steps; ++i) acc += fraction_within(i * cfg.curve_step_mm);
  out.auc = acc / (steps + 1);
  return out;
}

MetricReport evaluate(std::span<const PoseEstimate> preds, std::span<const PoseEstimate> gts,
                      const SkeletonGraph& g, const PckConfig& pck, int root) {
  if (preds.size() != gts.size()) fail(ErrorCode::DataMismatch, "pred and gt sample counts differ");
  if (preds.empty()) fail(ErrorCode::EmptyDataset, "nothing to evaluate");
  MetricReport r;
  std::vector<PoseEstimate> root_aligned;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    SampleMetrics m;
    m.mpjpe_p1 = mpjpe_p1(preds[s], gts[s], root);
    if (preds[s].size() >= 3) {
      m.mpjpe_p2 = mpjpe_p2(preds[s], gts[s], false);
      m.mpjpe_p2_scaled = mpjpe_p2(preds[s], gts[s], true);
    } else {
      m.mpjpe_p2 = m.mpjpe_p2_scaled = m.mpjpe_p1;
    }
    m.mplle = mplle(preds[s], gts[s], g);
    m.mplae = mplae(preds[s], gts[s], g);
    r.per_sample.push_back(m);
    PoseEstimate aligned = preds[s];
    const Vec3 shift = gts[s][root] - preds[s][root];
    for (auto& j : aligned.joints) j += shift;
    root_aligned.push_back(std::move(aligned));
  }
  const double n = static_cast<double>(preds.size());
  for (const auto& m : r.per_sample) {
    r.mpjpe_p1 += m.mpjpe_p1 / n;
    r.mpjpe_p2 += m.mpjpe_p2 / n;
    r.mpjpe_p2_scaled += m.mpjpe_p2_scaled / n;
    r.mplle += m.mplle / n;
    r.mplae += m.mplae / n;
  }
  const PckAuc pa = pck_auc(root_aligned, gts, pck);
  r.pck = pa.pck;
  r.auc = pa.auc;
  return r;
}

}  // namespace ctxpose
