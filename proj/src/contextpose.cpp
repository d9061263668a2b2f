#include "ctxpose/contextpose.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "ctxpose/error.hpp"

namespace ctxpose {

namespace {

// Neumaier-compensated running sum.
struct CompensatedSum {
  double sum = 0.0;
  double carry = 0.0;
  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      carry += (sum - t) + x;
    } else {
      carry += (x - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + carry; }
};

void check_volume(const FeatureVolume& x, const ContextParams& p) {
  if (p.channels <= 0) fail(ErrorCode::ShapeMismatch, "feature width M must be positive");
  if (x.n_joints != p.n_joints || x.channels != p.channels) {
    fail(ErrorCode::ShapeMismatch, "feature volume shape does not match context parameters");
  }
  if (x.values.size() != static_cast<std::size_t>(x.n_joints) * x.channels * x.grid.size()) {
    fail(ErrorCode::ShapeMismatch, "feature volume storage is inconsistent");
  }
}

// z = W x_v over all voxels: z[r * n + k] = sum_c W[r][c] x(v, c, k).
std::vector<double> transform(const FeatureVolume& x, int v, std::span<const double> w) {
  const std::size_t n = x.grid.size();
  const int m = x.channels;
  std::vector<double> z(static_cast<std::size_t>(m) * n, 0.0);
  for (int r = 0; r < m; ++r) {
    double* zr = z.data() + r * n;
    for (int c = 0; c < m; ++c) {
      const double wrc = w[static_cast<std::size_t>(r) * m + c];
      const double* xc = x.values.data() + x.channel_offset(v, c);
      for (std::size_t k = 0; k < n; ++k) zr[k] += wrc * xc[k];
    }
  }
  return z;
}

std::vector<std::array<int, 3>> voxel_coords(const VoxelGrid& grid) {
  std::vector<std::array<int, 3>> out(grid.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = grid.unflat(i);
  return out;
}

}  // namespace

ContextParams::ContextParams(int n, int m) : n_joints(n), channels(m) {
  if (n <= 0) fail(ErrorCode::ShapeMismatch, "joint count must be positive");
  if (m <= 0) fail(ErrorCode::ShapeMismatch, "feature width M must be positive");
  W.assign(static_cast<std::size_t>(n) * n * m * m, 0.0);
  d.assign(static_cast<std::size_t>(n) * m, 0.0);
  active.assign(static_cast<std::size_t>(n) * n, 1);
}

GlobalAttention global_attention(const FeatureVolume& x, std::span<const double> d) {
  if (x.channels <= 0) fail(ErrorCode::ShapeMismatch, "feature width M must be positive");
  if (d.size() != static_cast<std::size_t>(x.n_joints) * x.channels) {
    fail(ErrorCode::ShapeMismatch, "attention vectors d must be N x M");
  }
  const std::size_t n = x.grid.size();
  GlobalAttention ga{x.grid, x.n_joints, std::vector<double>(static_cast<std::size_t>(x.n_joints) * n, 0.0)};
  for (int v = 0; v < x.n_joints; ++v) {
    auto out = ga.joint(v);
    for (int c = 0; c < x.channels; ++c) {
      const double dc = d[static_cast<std::size_t>(v) * x.channels + c];
      const auto xc = x.channel(v, c);
      for (std::size_t k = 0; k < n; ++k) out[k] += dc * xc[k];
    }
    const double mx = *std::max_element(out.begin(), out.end());
    double total = 0.0;
    for (auto& val : out) {
      val = std::exp(val - mx);
      total += val;
    }
    const double inv = 1.0 / total;
    for (auto& val : out) val *= inv;
  }
  return ga;
}

std::vector<double> offset_kernel_table(const VoxelGrid& grid, const LimbPrior& prior, double alpha,
                                        double eps) {
  const double width = 2.0 * alpha * prior.sigma * prior.sigma + eps;
  if (!(width > 0.0)) fail(ErrorCode::InvalidConfig, "pairwise kernel width must be positive");
  std::vector<double> table(grid.size());
  for (int dx = 0; dx < grid.dims[0]; ++dx) {
    for (int dy = 0; dy < grid.dims[1]; ++dy) {
      for (int dz = 0; dz < grid.dims[2]; ++dz) {
        const Vec3 off(dx * grid.spacing[0], dy * grid.spacing[1], dz * grid.spacing[2]);
        const double r = off.norm() - prior.mu;
        table[grid.flat(dx, dy, dz)] = std::exp(-(r * r) / width);
      }
    }
  }
  return table;
}

PairwiseKernel pairwise_kernel(const VoxelGrid& grid, const LimbPrior& prior, std::span<const double> ga,
                               double alpha, double eps) {
  const std::size_t n = grid.size();
  if (ga.size() != n) fail(ErrorCode::ShapeMismatch, "global attention row does not match grid");
  if (!(prior.sigma >= 0.0)) fail(ErrorCode::InvalidConfig, "limb prior sigma must be >= 0");
  const auto table = offset_kernel_table(grid, prior, alpha, eps);
  const auto coords = voxel_coords(grid);

  PairwiseKernel pk;
  pk.connected = true;
  pk.n_voxels = n;
  pk.values.resize(n * n);
  pk.normalizer.resize(n);
  for (std::size_t q = 0; q < n; ++q) {
    const auto& cq = coords[q];
    double* row = pk.values.data() + q * n;
    CompensatedSum z;
    for (std::size_t k = 0; k < n; ++k) {
      const auto& ck = coords[k];
      row[k] = table[grid.flat(std::abs(cq[0] - ck[0]), std::abs(cq[1] - ck[1]), std::abs(cq[2] - ck[2]))];
      z.add(ga[k] * row[k]);
    }
    const double zq = z.value();
    if (!(zq > 0.0) || !std::isfinite(zq)) {
      fail(ErrorCode::DegenerateNormalizer,
           "pairwise normalizer vanished at voxel " + std::to_string(q) +
               "; alpha * sigma^2 + eps is too small for this grid");
    }
    pk.normalizer[q] = zq;
    const double inv = 1.0 / zq;
    for (std::size_t k = 0; k < n; ++k) row[k] *= inv;
  }
  return pk;
}

PairwiseKernel non_connected_rule(int u, int v, const SkeletonGraph& g) {
  if (g.connected(u, v)) {
    fail(ErrorCode::InvalidEdge, "(" + std::to_string(u) + "," + std::to_string(v) + ") is an edge");
  }
  PairwiseKernel pk;
  pk.u = u;
  pk.v = v;
  pk.connected = false;
  return pk;
}

KernelSet build_kernels(const VoxelGrid& grid, const SkeletonGraph& g, const PriorTable& priors,
                        const GlobalAttention& ga, const ContextParams& params) {
  const int n = params.n_joints;
  if (g.n_joints() != n) fail(ErrorCode::ShapeMismatch, "graph size differs from context parameters");
  KernelSet ks;
  ks.n_joints = n;
  ks.pairs.resize(static_cast<std::size_t>(n) * n);
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      PairwiseKernel pk;
      if (g.connected(u, v) && params.mode != AttentionMode::GlobalOnly && params.is_active(u, v)) {
        pk = pairwise_kernel(grid, priors.get(u, v), ga.joint(v), params.alpha, params.eps);
      }
      pk.u = u;
      pk.v = v;
      ks.pairs[static_cast<std::size_t>(u) * n + v] = std::move(pk);
    }
  }
  return ks;
}

FeatureVolume context_update(const FeatureVolume& x, const GlobalAttention& ga, const KernelSet& kernels,
                             const ContextParams& params) {
  check_volume(x, params);
  const std::size_t n = x.grid.size();
  const int m = x.channels;
  if (ga.n_joints != x.n_joints || ga.values.size() != static_cast<std::size_t>(x.n_joints) * n ||
      kernels.n_joints != x.n_joints) {
    fail(ErrorCode::ShapeMismatch, "attention shapes do not match the feature volume");
  }
  FeatureVolume y = x;
  std::vector<double> w(n);
  std::vector<double> acc(static_cast<std::size_t>(m));
  for (int u = 0; u < x.n_joints; ++u) {
    for (int v = 0; v < x.n_joints; ++v) {
      if (!params.is_active(u, v)) continue;
      const auto z = transform(x, v, params.w(u, v));
      const auto g = ga.joint(v);
      const PairwiseKernel& pk = kernels.at(u, v);
      if (!pk.connected) {
        // P == 1: the message is the same at every q.
        for (int c = 0; c < m; ++c) {
          double s = 0.0;
          const double* zc = z.data() + c * n;
          for (std::size_t k = 0; k < n; ++k) s += g[k] * zc[k];
          acc[c] = s;
        }
        for (int c = 0; c < m; ++c) {
          auto yc = y.channel(u, c);
          for (std::size_t q = 0; q < n; ++q) yc[q] += acc[c];
        }
        continue;
      }
      if (pk.n_voxels != n) fail(ErrorCode::ShapeMismatch, "pairwise kernel does not match grid");
      for (std::size_t q = 0; q < n; ++q) {
        const double* prow = pk.values.data() + q * n;
        for (std::size_t k = 0; k < n; ++k) w[k] = g[k] * prow[k];
        for (int c = 0; c < m; ++c) {
          const double* zc = z.data() + c * n;
          double s = 0.0;
          for (std::size_t k = 0; k < n; ++k) s += w[k] * zc[k];
          y.values[y.channel_offset(u, c) + q] += s;
        }
      }
    }
  }
  return y;
}

ContextOutput context_forward(const FeatureVolume& x, const SkeletonGraph& g, const PriorTable& priors,
                              const ContextParams& params) {
  check_volume(x, params);
  ContextOutput out;
  if (params.mode == AttentionMode::PairwiseOnly) {
    const std::vector<double> zero(params.d.size(), 0.0);
    out.ga = global_attention(x, zero);
  } else {
    out.ga = global_attention(x, params.d);
  }
  out.kernels = build_kernels(x.grid, g, priors, out.ga, params);
  out.y = context_update(x, out.ga, out.kernels, params);
  return out;
}

ContextGrads context_backward(const FeatureVolume& x, const ContextOutput& fwd, const ContextParams& params,
                              std::span<const double> grad_y, std::span<const double> grad_ga) {
  check_volume(x, params);
  const std::size_t n = x.grid.size();
  const int m = x.channels;
  const int nj = x.n_joints;
  if (grad_y.size() != x.values.size()) fail(ErrorCode::ShapeMismatch, "grad_y shape mismatch");
  if (!grad_ga.empty() && grad_ga.size() != fwd.ga.values.size()) {
    fail(ErrorCode::ShapeMismatch, "grad_ga shape mismatch");
  }

  ContextGrads gr;
  gr.W.assign(params.W.size(), 0.0);
  gr.d.assign(params.d.size(), 0.0);
  gr.x.assign(grad_y.begin(), grad_y.end());  // residual path
  std::vector<double> g_ga(fwd.ga.values.size(), 0.0);
  if (!grad_ga.empty()) std::copy(grad_ga.begin(), grad_ga.end(), g_ga.begin());

  std::vector<double> w(n);
  std::vector<double> a(n);
  std::vector<double> r(static_cast<std::size_t>(m) * n);
  std::vector<double> cc(n);
  std::vector<double> gz(static_cast<std::size_t>(m) * n);
  std::vector<double> msg(static_cast<std::size_t>(m));

  for (int u = 0; u < nj; ++u) {
    const double* gy = grad_y.data() + x.channel_offset(u, 0);  // [c * n + q]
    for (int v = 0; v < nj; ++v) {
      if (!params.is_active(u, v)) continue;
      const auto wuv = params.w(u, v);
      const auto z = transform(x, v, wuv);
      const auto g = fwd.ga.joint(v);
      double* gg = g_ga.data() + static_cast<std::size_t>(v) * n;
      const PairwiseKernel& pk = fwd.kernels.at(u, v);

      if (!pk.connected) {
        for (int c = 0; c < m; ++c) {
          double s = 0.0;
          for (std::size_t q = 0; q < n; ++q) s += gy[c * n + q];
          msg[c] = s;  // total upstream gradient per channel
        }
        for (std::size_t k = 0; k < n; ++k) {
          double dot = 0.0;
          for (int c = 0; c < m; ++c) {
            gz[c * n + k] = g[k] * msg[c];
            dot += msg[c] * z[c * n + k];
          }
          gg[k] += dot;
        }
      } else {
        // Pass 1: a(q) = gy(q) . m(q).
        for (std::size_t q = 0; q < n; ++q) {
          const double* prow = pk.values.data() + q * n;
          for (std::size_t k = 0; k < n; ++k) w[k] = g[k] * prow[k];
          double aq = 0.0;
          for (int c = 0; c < m; ++c) {
            const double* zc = z.data() + c * n;
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += w[k] * zc[k];
            aq += gy[c * n + q] * s;
          }
          a[q] = aq;
        }
        // Pass 2: r_k = sum_q P(q,k) gy(q), cc_k = sum_q P(q,k) a(q).
        std::fill(r.begin(), r.end(), 0.0);
        std::fill(cc.begin(), cc.end(), 0.0);
        for (std::size_t q = 0; q < n; ++q) {
          const double* prow = pk.values.data() + q * n;
          for (int c = 0; c < m; ++c) {
            const double gyq = gy[c * n + q];
            double* rc = r.data() + c * n;
            for (std::size_t k = 0; k < n; ++k) rc[k] += prow[k] * gyq;
          }
          const double aq = a[q];
          for (std::size_t k = 0; k < n; ++k) cc[k] += prow[k] * aq;
        }
        // dm(q)/dG_k = P(q,k) (z_k - m(q)), which carries the normalizer's
        // dependence on the global attention.
        for (std::size_t k = 0; k < n; ++k) {
          double dot = 0.0;
          for (int c = 0; c < m; ++c) {
            gz[c * n + k] = g[k] * r[c * n + k];
            dot += r[c * n + k] * z[c * n + k];
          }
          gg[k] += dot - cc[k];
        }
      }

      // z = W x_v.
      double* gw = gr.W.data() + (static_cast<std::size_t>(u) * nj + v) * params.block();
      for (int rr = 0; rr < m; ++rr) {
        const double* gzr = gz.data() + rr * n;
        for (int c = 0; c < m; ++c) {
          const double* xc = x.values.data() + x.channel_offset(v, c);
          double s = 0.0;
          for (std::size_t k = 0; k < n; ++k) s += gzr[k] * xc[k];
          gw[rr * m + c] += s;
          const double wrc = wuv[static_cast<std::size_t>(rr) * m + c];
          double* gxc = gr.x.data() + x.channel_offset(v, c);
          for (std::size_t k = 0; k < n; ++k) gxc[k] += wrc * gzr[k];
        }
      }
    }
  }

  if (params.mode == AttentionMode::PairwiseOnly) return gr;

  // Softmax backward into d and x.
  for (int v = 0; v < nj; ++v) {
    const auto g = fwd.ga.joint(v);
    const double* gg = g_ga.data() + static_cast<std::size_t>(v) * n;
    double mean = 0.0;
    for (std::size_t k = 0; k < n; ++k) mean += g[k] * gg[k];
    const auto dv = params.dv(v);
    for (std::size_t k = 0; k < n; ++k) {
      const double gl = g[k] * (gg[k] - mean);
      for (int c = 0; c < m; ++c) {
        gr.d[static_cast<std::size_t>(v) * m + c] += gl * x.at(v, c, k);
        gr.x[x.channel_offset(v, c) + k] += gl * dv[c];
      }
    }
  }
  return gr;
}

}  // namespace ctxpose
