#include "ctxpose/psm.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "ctxpose/error.hpp"
#include "ctxpose/metrics.hpp"

namespace ctxpose {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void validate_unary(const UnaryScores& unary, std::size_t n_joints) {
  if (static_cast<std::size_t>(unary.n_joints) != n_joints) {
    fail(ErrorCode::ShapeMismatch, "unary joint count differs from skeleton");
  }
  if (unary.values.size() != n_joints * unary.grid.size()) {
    fail(ErrorCode::ShapeMismatch, "unary values do not match grid size");
  }
  for (double v : unary.values) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      fail(ErrorCode::InvalidConfig, "unary scores must be finite and nonnegative");
    }
  }
}

void validate_assignment(const Assignment& a, const UnaryScores& unary) {
  if (a.size() != static_cast<std::size_t>(unary.n_joints)) {
    fail(ErrorCode::ShapeMismatch, "assignment length differs from joint count");
  }
  for (auto k : a) {
    if (k >= unary.grid.size()) fail(ErrorCode::IndexOutOfRange, "assignment voxel out of range");
  }
}

}  // namespace

PsmConfig default_psm_config(const VoxelGrid& grid) {
  PsmConfig cfg;
  cfg.epsilon_mm = 0.5 * grid.voxel_diagonal();
  return cfg;
}

int hard_pairwise(const Vec3& q, const Vec3& k, const LimbPrior& prior, const PsmConfig& cfg) {
  const double d = (q - k).norm();
  return (d >= prior.mu - cfg.epsilon_mm && d <= prior.mu + cfg.epsilon_mm) ? 1 : 0;
}

double log_energy(const Assignment& assign, const UnaryScores& unary, const SkeletonGraph& g,
                  const PriorTable& priors, const PsmConfig& cfg) {
  validate_assignment(assign, unary);
  double total = 0.0;
  for (int u = 0; u < unary.n_joints; ++u) total += std::log(unary.joint(u)[assign[u]]);
  for (const auto& [u, v] : g.edges()) {
    if (!hard_pairwise(unary.grid.center(assign[u]), unary.grid.center(assign[v]), priors.get(u, v), cfg)) {
      return kNegInf;
    }
  }
  return total;
}

double energy(const Assignment& assign, const UnaryScores& unary, const SkeletonGraph& g,
              const PriorTable& priors, const PsmConfig& cfg) {
  return std::exp(log_energy(assign, unary, g, priors, cfg));
}

MapResult brute_force_map(const UnaryScores& unary, const SkeletonGraph& g, const PriorTable& priors,
                          const PsmConfig& cfg) {
  const auto n = static_cast<std::size_t>(g.n_joints());
  validate_unary(unary, n);
  const std::size_t n_vox = unary.grid.size();
  double space = 1.0;
  for (std::size_t i = 0; i < n; ++i) space *= static_cast<double>(n_vox);
  if (space > static_cast<double>(cfg.max_search)) {
    fail(ErrorCode::SearchSpaceTooLarge,
         "|grid|^N = " + std::to_string(space) + " exceeds cap " + std::to_string(cfg.max_search));
  }

  // Precomputed log unaries and edge compatibility tables.
  std::vector<double> logx(unary.values.size());
  for (std::size_t i = 0; i < logx.size(); ++i) logx[i] = std::log(unary.values[i]);
  std::vector<std::vector<char>> compat;
  for (const auto& [u, v] : g.edges()) {
    std::vector<char> table(n_vox * n_vox);
    for (std::size_t a = 0; a < n_vox; ++a) {
      for (std::size_t b = 0; b < n_vox; ++b) {
        table[a * n_vox + b] = static_cast<char>(
            hard_pairwise(unary.grid.center(a), unary.grid.center(b), priors.get(u, v), cfg));
      }
    }
    compat.push_back(std::move(table));
  }

  MapResult best;
  best.assignment.assign(n, 0);
  best.log_energy = kNegInf;
  Assignment cur(n, 0);
  while (true) {
    bool feasible = true;
    for (std::size_t e = 0; e < g.edges().size() && feasible; ++e) {
      const auto& [u, v] = g.edges()[e];
      feasible = compat[e][cur[u] * n_vox + cur[v]] != 0;
    }
    if (feasible) {
      double total = 0.0;
      for (std::size_t u = 0; u < n; ++u) total += logx[u * n_vox + cur[u]];
      if (total > best.log_energy) {
        best.log_energy = total;
        best.assignment = cur;
      }
    }
    // Odometer with the last joint fastest: enumerates in lexicographic order.
    bool done = true;
    for (std::size_t pos = n; pos-- > 0;) {
      if (++cur[pos] < n_vox) {
        done = false;
        break;
      }
      cur[pos] = 0;
    }
    if (done) break;
  }
  best.log_energy = log_energy(best.assignment, unary, g, priors, cfg);
  best.energy = std::exp(best.log_energy);
  return best;
}

DpResult dp_map(const UnaryScores& unary, const RootedTree& tree, const PriorTable& priors,
                const PsmConfig& cfg) {
  const std::size_t n = tree.size();
  validate_unary(unary, n);
  const std::size_t n_vox = unary.grid.size();
  std::vector<Vec3> centers(n_vox);
  for (std::size_t k = 0; k < n_vox; ++k) centers[k] = unary.grid.center(k);

  // ylog[u][q]: log-likelihood of the subtree rooted at u with u at q.
  std::vector<std::vector<double>> ylog(n, std::vector<double>(n_vox));
  // best_child_voxel[v][q]: argmax voxel of child v given its parent at q.
  std::vector<std::vector<std::size_t>> best_child_voxel(n, std::vector<std::size_t>(n_vox, 0));

  for (auto it = tree.order.rbegin(); it != tree.order.rend(); ++it) {
    const int u = *it;
    auto& yu = ylog[u];
    for (std::size_t q = 0; q < n_vox; ++q) yu[q] = std::log(unary.joint(u)[q]);
    for (int v : tree.children[u]) {
      const LimbPrior& prior = priors.get(u, v);
      const auto& yv = ylog[v];
      for (std::size_t q = 0; q < n_vox; ++q) {
        double best = kNegInf;
        std::size_t arg = 0;
        for (std::size_t k = 0; k < n_vox; ++k) {
          if (!hard_pairwise(centers[q], centers[k], prior, cfg)) continue;
          if (yv[k] > best) {
            best = yv[k];
            arg = k;
          }
        }
        best_child_voxel[v][q] = arg;
        yu[q] += best;
      }
    }
  }

  DpResult out;
  out.assignment.assign(n, 0);
  double root_best = kNegInf;
  for (std::size_t q = 0; q < n_vox; ++q) {
    if (ylog[tree.root][q] > root_best) {
      root_best = ylog[tree.root][q];
      out.assignment[tree.root] = q;
    }
  }
  out.root_log_max = root_best;
  for (int u : tree.order) {
    for (int v : tree.children[u]) out.assignment[v] = best_child_voxel[v][out.assignment[u]];
  }

  std::vector<Edge> edges;
  for (std::size_t v = 0; v < n; ++v) {
    if (tree.parent[v] >= 0) edges.emplace_back(tree.parent[v], static_cast<int>(v));
  }
  const SkeletonGraph g = build_graph(static_cast<int>(n), edges);
  out.log_energy = log_energy(out.assignment, unary, g, priors, cfg);
  out.energy = std::exp(out.log_energy);
  return out;
}

PoseEstimate decode_assignment(const Assignment& assign, const VoxelGrid& grid) {
  PoseEstimate p(assign.size());
  for (std::size_t u = 0; u < assign.size(); ++u) p.joints[u] = voxel_center(grid, assign[u]);
  return p;
}

ReprojectCheck reproject_check(const Assignment& assign, const VoxelGrid& grid, const PoseEstimate& gt,
                               const SkeletonGraph& g) {
  const PoseEstimate decoded = decode_assignment(assign, grid);
  return {mplle(decoded, gt, g), mean_joint_error(decoded, gt)};
}

}  // namespace ctxpose
