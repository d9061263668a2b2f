#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctxpose/types.hpp"

namespace ctxpose {

using Edge = std::pair<int, int>;  // stored with first < second

// Undirected human graph. Joint indices are the identity; names are labels.
class SkeletonGraph {
 public:
  SkeletonGraph() = default;

  int n_joints() const noexcept { return n_; }
  // Deduplicated edges, each with u < v, sorted ascending.
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  // Contextual joints of u in ascending order.
  const std::vector<int>& neighbors(int u) const { return adj_.at(static_cast<std::size_t>(u)); }
  bool connected(int u, int v) const;
  std::size_t degree(int u) const { return neighbors(u).size(); }

  friend SkeletonGraph build_graph(int n_joints, std::span<const Edge> edges,
                                   std::vector<std::string> names);

 private:
  int n_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adj_;
  std::vector<std::string> names_;
};

struct LimbPrior {
  double mu = 0.0;     // mm
  double sigma = 0.0;  // mm
};

// One prior per unordered edge; lookup is symmetric.
class PriorTable {
 public:
  void set(int u, int v, LimbPrior p);
  const LimbPrior& get(int u, int v) const;
  bool contains(int u, int v) const;
  const std::map<Edge, LimbPrior>& entries() const noexcept { return priors_; }
  std::size_t size() const noexcept { return priors_.size(); }

 private:
  std::map<Edge, LimbPrior> priors_;
};

struct RootedTree {
  int root = 0;
  std::vector<int> parent;                 // -1 at the root
  std::vector<std::vector<int>> children;  // ascending joint index
  std::vector<int> order;                  // BFS order from the root

  std::size_t size() const noexcept { return parent.size(); }
};

SkeletonGraph build_graph(int n_joints, std::span<const Edge> edges,
                          std::vector<std::string> names = {});

bool is_acyclic(const SkeletonGraph& g);
bool is_connected(const SkeletonGraph& g);

// Orients a tree away from `root`. Throws CyclicGraph or DisconnectedGraph.
RootedTree root_tree(const SkeletonGraph& g, int root = 0);

// Per-edge mean and population standard deviation of limb length.
PriorTable estimate_priors(std::span<const PoseEstimate> poses, const SkeletonGraph& g);

// The 17-joint Human3.6M layout with its 16 limbs.
SkeletonGraph h36m_skeleton();

struct SkeletonFile {
  SkeletonGraph graph;
  std::optional<PriorTable> priors;
};

SkeletonFile load_skeleton(const std::filesystem::path& path);
SkeletonFile parse_skeleton_json(const std::string& text);
std::string skeleton_to_json(const SkeletonGraph& g, const PriorTable* priors = nullptr);

}  // namespace ctxpose
