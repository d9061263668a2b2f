#include "ctxpose/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <sstream>

#include <json.hpp>

#include "ctxpose/error.hpp"

namespace ctxpose {

namespace {

Edge canonical(int u, int v) { return u < v ? Edge{u, v} : Edge{v, u}; }

// Union-find over joint indices.
class DisjointSets {
 public:
  explicit DisjointSets(int n) : parent_(static_cast<std::size_t>(n)) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[b] = a;
    return true;
  }

 private:
  std::vector<int> parent_;
};

}  // namespace

bool SkeletonGraph::connected(int u, int v) const {
  if (u < 0 || v < 0 || u >= n_ || v >= n_) return false;
  const auto& nb = adj_[static_cast<std::size_t>(u)];
  return std::binary_search(nb.begin(), nb.end(), v);
}

SkeletonGraph build_graph(int n_joints, std::span<const Edge> edges,
                          std::vector<std::string> names) {
  if (n_joints < 0) fail(ErrorCode::InvalidEdge, "negative joint count");
  if (!names.empty() && names.size() != static_cast<std::size_t>(n_joints)) {
    fail(ErrorCode::InvalidEdge, "names must have one entry per joint");
  }
  SkeletonGraph g;
  g.n_ = n_joints;
  g.names_ = std::move(names);
  for (const auto& [u, v] : edges) {
    if (u < 0 || v < 0 || u >= n_joints || v >= n_joints) {
      fail(ErrorCode::InvalidEdge, "edge (" + std::to_string(u) + "," + std::to_string(v) +
                                       ") out of range for " + std::to_string(n_joints) + " joints");
    }
    if (u == v) fail(ErrorCode::InvalidEdge, "self-loop at joint " + std::to_string(u));
    g.edges_.push_back(canonical(u, v));
  }
  std::sort(g.edges_.begin(), g.edges_.end());
  g.edges_.erase(std::unique(g.edges_.begin(), g.edges_.end()), g.edges_.end());
  g.adj_.assign(static_cast<std::size_t>(n_joints), {});
  for (const auto& [u, v] : g.edges_) {
    g.adj_[u].push_back(v);
    g.adj_[v].push_back(u);
  }
  for (auto& nb : g.adj_) std::sort(nb.begin(), nb.end());
  return g;
}

bool is_acyclic(const SkeletonGraph& g) {
  DisjointSets ds(g.n_joints());
  for (const auto& [u, v] : g.edges()) {
    if (!ds.unite(u, v)) return false;
  }
  return true;
}

bool is_connected(const SkeletonGraph& g) {
  if (g.n_joints() == 0) return true;
  DisjointSets ds(g.n_joints());
  for (const auto& [u, v] : g.edges()) ds.unite(u, v);
  const int r = ds.find(0);
  for (int i = 1; i < g.n_joints(); ++i) {
    if (ds.find(i) != r) return false;
  }
  return true;
}

RootedTree root_tree(const SkeletonGraph& g, int root) {
  const int n = g.n_joints();
  if (root < 0 || root >= n) fail(ErrorCode::IndexOutOfRange, "root joint out of range");
  if (!is_acyclic(g)) fail(ErrorCode::CyclicGraph, "skeleton graph contains a cycle");
  if (!is_connected(g)) fail(ErrorCode::DisconnectedGraph, "skeleton graph is not connected");

  RootedTree t;
  t.root = root;
  t.parent.assign(static_cast<std::size_t>(n), -1);
  t.children.assign(static_cast<std::size_t>(n), {});
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::queue<int> frontier;
  frontier.push(root);
  seen[root] = 1;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    t.order.push_back(u);
    for (int v : g.neighbors(u)) {  // ascending
      if (seen[v]) continue;
      seen[v] = 1;
      t.parent[v] = u;
      t.children[u].push_back(v);
      frontier.push(v);
    }
  }
  return t;
}

void PriorTable::set(int u, int v, LimbPrior p) { priors_[canonical(u, v)] = p; }

const LimbPrior& PriorTable::get(int u, int v) const {
  const auto it = priors_.find(canonical(u, v));
  if (it == priors_.end()) {
    fail(ErrorCode::InvalidEdge,
         "no limb prior for (" + std::to_string(u) + "," + std::to_string(v) + ")");
  }
  return it->second;
}

bool PriorTable::contains(int u, int v) const { return priors_.count(canonical(u, v)) != 0; }

PriorTable estimate_priors(std::span<const PoseEstimate> poses, const SkeletonGraph& g) {
  if (poses.empty()) fail(ErrorCode::EmptyDataset, "cannot estimate limb priors from zero poses");
  for (const auto& p : poses) {
    if (p.size() != static_cast<std::size_t>(g.n_joints())) {
      fail(ErrorCode::ShapeMismatch, "pose joint count differs from skeleton");
    }
  }
  PriorTable table;
  const double n = static_cast<double>(poses.size());
  for (const auto& [u, v] : g.edges()) {
    double mean = 0.0;
    for (const auto& p : poses) mean += (p[u] - p[v]).norm();
    mean /= n;
    double var = 0.0;
    for (const auto& p : poses) {
      const double d = (p[u] - p[v]).norm() - mean;
      var += d * d;
    }
    table.set(u, v, {mean, std::sqrt(var / n)});
  }
  return table;
}

SkeletonGraph h36m_skeleton() {
  static const std::vector<Edge> edges = {
      {0, 1}, {1, 2},  {2, 3},   {0, 4},   {4, 5},  {5, 6},   {0, 7},   {7, 8},
      {8, 9}, {9, 10}, {8, 11},  {11, 12}, {12, 13}, {8, 14}, {14, 15}, {15, 16}};
  std::vector<std::string> names = {"hip",      "r_hip",      "r_knee",  "r_foot", "l_hip",
                                    "l_knee",   "l_foot",     "spine",   "thorax", "neck",
                                    "head",     "l_shoulder", "l_elbow", "l_wrist", "r_shoulder",
                                    "r_elbow",  "r_wrist"};
  return build_graph(17, edges, std::move(names));
}

SkeletonFile parse_skeleton_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("skeleton JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("n_joints") || !j.contains("edges")) {
    fail(ErrorCode::InvalidConfig, "skeleton JSON needs n_joints and edges");
  }
  try {
    const int n = j.at("n_joints").get<int>();
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) fail(ErrorCode::InvalidConfig, "edge must be [u, v]");
      edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
    std::vector<std::string> names;
    if (j.contains("names")) names = j.at("names").get<std::vector<std::string>>();
    SkeletonFile out{build_graph(n, edges, std::move(names)), std::nullopt};
    if (j.contains("priors")) {
      PriorTable table;
      for (const auto& p : j.at("priors")) {
        const int u = p.at("u").get<int>();
        const int v = p.at("v").get<int>();
        if (!out.graph.connected(u, v)) fail(ErrorCode::InvalidEdge, "prior given for a non-edge");
        const LimbPrior lp{p.at("mu").get<double>(), p.at("sigma").get<double>()};
        if (!(lp.mu > 0.0) || !(lp.sigma >= 0.0)) {
          fail(ErrorCode::InvalidConfig, "limb prior needs mu > 0 and sigma >= 0");
        }
        table.set(u, v, lp);
      }
      out.priors = std::move(table);
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("skeleton JSON: ") + e.what());
  }
}

SkeletonFile load_skeleton(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open skeleton file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_skeleton_json(ss.str());
}

std::string skeleton_to_json(const SkeletonGraph& g, const PriorTable* priors) {
  nlohmann::json j;
  j["n_joints"] = g.n_joints();
  j["edges"] = nlohmann::json::array();
  for (const auto& [u, v] : g.edges()) j["edges"].push_back({u, v});
  if (!g.names().empty()) j["names"] = g.names();
  if (priors != nullptr) {
    j["priors"] = nlohmann::json::array();
    for (const auto& [e, p] : priors->entries()) {
      j["priors"].push_back({{"u", e.first}, {"v", e.second}, {"mu", p.mu}, {"sigma", p.sigma}});
    }
  }
  return j.dump(2);
}

}  // namespace ctxpose
