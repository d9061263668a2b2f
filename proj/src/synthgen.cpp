#include "ctxpose/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include <Eigen/Geometry>

#include "ctxpose/container.hpp"
#include "ctxpose/error.hpp"

namespace ctxpose {

namespace {

constexpr int kMaxTries = 1000;

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

Eigen::Matrix3d euler(double a, double b, double c) {
  return (Eigen::AngleAxisd(a, Vec3::UnitZ()) * Eigen::AngleAxisd(b, Vec3::UnitY()) *
          Eigen::AngleAxisd(c, Vec3::UnitX()))
      .toRotationMatrix();
}

void validate(const SynthConfig& cfg) {
  const auto& s = cfg.skeleton;
  const int n = s.graph.n_joints();
  if (n <= 0) fail(ErrorCode::InvalidConfig, "skeleton has no joints");
  if (s.root < 0 || s.root >= n) fail(ErrorCode::InvalidConfig, "root joint out of range");
  if (static_cast<int>(s.bone_length.size()) != n || static_cast<int>(s.bone_dir.size()) != n) {
    fail(ErrorCode::InvalidConfig, "bone_length/bone_dir need one entry per joint");
  }
  for (int u = 0; u < n; ++u) {
    if (u == s.root) continue;
    if (!(s.bone_length[u] > 0.0)) fail(ErrorCode::InvalidConfig, "limb lengths must be > 0");
    if (!(s.bone_dir[u].norm() > 0.0)) fail(ErrorCode::InvalidConfig, "bone directions must be nonzero");
  }
  const auto& r = cfg.render;
  if (!(r.occlusion_prob >= 0.0 && r.occlusion_prob <= 1.0)) {
    fail(ErrorCode::InvalidConfig, "occlusion_prob must lie in [0, 1]");
  }
  if (!(r.noise >= 0.0) || !(r.feature_noise >= 0.0)) fail(ErrorCode::InvalidConfig, "noise must be >= 0");
  if (r.bump_sigma_mm < 0.0) fail(ErrorCode::InvalidConfig, "bump_sigma_mm must be >= 0");
  if (r.channels < 1) fail(ErrorCode::InvalidConfig, "channels must be >= 1");
  if (cfg.n_samples < 0) fail(ErrorCode::InvalidConfig, "n_samples must be >= 0");
  if (cfg.angle_range_deg < 0.0 || cfg.yaw_range_deg < 0.0 || cfg.root_jitter_mm < 0.0) {
    fail(ErrorCode::InvalidConfig, "ranges must be >= 0");
  }
}

}  // namespace

SynthSkeleton h36m_synth_skeleton() {
  SynthSkeleton s;
  s.graph = h36m_skeleton();
  s.root = 0;
  const Vec3 up(0, 0, 1), down(0, 0, -1), left(1, 0, 0), right(-1, 0, 0);
  s.bone_length = {0, 130, 450, 450, 130, 450, 450, 230, 250, 110, 115, 150, 280, 250, 150, 280, 250};
  s.bone_dir = {up,   right, down, down, left, down, down, up,  up,
                up,   up,    left, down, down, right, down, down};
  return s;
}

SynthSkeleton chain_synth_skeleton(int n, double bone_length_mm) {
  if (n < 1) fail(ErrorCode::InvalidConfig, "chain needs at least one joint");
  std::vector<Edge> edges;
  for (int u = 0; u + 1 < n; ++u) edges.emplace_back(u, u + 1);
  SynthSkeleton s;
  s.graph = build_graph(n, edges);
  s.root = 0;
  s.bone_length.assign(n, bone_length_mm);
  s.bone_length[0] = 0.0;
  s.bone_dir.assign(n, Vec3(1, 0, 0));
  return s;
}

PoseEstimate sample_pose(const SynthConfig& cfg, Rng& rng) {
  validate(cfg);
  const auto& s = cfg.skeleton;
  const RootedTree tree = root_tree(s.graph, s.root);
  const int n = s.graph.n_joints();
  const Vec3 half = 0.5 * cfg.grid.spacing;
  const Vec3 lo = cfg.grid.box_min() + half;
  const Vec3 hi = cfg.grid.box_max() - half;
  const Vec3 mid = 0.5 * (cfg.grid.box_min() + cfg.grid.box_max());
  const double a = deg2rad(cfg.angle_range_deg);
  const double yaw_range = deg2rad(cfg.yaw_range_deg);
  const double j = cfg.root_jitter_mm;

  for (int attempt = 0; attempt < kMaxTries; ++attempt) {
    PoseEstimate pose(n);
    const Eigen::Matrix3d yaw = Eigen::AngleAxisd(rng.uniform(-yaw_range, yaw_range), Vec3::UnitZ())
                                    .toRotationMatrix();
    Vec3 root = mid;
    for (int d = 0; d < 3; ++d) root[d] += rng.uniform(-j, j);
    pose[s.root] = root;
    for (int u : tree.order) {
      if (u == s.root) continue;
      const double e1 = rng.uniform(-a, a), e2 = rng.uniform(-a, a), e3 = rng.uniform(-a, a);
      const Vec3 dir = (yaw * euler(e1, e2, e3) * s.bone_dir[u].normalized()).normalized();
      pose[u] = pose[tree.parent[u]] + s.bone_length[u] * dir;
    }
    bool inside = true;
    for (int u = 0; u < n && inside; ++u) {
      for (int d = 0; d < 3; ++d) {
        if (pose[u][d] < lo[d] || pose[u][d] > hi[d]) inside = false;
      }
    }
    if (inside) return pose;
  }
  fail(ErrorCode::BoxTooSmall, "no pose fit inside the grid after 1000 tries");
}

RenderedUnaries render_unaries(const PoseEstimate& pose, const VoxelGrid& grid, const RenderConfig& rc,
                               Rng& rng) {
  const int n = static_cast<int>(pose.size());
  const double sigma = rc.bump_sigma_mm > 0.0 ? rc.bump_sigma_mm : grid.spacing.maxCoeff();
  RenderedUnaries out{UnaryScores(grid, n), std::vector<std::uint8_t>(n, 0)};
  for (int u = 0; u < n; ++u) {
    const bool occluded = rc.occlusion_prob > 0.0 && rng.uniform() < rc.occlusion_prob;
    auto field = out.unary.joint(u);
    if (occluded) {
      out.occluded[u] = 1;
      std::fill(field.begin(), field.end(), rc.occluded_level);
      continue;
    }
    const auto bump = gaussian_heatmap(grid, pose[u], sigma);
    for (std::size_t k = 0; k < field.size(); ++k) {
      field[k] = bump[k] + (rc.noise > 0.0 ? rc.noise * rng.uniform() : 0.0);
    }
  }
  return out;
}

RenderedFeatures render_features(const PoseEstimate& pose, const VoxelGrid& grid, const RenderConfig& rc,
                                 Rng& rng) {
  auto un = render_unaries(pose, grid, rc, rng);
  const int n = un.unary.n_joints;
  RenderedFeatures out{FeatureVolume(grid, n, rc.channels), std::move(un.occluded)};
  for (int u = 0; u < n; ++u) {
    auto src = un.unary.joint(u);
    std::copy(src.begin(), src.end(), out.features.channel(u, 0).begin());
    for (int c = 1; c < rc.channels; ++c) {
      for (double& v : out.features.channel(u, c)) v = rc.feature_noise * rng.normal();
    }
  }
  return out;
}

Sample generate_sample(const SynthConfig& cfg, int sample_id) {
  const Rng stream = Rng(cfg.seed).split(static_cast<std::uint64_t>(sample_id));
  Rng pose_rng = stream.split(0);
  Rng render_rng = stream.split(1);
  Sample s;
  s.id = sample_id;
  s.pose = sample_pose(cfg, pose_rng);
  auto rf = render_features(s.pose, cfg.grid, cfg.render, render_rng);
  // Stored volumes are float32; round here so in-memory and on-disk samples agree.
  for (double& v : rf.features.values) v = static_cast<double>(static_cast<float>(v));
  s.features = std::move(rf.features);
  s.occluded = std::move(rf.occluded);
  return s;
}

std::vector<Sample> generate_samples(const SynthConfig& cfg) {
  validate(cfg);
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(cfg.n_samples));
  for (int i = 0; i < cfg.n_samples; ++i) out.push_back(generate_sample(cfg, i));
  return out;
}

PriorTable synthetic_priors(const SynthSkeleton& s) {
  const RootedTree tree = root_tree(s.graph, s.root);
  PriorTable t;
  for (int u = 0; u < s.graph.n_joints(); ++u) {
    if (tree.parent[u] < 0) continue;
    t.set(tree.parent[u], u, LimbPrior{s.bone_length[u], 1.0});
  }
  return t;
}

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) fail(ErrorCode::InvalidConfig, where + ": unknown key '" + k + "'");
  }
}

SynthSkeleton skeleton_from_json(const json& j, const std::string& base_dir) {
  if (j.is_string()) {
    if (j.get<std::string>() == "h36m") return h36m_synth_skeleton();
    fail(ErrorCode::InvalidConfig, "unknown skeleton preset '" + j.get<std::string>() + "'");
  }
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, "skeleton must be a preset name or an object");
  if (j.contains("preset")) {
    reject_unknown(j, {"preset", "n_joints", "bone_length_mm"}, "skeleton");
    const auto preset = j.at("preset").get<std::string>();
    if (preset == "h36m") return h36m_synth_skeleton();
    if (preset == "chain") {
      return chain_synth_skeleton(j.value("n_joints", 3), j.value("bone_length_mm", 100.0));
    }
    fail(ErrorCode::InvalidConfig, "unknown skeleton preset '" + preset + "'");
  }
  if (j.contains("file")) {
    reject_unknown(j, {"file", "root", "bone_dir"}, "skeleton");
    std::filesystem::path p = j.at("file").get<std::string>();
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    if (!std::filesystem::exists(p)) fail(ErrorCode::InvalidConfig, "skeleton file not found: " + p.string());
    SkeletonFile f = load_skeleton(p);
    if (!f.priors) fail(ErrorCode::InvalidConfig, p.string() + ": skeleton file needs limb priors");
    SynthSkeleton s;
    s.graph = f.graph;
    s.root = j.value("root", 0);
    const int n = s.graph.n_joints();
    if (s.root < 0 || s.root >= n) fail(ErrorCode::InvalidConfig, "root joint out of range");
    const RootedTree tree = root_tree(s.graph, s.root);
    s.bone_length.assign(n, 0.0);
    s.bone_dir.assign(n, Vec3(0, 0, -1));
    for (int u = 0; u < n; ++u) {
      if (tree.parent[u] >= 0) s.bone_length[u] = f.priors->get(tree.parent[u], u).mu;
    }
    if (j.contains("bone_dir")) {
      const auto dirs = j.at("bone_dir").get<std::vector<std::vector<double>>>();
      if (static_cast<int>(dirs.size()) != n) fail(ErrorCode::InvalidConfig, "bone_dir needs one entry per joint");
      for (int u = 0; u < n; ++u) {
        if (dirs[u].size() != 3) fail(ErrorCode::InvalidConfig, "bone_dir entries need 3 components");
        s.bone_dir[u] = Vec3(dirs[u][0], dirs[u][1], dirs[u][2]);
      }
    }
    return s;
  }
  reject_unknown(j, {"n_joints", "edges", "names", "root", "bone_length_mm", "bone_dir"}, "skeleton");
  SynthSkeleton s;
  const int n = j.at("n_joints").get<int>();
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  s.graph = build_graph(n, edges, j.value("names", std::vector<std::string>{}));
  s.root = j.value("root", 0);
  s.bone_length = j.at("bone_length_mm").get<std::vector<double>>();
  for (const auto& d : j.at("bone_dir")) {
    const auto v = d.get<std::vector<double>>();
    if (v.size() != 3) fail(ErrorCode::InvalidConfig, "bone_dir entries need 3 components");
    s.bone_dir.emplace_back(v[0], v[1], v[2]);
  }
  return s;
}

}  // namespace

SynthConfig synth_config_from_json(const json& j, const std::string& base_dir) {
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, "generate config must be a JSON object");
  reject_unknown(j,
                 {"seed", "n_samples", "skeleton", "grid", "angle_range_deg", "yaw_range_deg", "root_jitter_mm",
                  "noise", "occlusion_prob", "bump_sigma_mm", "occluded_level", "feature_noise", "channels"},
                 "generate config");
  SynthConfig c;
  try {
    c.seed = j.value("seed", std::uint64_t{0});
    c.n_samples = j.value("n_samples", 1);
    if (!j.contains("skeleton")) fail(ErrorCode::InvalidConfig, "generate config needs 'skeleton'");
    if (!j.contains("grid")) fail(ErrorCode::InvalidConfig, "generate config needs 'grid'");
    c.skeleton = skeleton_from_json(j.at("skeleton"), base_dir);
    c.grid = grid_from_json(j.at("grid"));
    c.angle_range_deg = j.value("angle_range_deg", c.angle_range_deg);
    c.yaw_range_deg = j.value("yaw_range_deg", c.yaw_range_deg);
    c.root_jitter_mm = j.value("root_jitter_mm", c.root_jitter_mm);
    c.render.noise = j.value("noise", c.render.noise);
    c.render.occlusion_prob = j.value("occlusion_prob", c.render.occlusion_prob);
    c.render.bump_sigma_mm = j.value("bump_sigma_mm", c.render.bump_sigma_mm);
    c.render.occluded_level = j.value("occluded_level", c.render.occluded_level);
    c.render.feature_noise = j.value("feature_noise", c.render.feature_noise);
    c.render.channels = j.value("channels", c.render.channels);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("generate config: ") + e.what());
  }
  validate(c);
  return c;
}

json synth_config_to_json(const SynthConfig& c) {
  const auto& s = c.skeleton;
  json edges = json::array();
  for (const auto& [u, v] : s.graph.edges()) edges.push_back({u, v});
  json dirs = json::array();
  for (const auto& d : s.bone_dir) dirs.push_back({d[0], d[1], d[2]});
  json sk = {{"n_joints", s.graph.n_joints()}, {"edges", edges},    {"names", s.graph.names()},
             {"root", s.root},                 {"bone_length_mm", s.bone_length}, {"bone_dir", dirs}};
  return {{"seed", c.seed},
          {"n_samples", c.n_samples},
          {"skeleton", sk},
          {"grid", grid_to_json(c.grid)},
          {"angle_range_deg", c.angle_range_deg},
          {"yaw_range_deg", c.yaw_range_deg},
          {"root_jitter_mm", c.root_jitter_mm},
          {"noise", c.render.noise},
          {"occlusion_prob", c.render.occlusion_prob},
          {"bump_sigma_mm", c.render.bump_sigma_mm},
          {"occluded_level", c.render.occluded_level},
          {"feature_noise", c.render.feature_noise},
          {"channels", c.render.channels}};
}

}  // namespace ctxpose
