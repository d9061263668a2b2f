#include "ctxpose/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ctxpose/container.hpp"
#include "ctxpose/error.hpp"

namespace ctxpose {

namespace {

std::string volume_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%04d.vol", id);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::Io, "cannot write " + path.string());
  f << text;
  if (!f) fail(ErrorCode::Io, "write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

void write_poses_csv(const std::filesystem::path& path, const PoseTable& poses) {
  std::string out = "sample_id,joint,x,y,z\n";
  char buf[160];
  for (const auto& [id, pose] : poses) {
    for (std::size_t u = 0; u < pose.size(); ++u) {
      std::snprintf(buf, sizeof buf, "%d,%zu,%.17g,%.17g,%.17g\n", id, u, pose[u][0], pose[u][1], pose[u][2]);
      out += buf;
    }
  }
  write_text(path, out);
}

PoseTable read_poses_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::Io, path.string() + ": empty pose file");
  PoseTable out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    int id = 0;
    std::size_t u = 0;
    double x = 0, y = 0, z = 0;
    if (std::sscanf(line.c_str(), "%d,%zu,%lf,%lf,%lf", &id, &u, &x, &y, &z) != 5) {
      fail(ErrorCode::Io, path.string() + ":" + std::to_string(lineno) + ": malformed row");
    }
    auto& pose = out[id];
    if (u != pose.joints.size()) {
      fail(ErrorCode::Io, path.string() + ":" + std::to_string(lineno) + ": joints must be listed in order");
    }
    pose.joints.emplace_back(x, y, z);
    pose.confidence.push_back(1.0);
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  nlohmann::json list = nlohmann::json::array();
  PoseTable poses;
  for (const auto& s : ds.samples) {
    const std::string file = volume_name(s.id);
    write_volume(dir / file, s.features);
    std::vector<int> occ(s.occluded.begin(), s.occluded.end());
    list.push_back({{"id", s.id}, {"volume", file}, {"occluded", occ}});
    poses[s.id] = s.pose;
  }
  nlohmann::json manifest = {{"format", "ctxpose-dataset"},
                             {"seed", ds.config.seed},
                             {"config", synth_config_to_json(ds.config)},
                             {"samples", list}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  write_poses_csv(dir / "poses.csv", poses);
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto mpath = dir / "manifest.json";
  if (!std::filesystem::exists(mpath)) fail(ErrorCode::Io, "dataset manifest not found: " + mpath.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_text(mpath));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Io, mpath.string() + ": " + e.what());
  }
  if (m.value("format", "") != "ctxpose-dataset") fail(ErrorCode::Io, mpath.string() + ": not a dataset manifest");
  Dataset ds;
  ds.config = synth_config_from_json(m.at("config"), dir.string());
  const PoseTable poses = read_poses_csv(dir / "poses.csv");
  const int n = ds.config.skeleton.graph.n_joints();
  for (const auto& e : m.at("samples")) {
    Sample s;
    s.id = e.at("id").get<int>();
    s.features = read_volume(dir / e.at("volume").get<std::string>());
    if (s.features.n_joints != n || !(s.features.grid == ds.config.grid)) {
      fail(ErrorCode::DataMismatch, "volume for sample " + std::to_string(s.id) + " does not match the manifest");
    }
    for (int o : e.at("occluded").get<std::vector<int>>()) s.occluded.push_back(static_cast<std::uint8_t>(o));
    const auto it = poses.find(s.id);
    if (it == poses.end() || static_cast<int>(it->second.size()) != n) {
      fail(ErrorCode::DataMismatch, "poses.csv lacks sample " + std::to_string(s.id));
    }
    s.pose = it->second;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace ctxpose
