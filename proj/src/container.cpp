#include "ctxpose/container.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include "ctxpose/error.hpp"

namespace ctxpose {

namespace {

void put_f32(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

double get_f32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return static_cast<double>(std::bit_cast<float>(bits));
}

double get_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "short write to " + path.string());
}

// Splits "header\nblob"; returns the parsed header and the blob offset.
std::pair<nlohmann::json, std::size_t> split_header(const std::string& bytes,
                                                    const std::filesystem::path& path) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) fail(ErrorCode::Io, path.string() + ": missing header line");
  try {
    return {nlohmann::json::parse(bytes.substr(0, nl)), nl + 1};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Io, path.string() + ": bad header: " + e.what());
  }
}

}  // namespace

nlohmann::json grid_to_json(const VoxelGrid& g) {
  return {{"dims", {g.dims[0], g.dims[1], g.dims[2]}},
          {"origin", {g.origin[0], g.origin[1], g.origin[2]}},
          {"spacing", {g.spacing[0], g.spacing[1], g.spacing[2]}}};
}

VoxelGrid grid_from_json(const nlohmann::json& j) {
  try {
    const auto d = j.at("dims").get<std::vector<int>>();
    const auto o = j.at("origin").get<std::vector<double>>();
    const auto s = j.at("spacing").get<std::vector<double>>();
    if (d.size() != 3 || o.size() != 3 || s.size() != 3) {
      fail(ErrorCode::InvalidConfig, "grid dims/origin/spacing need 3 entries");
    }
    return VoxelGrid({d[0], d[1], d[2]}, Vec3(o[0], o[1], o[2]), Vec3(s[0], s[1], s[2]));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("grid: ") + e.what());
  }
}

void write_volume(const std::filesystem::path& path, const FeatureVolume& vol) {
  nlohmann::json h = grid_to_json(vol.grid);
  h["format"] = "ctxpose-volume";
  h["n_joints"] = vol.n_joints;
  h["channels"] = vol.channels;
  std::string bytes = h.dump() + "\n";
  bytes.reserve(bytes.size() + 4 * vol.values.size());
  for (double v : vol.values) put_f32(bytes, v);
  write_all(path, bytes);
}

void write_heatmap_volume(const std::filesystem::path& path, const Heatmap& hm) {
  FeatureVolume vol(hm.grid, hm.n_joints, 1);
  vol.values = hm.values;
  write_volume(path, vol);
}

FeatureVolume read_volume(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  const auto [h, off] = split_header(bytes, path);
  FeatureVolume vol;
  try {
    vol = FeatureVolume(grid_from_json(h), h.at("n_joints").get<int>(), h.at("channels").get<int>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Io, path.string() + ": " + e.what());
  }
  if (bytes.size() - off != 4 * vol.values.size()) {
    fail(ErrorCode::Io, path.string() + ": payload size does not match header");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + off);
  for (std::size_t i = 0; i < vol.values.size(); ++i) vol.values[i] = get_f32(p + 4 * i);
  return vol;
}

const Tensor& TensorContainer::get(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  fail(ErrorCode::Io, "container has no tensor '" + name + "'");
}

bool TensorContainer::has(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

void write_container(const std::filesystem::path& path, const TensorContainer& c, BlobType type) {
  nlohmann::json h;
  h["format"] = "ctxpose-params";
  h["dtype"] = type == BlobType::Float32 ? "float32" : "float64";
  h["meta"] = c.meta;
  h["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : c.tensors) {
    std::int64_t n = 1;
    for (auto s : t.shape) n *= s;
    if (static_cast<std::size_t>(n) != t.data.size()) {
      fail(ErrorCode::ShapeMismatch, "tensor '" + t.name + "' shape does not match data");
    }
    h["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.data.size();
  }
  std::string bytes = h.dump() + "\n";
  for (const auto& t : c.tensors) {
    for (double v : t.data) {
      if (type == BlobType::Float32) {
        put_f32(bytes, v);
      } else {
        put_f64(bytes, v);
      }
    }
  }
  write_all(path, bytes);
}

TensorContainer read_container(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  const auto [h, off] = split_header(bytes, path);
  TensorContainer c;
  try {
    if (h.at("format").get<std::string>() != "ctxpose-params") {
      fail(ErrorCode::Io, path.string() + ": not a parameter container");
    }
    const std::string dtype = h.at("dtype").get<std::string>();
    const std::size_t width = dtype == "float32" ? 4 : dtype == "float64" ? 8 : 0;
    if (width == 0) fail(ErrorCode::Io, path.string() + ": unknown dtype " + dtype);
    c.meta = h.value("meta", nlohmann::json::object());
    const auto* base = reinterpret_cast<const unsigned char*>(bytes.data() + off);
    const std::size_t avail = (bytes.size() - off) / width;
    for (const auto& e : h.at("tensors")) {
      Tensor t;
      t.name = e.at("name").get<std::string>();
      t.shape = e.at("shape").get<std::vector<std::int64_t>>();
      const auto start = e.at("offset").get<std::size_t>();
      std::size_t n = 1;
      for (auto s : t.shape) n *= static_cast<std::size_t>(s);
      if (start + n > avail) fail(ErrorCode::Io, path.string() + ": tensor exceeds payload");
      t.data.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto* p = base + (start + i) * width;
        t.data[i] = width == 4 ? get_f32(p) : get_f64(p);
      }
      c.tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Io, path.string() + ": " + e.what());
  }
  return c;
}

}  // namespace ctxpose
