#include "ctxpose/training.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>
#include <tuple>

#include "ctxpose/container.hpp"
#include "ctxpose/error.hpp"
#include "ctxpose/rng.hpp"

namespace ctxpose {

PriorTable training_priors(std::span<const Sample> samples, const SkeletonGraph& g, double sigma_floor_mm) {
  std::vector<PoseEstimate> poses;
  poses.reserve(samples.size());
  for (const auto& s : samples) poses.push_back(s.pose);
  const PriorTable est = estimate_priors(poses, g);
  PriorTable out;
  for (const auto& [e, p] : est.entries()) {
    out.set(e.first, e.second, LimbPrior{p.mu, std::max(p.sigma, sigma_floor_mm)});
  }
  return out;
}

namespace {

Upstream upstream_of(const TotalLoss& tl) { return Upstream{tl.grad_pose, tl.grad_heatmap, tl.grad_ga}; }

}  // namespace

BatchStats batch_gradient(const ToyModel& m, std::span<const Sample> samples, std::span<const std::size_t> indices,
                          const LossConfig& loss, int threads) {
  if (indices.empty()) fail(ErrorCode::EmptyDataset, "empty batch");
  const std::size_t n = indices.size();
  std::vector<BatchStats> per(n);
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](std::size_t i) {
    try {
      const Sample& s = samples[indices[i]];
      ForwardResult fr = forward(m, s.features);
      const TotalLoss tl = total_loss(fr.pose, s.pose, fr.heatmap, fr.ga, loss);
      ModelGrads g = backward(m, fr.tape, upstream_of(tl));
      per[i] = BatchStats{tl.value, tl.l3d, tl.lga, flatten_gradients(g)};
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t nt = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, n);
  if (nt == 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nt; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < n; i += nt) work(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  BatchStats out;
  out.grad.assign(per.front().grad.size(), 0.0);
  for (const auto& p : per) {
    for (std::size_t k = 0; k < p.grad.size(); ++k) out.grad[k] += p.grad[k];
    out.loss += p.loss;
    out.l3d += p.l3d;
    out.lga += p.lga;
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : out.grad) v *= inv;
  out.loss *= inv;
  out.l3d *= inv;
  out.lga *= inv;
  return out;
}

TrainState init_training(const TrainConfig& cfg, std::span<const Sample> train, const SkeletonGraph& g,
                         const VoxelGrid& grid) {
  if (train.empty()) fail(ErrorCode::EmptyDataset, "no training samples");
  const int channels = cfg.channels > 0 ? cfg.channels : train.front().features.channels;
  TrainState st;
  st.model = make_toy_model(cfg.variant, grid, g, training_priors(train, g, cfg.sigma_floor_mm), channels,
                            cfg.init, cfg.seed);
  return st;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng(seed).split(0x5eed0000ULL + static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

BatchStats train_step(TrainState& st, std::span<const Sample> train, std::span<const std::size_t> batch,
                      const TrainConfig& cfg) {
  BatchStats bs = batch_gradient(st.model, train, batch, cfg.loss, cfg.threads);
  auto params = flatten_parameters(st.model);
  adam_step(params, bs.grad, st.adam, cfg.adam);
  assign_parameters(st.model, params);
  ++st.step;
  return bs;
}

EpochLog train_epoch(TrainState& st, std::span<const Sample> train, const TrainConfig& cfg) {
  if (cfg.batch < 1) fail(ErrorCode::InvalidConfig, "batch must be >= 1");
  const auto order = epoch_order(cfg.seed, st.epoch, train.size());
  EpochLog log;
  for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch)) {
    const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch));
    std::span<const std::size_t> batch(order.data() + b, e - b);
    const BatchStats bs = train_step(st, train, batch, cfg);
    const double w = static_cast<double>(batch.size());
    log.loss += w * bs.loss;
    log.l3d += w * bs.l3d;
    log.lga += w * bs.lga;
  }
  const double inv = 1.0 / static_cast<double>(train.size());
  log.loss *= inv;
  log.l3d *= inv;
  log.lga *= inv;
  ++st.epoch;
  log.epoch = st.epoch;
  log.step = st.step;
  return log;
}

std::vector<PoseEstimate> predict(const ToyModel& m, std::span<const Sample> samples) {
  std::vector<PoseEstimate> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(forward(m, s.features).pose);
  return out;
}

void save_checkpoint(const std::filesystem::path& path, TrainState& st, const nlohmann::json& config) {
  TensorContainer c;
  ToyModel& m = st.model;
  c.meta = {{"kind", "checkpoint"},
            {"variant", std::string(to_string(m.variant))},
            {"epoch", st.epoch},
            {"step", st.step},
            {"adam_t", st.adam.t},
            {"channels", m.channels()},
            {"alpha", m.context.alpha},
            {"eps", m.context.eps},
            {"grid", grid_to_json(m.grid)},
            {"skeleton", nlohmann::json::parse(skeleton_to_json(m.graph, &m.priors))},
            {"config", config}};
  for (const auto& p : parameter_views(m)) {
    c.tensors.push_back({p.name, {static_cast<std::int64_t>(p.values.size())},
                         std::vector<double>(p.values.begin(), p.values.end())});
  }
  const auto n = static_cast<std::int64_t>(flatten_parameters(m).size());
  auto pad = [n](const std::vector<double>& v) { return v.empty() ? std::vector<double>(n, 0.0) : v; };
  c.tensors.push_back({"adam.m", {n}, pad(st.adam.m)});
  c.tensors.push_back({"adam.v", {n}, pad(st.adam.v)});
  write_container(path, c, BlobType::Float64);
}

TrainState load_checkpoint(const std::filesystem::path& path, nlohmann::json* config) {
  const TensorContainer c = read_container(path);
  TrainState st;
  try {
    if (c.meta.value("kind", "") != "checkpoint") fail(ErrorCode::Io, path.string() + ": not a checkpoint");
    const SkeletonFile sk = parse_skeleton_json(c.meta.at("skeleton").dump());
    if (!sk.priors) fail(ErrorCode::Io, path.string() + ": checkpoint lacks limb priors");
    ModelInit init;
    init.alpha = c.meta.at("alpha").get<double>();
    init.eps = c.meta.at("eps").get<double>();
    st.model = make_toy_model(parse_model_variant(c.meta.at("variant").get<std::string>()),
                              grid_from_json(c.meta.at("grid")), sk.graph, *sk.priors,
                              c.meta.at("channels").get<int>(), init, 0);
    for (auto& p : parameter_views(st.model)) {
      const Tensor& t = c.get(p.name);
      if (t.data.size() != p.values.size()) fail(ErrorCode::ShapeMismatch, path.string() + ": bad size for " + p.name);
      std::copy(t.data.begin(), t.data.end(), p.values.begin());
    }
    st.epoch = c.meta.at("epoch").get<int>();
    st.step = c.meta.at("step").get<std::int64_t>();
    st.adam.t = c.meta.at("adam_t").get<std::int64_t>();
    if (st.adam.t > 0) {
      st.adam.m = c.get("adam.m").data;
      st.adam.v = c.get("adam.v").data;
    }
    if (config) *config = c.meta.at("config");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Io, path.string() + ": " + e.what());
  }
  return st;
}

double relative_error(double analytic, double numeric, double floor) {
  const double den = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / den;
}

GradCheckReport gradcheck(const ToyModel& m0, const Sample& sample, const LossConfig& loss, double rel_step) {
  ToyModel m = m0;
  ForwardResult fr = forward(m, sample.features);
  const TotalLoss tl = total_loss(fr.pose, sample.pose, fr.heatmap, fr.ga, loss);
  ModelGrads g = backward(m, fr.tape, upstream_of(tl));

  auto parts = [&](const ToyModel& mm) {
    const ForwardResult f = forward(mm, sample.features);
    const TotalLoss t = total_loss(f.pose, sample.pose, f.heatmap, f.ga, loss);
    return std::pair{t.l3d, t.lga};
  };

  GradCheckReport rep;
  auto grads = gradient_views(g);
  auto params = parameter_views(m);
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].values.size(); ++i) {
      double& theta = params[t].values[i];
      const double orig = theta;
      const double h = rel_step * std::max(1.0, std::abs(orig));
      double l3[4], lg[4];
      const double offs[4] = {2 * h, h, -h, -2 * h};
      for (int k = 0; k < 4; ++k) {
        theta = orig + offs[k];
        std::tie(l3[k], lg[k]) = parts(m);
      }
      theta = orig;
      auto stencil = [h](const double* f) { return (8 * (f[1] - f[2]) - (f[0] - f[3])) / (12 * h); };
      const double numeric = stencil(l3) + loss.lambda * stencil(lg);
      const double analytic = grads[t].values[i];
      GradEntry e{params[t].name, i, analytic, numeric, relative_error(analytic, numeric)};
      rep.max_rel_error = std::max(rep.max_rel_error, e.rel_error);
      rep.entries.push_back(e);
    }
  }
  return rep;
}

GradCheckInstance make_gradcheck_instance(ModelVariant variant, std::uint64_t seed) {
  Rng rng(seed);
  const VoxelGrid grid({2, 2, 2}, Vec3::Zero(), Vec3(50, 50, 50));
  const std::vector<Edge> edges = {{0, 1}};
  const SkeletonGraph g = build_graph(2, edges);
  PoseEstimate gt(2);
  for (int u = 0; u < 2; ++u) {
    for (int d = 0; d < 3; ++d) gt[u][d] = rng.uniform(25.0, 75.0);
  }
  PriorTable priors;
  priors.set(0, 1, LimbPrior{(gt[0] - gt[1]).norm() + rng.uniform(-10, 10), rng.uniform(0.5, 2.0)});
  ModelInit init;
  init.weight_scale = 0.3;
  GradCheckInstance inst{make_toy_model(variant, grid, g, priors, 2, init, seed), {}, default_loss_config(grid)};
  ToyModel& m = inst.model;
  for (double& v : m.context.d) v = 0.5 * rng.normal();
  for (double& v : m.readout_w) v = rng.uniform(0.5, 1.5);
  inst.sample.id = 0;
  inst.sample.pose = gt;
  inst.sample.features = FeatureVolume(grid, 2, 2);
  for (double& v : inst.sample.features.values) v = rng.normal();
  inst.sample.occluded.assign(2, 0);
  return inst;
}

}  // namespace ctxpose
