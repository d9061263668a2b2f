#include "ctxpose/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctxpose/container.hpp"
#include "ctxpose/dataset.hpp"
#include "ctxpose/error.hpp"
#include "ctxpose/metrics.hpp"
#include "ctxpose/psm.hpp"
#include "ctxpose/training.hpp"

namespace ctxpose {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("CTXPOSE_LOG");
  if (!env) return LogLevel::Info;
  const std::string v = env;
  if (v == "quiet" || v == "0") return LogLevel::Quiet;
  if (v == "debug" || v == "2") return LogLevel::Debug;
  return LogLevel::Info;
}

void log(LogLevel lvl, const std::string& msg) {
  if (static_cast<int>(lvl) <= static_cast<int>(log_level())) std::cerr << "[ctxpose] " << msg << "\n";
}

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string out;
};

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) fail(ErrorCode::Io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::Io, "cannot write " + p.string());
  f << text;
}

json load_config(const std::string& path) {
  if (path.empty()) fail(ErrorCode::InvalidConfig, "--config is required");
  if (!fs::exists(path)) fail(ErrorCode::InvalidConfig, "config file not found: " + path);
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path q(p);
  return q.is_relative() ? base / q : q;
}

fs::path require_out(const Globals& g) {
  if (g.out.empty()) fail(ErrorCode::InvalidConfig, "--out is required");
  return g.out;
}

int thread_count(const Globals& g) {
  if (g.threads > 0) return g.threads;
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

SkeletonFile load_skeleton_checked(const std::string& path) {
  if (!fs::exists(path)) fail(ErrorCode::InvalidConfig, "skeleton file not found: " + path);
  return load_skeleton(path);
}

// ---------------------------------------------------------------- generate

int cmd_generate(const Globals& g) {
  const json j = load_config(g.config);
  SynthConfig cfg = synth_config_from_json(j, fs::path(g.config).parent_path().string());
  if (g.seed) cfg.seed = *g.seed;
  const fs::path out = require_out(g);
  Dataset ds;
  ds.config = cfg;
  ds.samples = generate_samples(cfg);
  write_dataset(out, ds);
  std::size_t occluded = 0;
  for (const auto& s : ds.samples) occluded += std::count(s.occluded.begin(), s.occluded.end(), 1);
  const auto& d = cfg.grid.dims;
  std::cout << "generated " << ds.samples.size() << " samples in " << out.string() << ": "
            << cfg.skeleton.graph.n_joints() << " joints, grid " << d[0] << "x" << d[1] << "x" << d[2] << ", "
            << cfg.render.channels << " channels, seed " << cfg.seed << ", " << occluded << " occluded joints\n";
  return kExitOk;
}

// --------------------------------------------------------------- infer-psm

struct PsmArgs {
  std::string dataset;
  std::string unary;
  std::string skeleton;
  int root = 0;
  double epsilon = -1.0;
  bool oracle = false;
  std::size_t max_search = 1'000'000;
};

UnaryScores unary_from_volume(const FeatureVolume& v) {
  UnaryScores u(v.grid, v.n_joints);
  for (int j = 0; j < v.n_joints; ++j) {
    const auto c = v.channel(j, 0);
    std::copy(c.begin(), c.end(), u.joint(j).begin());
  }
  return u;
}

int cmd_infer_psm(const Globals& g, const PsmArgs& a) {
  const fs::path out = require_out(g);
  if (a.dataset.empty() == a.unary.empty()) fail(ErrorCode::InvalidConfig, "give exactly one of --dataset or --unary");

  std::optional<SkeletonFile> skel;
  if (!a.skeleton.empty()) skel = load_skeleton_checked(a.skeleton);

  std::vector<int> ids;
  std::vector<UnaryScores> unaries;
  std::vector<PoseEstimate> gts;
  SkeletonGraph graph;
  PriorTable priors;
  if (!a.dataset.empty()) {
    const Dataset ds = read_dataset(a.dataset);
    graph = skel ? skel->graph : ds.graph();
    if (graph.n_joints() != ds.graph().n_joints()) {
      fail(ErrorCode::DataMismatch, "skeleton joint count differs from the dataset");
    }
    for (const auto& s : ds.samples) {
      ids.push_back(s.id);
      unaries.push_back(unary_from_volume(s.features));
      gts.push_back(s.pose);
    }
    if (skel && skel->priors) {
      priors = *skel->priors;
    } else {
      root_tree(graph, a.root);  // report graph errors before estimating
      priors = estimate_priors(gts, graph);
    }
  } else {
    if (!skel) fail(ErrorCode::InvalidConfig, "--unary needs --skeleton");
    if (!skel->priors) fail(ErrorCode::InvalidConfig, a.skeleton + ": skeleton file needs limb priors");
    graph = skel->graph;
    priors = *skel->priors;
    const FeatureVolume v = read_volume(a.unary);
    if (v.n_joints != graph.n_joints()) fail(ErrorCode::DataMismatch, "volume joint count differs from the skeleton");
    ids.push_back(0);
    unaries.push_back(unary_from_volume(v));
  }
  if (a.root < 0 || a.root >= graph.n_joints()) fail(ErrorCode::InvalidConfig, "--root out of range");
  const RootedTree tree = root_tree(graph, a.root);

  const VoxelGrid& grid = unaries.front().grid;
  PsmConfig cfg;
  cfg.epsilon_mm = a.epsilon > 0 ? a.epsilon : grid.voxel_diagonal();
  cfg.max_search = a.max_search;

  json samples = json::array();
  PoseTable preds;
  double sum_err = 0.0, sum_limb = 0.0;
  int checked = 0, disagreements = 0;
  for (std::size_t i = 0; i < unaries.size(); ++i) {
    const DpResult r = dp_map(unaries[i], tree, priors, cfg);
    json row = {{"id", ids[i]}, {"assignment", r.assignment}, {"energy", r.energy}, {"log_energy", r.log_energy}};
    const PoseEstimate pose = decode_assignment(r.assignment, grid);
    json centers = json::array();
    for (const auto& c : pose.joints) centers.push_back({c.x(), c.y(), c.z()});
    row["centers"] = centers;
    preds[ids[i]] = pose;
    if (!gts.empty()) {
      const ReprojectCheck rc = reproject_check(r.assignment, grid, gts[i], graph);
      row["mpjpe"] = rc.joint_err;
      row["mplle"] = rc.limb_err;
      sum_err += rc.joint_err;
      sum_limb += rc.limb_err;
    }
    if (a.oracle) {
      try {
        const MapResult bf = brute_force_map(unaries[i], graph, priors, cfg);
        const bool agree = bf.assignment == r.assignment || bf.energy == r.energy;
        row["oracle"] = agree ? "agree" : "disagree";
        ++checked;
        if (!agree) ++disagreements;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::SearchSpaceTooLarge) throw;
        row["oracle"] = "skipped";
      }
    }
    samples.push_back(row);
  }
  json summary = {{"n_samples", ids.size()}};
  if (!gts.empty()) {
    summary["mean_mpjpe"] = sum_err / static_cast<double>(ids.size());
    summary["mean_mplle"] = sum_limb / static_cast<double>(ids.size());
    summary["half_voxel_diagonal"] = 0.5 * grid.voxel_diagonal();
  }
  if (a.oracle) {
    summary["oracle_checked"] = checked;
    summary["oracle_disagreements"] = disagreements;
  }
  const json result = {{"epsilon_mm", cfg.epsilon_mm}, {"root", a.root}, {"summary", summary}, {"samples", samples}};
  fs::create_directories(out);
  write_file(out / "psm_result.json", result.dump(2) + "\n");
  write_poses_csv(out / "predictions.csv", preds);
  std::cout << "psm: " << ids.size() << " samples";
  if (!gts.empty()) std::cout << ", mean MPJPE " << fmt(summary["mean_mpjpe"].get<double>()) << " mm";
  if (a.oracle) std::cout << ", oracle " << checked << " checked / " << disagreements << " disagreements";
  std::cout << "\n";
  return disagreements == 0 ? kExitOk : kExitInternal;
}

// ------------------------------------------------------------------- train

const std::set<std::string> kTrainKeys = {
    "method",     "dataset",        "val_dataset", "val_fraction", "skeleton",    "grid",
    "epochs",     "batch",          "lr",          "beta1",        "beta2",       "adam_eps",
    "beta",       "lambda",         "alpha",       "eps",          "ga_sigma_mm", "lookup",
    "seed",       "checkpoint_every", "sigma_floor_mm", "weight_scale", "readout_gain", "output_dir"};

struct TrainSetup {
  TrainConfig cfg;
  std::vector<Sample> train;
  std::vector<Sample> val;
  SkeletonGraph graph;
  VoxelGrid grid;
  fs::path out;
};

TrainSetup parse_train(const Globals& g, const json& j) {
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, "train config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!kTrainKeys.count(k)) fail(ErrorCode::InvalidConfig, "train config: unknown key '" + k + "'");
  }
  const fs::path base = fs::path(g.config).parent_path();
  TrainSetup s;
  TrainConfig& c = s.cfg;
  double val_fraction = 0.25;
  std::string dataset, val_dataset, skeleton, output_dir;
  try {
    const std::string method = j.value("method", std::string("contextpose"));
    if (method == "psm") {
      fail(ErrorCode::InvalidConfig, "method 'psm' has no trainable parameters; use infer-psm");
    }
    c.variant = parse_model_variant(method);
    if (!j.contains("dataset")) fail(ErrorCode::InvalidConfig, "train config needs 'dataset'");
    dataset = j.at("dataset").get<std::string>();
    val_dataset = j.value("val_dataset", std::string());
    val_fraction = j.value("val_fraction", val_fraction);
    skeleton = j.value("skeleton", std::string());
    output_dir = j.value("output_dir", std::string());
    c.epochs = j.value("epochs", c.epochs);
    c.batch = j.value("batch", c.batch);
    c.adam.lr = j.value("lr", c.adam.lr);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.eps = j.value("adam_eps", c.adam.eps);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.sigma_floor_mm = j.value("sigma_floor_mm", c.sigma_floor_mm);
    c.init.alpha = j.value("alpha", c.init.alpha);
    c.init.eps = j.value("eps", c.init.eps);
    c.init.weight_scale = j.value("weight_scale", c.init.weight_scale);
    c.init.readout_gain = j.value("readout_gain", c.init.readout_gain);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("train config: ") + e.what());
  }
  if (g.seed) c.seed = *g.seed;
  c.threads = thread_count(g);
  if (c.epochs < 0 || c.batch < 1) fail(ErrorCode::InvalidConfig, "epochs must be >= 0 and batch >= 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) fail(ErrorCode::InvalidConfig, "val_fraction must lie in [0, 1)");
  if (!(c.adam.lr > 0.0)) fail(ErrorCode::InvalidConfig, "lr must be > 0");

  Dataset ds = read_dataset(resolve(base, dataset));
  s.grid = ds.grid();
  s.graph = ds.graph();
  if (!skeleton.empty()) {
    const SkeletonFile sf = load_skeleton_checked(resolve(base, skeleton).string());
    if (sf.graph.n_joints() != s.graph.n_joints()) {
      fail(ErrorCode::DataMismatch, "skeleton joint count differs from the dataset");
    }
    s.graph = sf.graph;
  }
  root_tree(s.graph, 0);
  if (j.contains("grid") && !(grid_from_json(j.at("grid")) == s.grid)) {
    fail(ErrorCode::DataMismatch, "configured grid differs from the dataset grid");
  }
  if (!val_dataset.empty()) {
    Dataset vd = read_dataset(resolve(base, val_dataset));
    if (!(vd.grid() == s.grid) || vd.graph().n_joints() != s.graph.n_joints()) {
      fail(ErrorCode::DataMismatch, "validation dataset does not match the training dataset");
    }
    s.train = std::move(ds.samples);
    s.val = std::move(vd.samples);
  } else {
    const std::size_t n = ds.samples.size();
    const auto n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(n)));
    if (n_val >= n) fail(ErrorCode::EmptyDataset, "no samples left for training");
    s.train.assign(ds.samples.begin(), ds.samples.end() - static_cast<std::ptrdiff_t>(n_val));
    s.val.assign(ds.samples.end() - static_cast<std::ptrdiff_t>(n_val), ds.samples.end());
  }
  if (s.train.empty()) fail(ErrorCode::EmptyDataset, "no training samples");

  c.loss = default_loss_config(s.grid);
  try {
    c.loss.beta = j.value("beta", c.loss.beta);
    c.loss.lambda = j.value("lambda", c.loss.lambda);
    c.loss.ga_sigma_mm = j.value("ga_sigma_mm", c.loss.ga_sigma_mm);
    const std::string lookup = j.value("lookup", std::string("nearest"));
    if (lookup == "nearest") {
      c.loss.lookup = HeatmapLookup::Nearest;
    } else if (lookup == "trilinear") {
      c.loss.lookup = HeatmapLookup::Trilinear;
    } else {
      fail(ErrorCode::InvalidConfig, "lookup must be 'nearest' or 'trilinear'");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("train config: ") + e.what());
  }
  if (!g.out.empty()) {
    s.out = g.out;
  } else if (!output_dir.empty()) {
    s.out = resolve(base, output_dir);
  } else {
    fail(ErrorCode::InvalidConfig, "give --out or output_dir");
  }
  return s;
}

json validation_metrics(const ToyModel& m, std::span<const Sample> val, const SkeletonGraph& g) {
  const auto preds = predict(m, val);
  double p1 = 0, abs_err = 0, limb = 0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    p1 += mpjpe_p1(preds[i], val[i].pose);
    abs_err += mean_joint_error(preds[i], val[i].pose);
    limb += mplle(preds[i], val[i].pose, g);
  }
  const double n = static_cast<double>(val.size());
  return {{"mpjpe_p1", p1 / n}, {"mpjpe_abs", abs_err / n}, {"mplle", limb / n}};
}

std::string checkpoint_name(int epoch) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "ckpt_epoch_%04d.ckpt", epoch);
  return buf;
}

int cmd_train(const Globals& g, const std::string& resume) {
  const json j = load_config(g.config);
  TrainSetup s = parse_train(g, j);
  TrainState st;
  if (!resume.empty()) {
    if (!fs::exists(resume)) fail(ErrorCode::InvalidConfig, "checkpoint not found: " + resume);
    st = load_checkpoint(resume);
    if (st.model.variant != s.cfg.variant) fail(ErrorCode::InvalidConfig, "checkpoint method differs from config");
    if (!(st.model.grid == s.grid) || st.model.n_joints() != s.graph.n_joints()) {
      fail(ErrorCode::DataMismatch, "checkpoint does not match the dataset");
    }
    log(LogLevel::Info, "resumed from " + resume + " at epoch " + std::to_string(st.epoch));
  } else {
    st = init_training(s.cfg, s.train, s.graph, s.grid);
  }
  // Stored with each checkpoint; excludes paths so relocated runs compare equal.
  json ckpt_cfg = j;
  ckpt_cfg.erase("output_dir");
  ckpt_cfg["seed"] = s.cfg.seed;

  fs::create_directories(s.out);
  const fs::path log_path = s.out / "train_log.jsonl";
  std::ofstream logf(log_path, resume.empty() ? std::ios::trunc : std::ios::app);
  if (!logf) fail(ErrorCode::Io, "cannot write " + log_path.string());
  if (resume.empty()) {
    const json start = {{"event", "start"},
                        {"method", std::string(to_string(s.cfg.variant))},
                        {"seed", s.cfg.seed},
                        {"n_train", s.train.size()},
                        {"n_val", s.val.size()},
                        {"n_params", flatten_parameters(st.model).size()}};
    logf << start.dump() << "\n";
  }
  while (st.epoch < s.cfg.epochs) {
    const EpochLog el = train_epoch(st, s.train, s.cfg);
    json line = {{"event", "epoch"}, {"epoch", el.epoch}, {"step", el.step},
                 {"loss", el.loss},  {"l3d", el.l3d},     {"lga", el.lga}};
    if (!s.val.empty()) line["val"] = validation_metrics(st.model, s.val, s.graph);
    logf << line.dump() << "\n";
    logf.flush();
    log(LogLevel::Debug, line.dump());
    if (s.cfg.checkpoint_every > 0 && el.epoch % s.cfg.checkpoint_every == 0) {
      save_checkpoint(s.out / checkpoint_name(el.epoch), st, ckpt_cfg);
    }
  }
  save_checkpoint(s.out / "final.ckpt", st, ckpt_cfg);
  if (!s.val.empty()) {
    PoseTable preds;
    const auto p = predict(st.model, s.val);
    for (std::size_t i = 0; i < s.val.size(); ++i) preds[s.val[i].id] = p[i];
    write_poses_csv(s.out / "predictions.csv", preds);
    PoseTable gts;
    for (const auto& v : s.val) gts[v.id] = v.pose;
    write_poses_csv(s.out / "val_gt.csv", gts);
  }
  std::cout << "trained " << to_string(s.cfg.variant) << " for " << st.epoch << " epochs (" << st.step
            << " steps); outputs in " << s.out.string() << "\n";
  return kExitOk;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string skeleton;
  bool scale = false;
  double pck_threshold = 150.0;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
  const fs::path out = require_out(g);
  PoseTable gts;
  std::optional<SkeletonGraph> graph;
  if (fs::is_directory(a.gt)) {
    const json m = json::parse(read_file(fs::path(a.gt) / "manifest.json"));
    graph = synth_config_from_json(m.at("config"), a.gt).skeleton.graph;
    gts = read_poses_csv(fs::path(a.gt) / "poses.csv");
  } else {
    gts = read_poses_csv(a.gt);
  }
  if (!a.skeleton.empty()) graph = load_skeleton_checked(a.skeleton).graph;
  if (!graph) fail(ErrorCode::InvalidConfig, "--skeleton is required when --gt is a pose file");
  const PoseTable preds = read_poses_csv(a.pred);

  std::set<int> pid, gid;
  for (const auto& [id, p] : preds) pid.insert(id);
  for (const auto& [id, p] : gts) gid.insert(id);
  if (pid != gid) fail(ErrorCode::DataMismatch, "prediction and ground-truth sample sets differ");
  std::vector<PoseEstimate> pv, gv;
  std::vector<int> ids;
  for (const auto& [id, p] : preds) {
    const auto& gt = gts.at(id);
    if (p.size() != gt.size() || static_cast<int>(gt.size()) != graph->n_joints()) {
      fail(ErrorCode::DataMismatch, "joint count mismatch in sample " + std::to_string(id));
    }
    ids.push_back(id);
    pv.push_back(p);
    gv.push_back(gt);
  }
  PckConfig pck;
  pck.threshold_mm = a.pck_threshold;
  const MetricReport r = evaluate(pv, gv, *graph, pck);

  json report = {{"n_samples", ids.size()}, {"mpjpe_p1", r.mpjpe_p1}, {"mpjpe_p2", r.mpjpe_p2},
                 {"mplle", r.mplle},        {"mplae", r.mplae},       {"pck", r.pck},
                 {"auc", r.auc},            {"pck_threshold_mm", pck.threshold_mm}};
  if (a.scale) report["mpjpe_p2_scaled"] = r.mpjpe_p2_scaled;
  std::string csv = a.scale ? "sample_id,mpjpe_p1,mpjpe_p2,mpjpe_p2_scaled,mplle,mplae\n"
                            : "sample_id,mpjpe_p1,mpjpe_p2,mplle,mplae\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& m = r.per_sample[i];
    csv += std::to_string(ids[i]) + "," + fmt(m.mpjpe_p1) + "," + fmt(m.mpjpe_p2) + ",";
    if (a.scale) csv += fmt(m.mpjpe_p2_scaled) + ",";
    csv += fmt(m.mplle) + "," + fmt(m.mplae) + "\n";
  }
  fs::create_directories(out);
  write_file(out / "report.json", report.dump(2) + "\n");
  write_file(out / "per_sample.csv", csv);
  std::cout << "eval: " << ids.size() << " samples, MPJPE " << fmt(r.mpjpe_p1) << " mm, MPLLE " << fmt(r.mplle)
            << " mm, PCK " << fmt(r.pck) << ", AUC " << fmt(r.auc) << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------- compare

std::map<int, double> read_metric_column(const std::string& path, const std::string& metric) {
  std::istringstream in(read_file(path));
  std::string header;
  std::getline(in, header);
  std::vector<std::string> cols;
  {
    std::stringstream hs(header);
    std::string c;
    while (std::getline(hs, c, ',')) cols.push_back(c);
  }
  const auto it = std::find(cols.begin(), cols.end(), metric);
  if (cols.empty() || cols.front() != "sample_id" || it == cols.end()) {
    fail(ErrorCode::InvalidConfig, path + ": no column '" + metric + "'");
  }
  const auto idx = static_cast<std::size_t>(it - cols.begin());
  std::map<int, double> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) f.push_back(c);
    if (f.size() != cols.size()) fail(ErrorCode::Io, path + ": malformed row");
    out[std::stoi(f[0])] = std::strtod(f[idx].c_str(), nullptr);
  }
  return out;
}

int cmd_compare(const Globals& g, const std::string& pa, const std::string& pb, const std::string& metric) {
  const fs::path out = require_out(g);
  const auto a = read_metric_column(pa, metric);
  const auto b = read_metric_column(pb, metric);
  std::set<int> ia, ib;
  for (const auto& [id, v] : a) ia.insert(id);
  for (const auto& [id, v] : b) ib.insert(id);
  if (ia != ib) fail(ErrorCode::DataMismatch, "compared runs cover different samples");
  std::string dat = "# per-sample " + metric + " difference, diff = b - a (negative: b is better)\n";
  dat += "# sample_id a b diff\n";
  double sum = 0.0;
  int better = 0;
  for (const auto& [id, va] : a) {
    const double vb = b.at(id);
    const double d = vb - va;
    sum += d;
    if (d < 0) ++better;
    dat += std::to_string(id) + " " + fmt(va) + " " + fmt(vb) + " " + fmt(d) + "\n";
  }
  fs::path file = out;
  if (file.extension() != ".dat") {
    fs::create_directories(file);
    file /= "compare_" + metric + ".dat";
  }
  write_file(file, dat);
  std::cout << "compare " << metric << ": " << a.size() << " samples, mean diff (b - a) "
            << fmt(a.empty() ? 0.0 : sum / static_cast<double>(a.size())) << ", b better on " << better << "\n";
  return kExitOk;
}

// --------------------------------------------------------------- gradcheck

int cmd_gradcheck(const Globals& g, const std::string& method, int seeds, double tol, double step) {
  const ModelVariant v = parse_model_variant(method);
  if (seeds < 1) fail(ErrorCode::InvalidConfig, "--seeds must be >= 1");
  const std::uint64_t base = g.seed.value_or(0);
  double worst = 0.0;
  json rows = json::array();
  for (int i = 0; i < seeds; ++i) {
    const auto inst = make_gradcheck_instance(v, base + static_cast<std::uint64_t>(i));
    const auto rep = gradcheck(inst.model, inst.sample, inst.loss, step);
    worst = std::max(worst, rep.max_rel_error);
    rows.push_back({{"seed", base + static_cast<std::uint64_t>(i)},
                    {"n_params", rep.entries.size()},
                    {"max_rel_error", rep.max_rel_error}});
  }
  const bool ok = worst <= tol;
  if (!g.out.empty()) {
    const json report = {{"method", method}, {"tolerance", tol}, {"max_rel_error", worst}, {"pass", ok}, {"seeds", rows}};
    fs::create_directories(g.out);
    write_file(fs::path(g.out) / "gradcheck.json", report.dump(2) + "\n");
  }
  std::cout << "gradcheck " << method << ": " << seeds << " seeds, max relative error " << fmt(worst)
            << (ok ? " (pass)" : " (FAIL)") << "\n";
  return ok ? kExitOk : kExitInternal;
}

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::UnknownUpdateFunction:
    case ErrorCode::BoxTooSmall:
    case ErrorCode::NonPositiveSigma:
      return kExitConfig;
    case ErrorCode::CyclicGraph:
    case ErrorCode::DisconnectedGraph:
    case ErrorCode::InvalidEdge:
      return kExitGraph;
    case ErrorCode::DataMismatch:
      return kExitDataMismatch;
    default:
      return kExitInternal;
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Context modeling for voxel-based 3D pose estimation: PSM, graph layers and ContextPose"};
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Config file (JSON)");
  app.add_option("--seed", g.seed, "Override the configured seed");
  app.add_option("--threads", g.threads, "Worker threads (default: available cores)");
  app.add_option("--out", g.out, "Output directory");

  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset");

  PsmArgs psm;
  auto* inf = app.add_subcommand("infer-psm", "Run PSM inference by max-product dynamic programming");
  inf->add_option("--dataset", psm.dataset, "Dataset directory");
  inf->add_option("--unary", psm.unary, "Single unary volume");
  inf->add_option("--skeleton", psm.skeleton, "Skeleton JSON (with priors for --unary)");
  inf->add_option("--root", psm.root, "Root joint of the tree");
  inf->add_option("--epsilon", psm.epsilon, "Pairwise window half-width in mm (default: voxel diagonal)");
  inf->add_option("--max-search", psm.max_search, "Largest search space for --oracle");
  inf->add_flag("--oracle", psm.oracle, "Cross-check against brute force when feasible");

  std::string resume;
  auto* tr = app.add_subcommand("train", "Train a toy model");
  tr->add_option("--resume", resume, "Checkpoint to resume from");

  EvalArgs ev;
  auto* eva = app.add_subcommand("eval", "Evaluate predictions against ground truth");
  eva->add_option("--pred", ev.pred, "Predicted poses (CSV)")->required();
  eva->add_option("--gt", ev.gt, "Ground truth: dataset directory or poses CSV")->required();
  eva->add_option("--skeleton", ev.skeleton, "Skeleton JSON");
  eva->add_option("--pck-threshold", ev.pck_threshold, "PCK threshold in mm");
  eva->add_flag("--scale", ev.scale, "Also report protocol #2 with scale");

  std::string ca, cb, metric = "mplle";
  auto* cmp = app.add_subcommand("compare", "Per-sample metric difference between two evaluated runs");
  cmp->add_option("--a", ca, "per_sample.csv of run a")->required();
  cmp->add_option("--b", cb, "per_sample.csv of run b")->required();
  cmp->add_option("--metric", metric, "Column to compare");

  std::string gc_method = "contextpose";
  int gc_seeds = 50;
  double gc_tol = 1e-5;
  double gc_step = 3e-4;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the analytic gradients");
  gc->add_option("--method", gc_method, "Model variant");
  gc->add_option("--seeds", gc_seeds, "Number of random instances");
  gc->add_option("--tol", gc_tol, "Relative error tolerance");
  gc->add_option("--step", gc_step, "Relative finite-difference step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_generate(g);
    if (inf->parsed()) return cmd_infer_psm(g, psm);
    if (tr->parsed()) return cmd_train(g, resume);
    if (eva->parsed()) return cmd_eval(g, ev);
    if (cmp->parsed()) return cmd_compare(g, ca, cb, metric);
    if (gc->parsed()) return cmd_gradcheck(g, gc_method, gc_seeds, gc_tol, gc_step);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace ctxpose
