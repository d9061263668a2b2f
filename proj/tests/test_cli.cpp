#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ctxpose/dataset.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Workspace {
 public:
  explicit Workspace(const std::string& name) : root_(fs::temp_directory_path() / ("ctxpose_cli_" + name)) {
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  ~Workspace() { fs::remove_all(root_); }
  fs::path operator/(const std::string& p) const { return root_ / p; }

  fs::path write(const std::string& name, const json& j) const {
    const auto p = root_ / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }

  Run run(const std::string& args) const {
    const auto log = root_ / "cli.log";
    const std::string cmd = "CTXPOSE_LOG=quiet \"" CTXPOSE_CLI "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
  }

 private:
  fs::path root_;
};

json chain_dataset(int n, double noise, double occlusion) {
  return {{"seed", 7},
          {"n_samples", n},
          {"skeleton", {{"preset", "chain"}, {"n_joints", 3}, {"bone_length_mm", 40}}},
          {"grid", {{"dims", {4, 4, 4}}, {"origin", {0, 0, 0}}, {"spacing", {60, 60, 60}}}},
          {"angle_range_deg", 30},
          {"noise", noise},
          {"occlusion_prob", occlusion},
          {"channels", 2}};
}

int count_files(const fs::path& dir, const std::string& ext) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
  return n;
}

}  // namespace

TEST_CASE("generate: files, determinism, config errors") {
  Workspace w("gen");
  const auto cfg = w.write("gen.json", chain_dataset(4, 0.05, 0.3));
  auto r = w.run("generate --config " + cfg.string() + " --out " + (w / "a").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(count_files(w / "a", ".vol") == 4);
  CHECK(fs::exists(w / "a" / "manifest.json"));
  CHECK(w.run("generate --config " + cfg.string() + " --out " + (w / "b").string()).code == 0);
  for (const auto& e : fs::directory_iterator(w / "a"))
    CHECK(slurp(e.path()) == slurp(w / "b" / e.path().filename()));

  auto missing = chain_dataset(4, 0.05, 0.3);
  missing["skeleton"] = {{"file", "no_such_skeleton.json"}};
  r = w.run("generate --config " + w.write("m.json", missing).string() + " --out " + (w / "c").string());
  CHECK(r.code == 2);
  CHECK(r.output.find("no_such_skeleton.json") != std::string::npos);

  auto unknown = chain_dataset(4, 0.05, 0.3);
  unknown["colour"] = 1;
  CHECK(w.run("generate --config " + w.write("u.json", unknown).string() + " --out " + (w / "d").string()).code == 2);
  CHECK(w.run("generate --config " + (w / "absent.json").string() + " --out " + (w / "e").string()).code == 2);
  CHECK(w.run("frobnicate").code == 2);
}

TEST_CASE("infer-psm: noiseless recovery, oracle, cyclic skeleton") {
  Workspace w("psm");
  auto cfg = chain_dataset(5, 0.0, 0.0);
  cfg["grid"]["dims"] = {3, 3, 3};
  cfg["grid"]["spacing"] = {80, 80, 80};
  cfg["angle_range_deg"] = 20;
  REQUIRE(w.run("generate --config " + w.write("g.json", cfg).string() + " --out " + (w / "ds").string()).code == 0);
  auto r = w.run("infer-psm --dataset " + (w / "ds").string() + " --oracle --out " + (w / "psm").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const auto res = json::parse(slurp(w / "psm" / "psm_result.json"));
  CHECK(res["summary"]["oracle_disagreements"] == 0);
  CHECK(res["summary"]["oracle_checked"] == 5);
  CHECK(res["summary"]["mean_mpjpe"].get<double>() <= res["summary"]["half_voxel_diagonal"].get<double>() + 1e-9);
  CHECK(res["samples"][0]["centers"].size() == 3);
  CHECK(fs::exists(w / "psm" / "predictions.csv"));

  const json tri = {{"n_joints", 3}, {"edges", {{0, 1}, {1, 2}, {2, 0}}}};
  r = w.run("infer-psm --dataset " + (w / "ds").string() + " --skeleton " + w.write("tri.json", tri).string() +
            " --out " + (w / "psm2").string());
  CHECK(r.code == 3);
  const json split = {{"n_joints", 3}, {"edges", {{0, 1}}}};
  CHECK(w.run("infer-psm --dataset " + (w / "ds").string() + " --skeleton " + w.write("s.json", split).string() +
              " --out " + (w / "psm3").string())
            .code == 3);
}

TEST_CASE("train, eval, compare") {
  Workspace w("train");
  REQUIRE(w.run("generate --config " + w.write("g.json", chain_dataset(8, 0.1, 0.3)).string() + " --out " +
                (w / "ds").string())
              .code == 0);
  json tcfg = {{"method", "contextpose"}, {"dataset", (w / "ds").string()}, {"epochs", 1}, {"batch", 2},
               {"val_fraction", 0.5},     {"lambda", 0.0},                  {"weight_scale", 0.1}};
  const auto start = std::chrono::steady_clock::now();
  auto r = w.run("train --config " + w.write("t.json", tcfg).string() + " --out " + (w / "run").string());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(secs < 60);

  std::istringstream logs(slurp(w / "run" / "train_log.jsonl"));
  std::string line;
  std::vector<json> lines;
  while (std::getline(logs, line)) lines.push_back(json::parse(line));
  REQUIRE(lines.size() == 2);
  CHECK(lines[0]["event"] == "start");
  CHECK(lines[1].contains("lga"));
  CHECK(lines[1]["lga"].get<double>() > 0);
  CHECK(lines[1]["loss"].get<double>() == lines[1]["l3d"].get<double>());
  CHECK(lines[1]["val"].contains("mplle"));
  CHECK(fs::exists(w / "run" / "final.ckpt"));

  const auto sk = w.write("sk.json", json{{"n_joints", 3}, {"edges", {{0, 1}, {1, 2}}}});

  // eval of the ground truth against itself
  r = w.run("eval --pred " + (w / "ds" / "poses.csv").string() + " --gt " + (w / "ds").string() + " --out " +
            (w / "self").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const auto rep = json::parse(slurp(w / "self" / "report.json"));
  CHECK(rep["n_samples"] == 8);
  CHECK(rep["mpjpe_p1"] == 0.0);
  CHECK(rep["mplle"] == 0.0);
  CHECK(rep["pck"] == 1.0);
  CHECK(rep["auc"] == 1.0);
  CHECK(rep["mpjpe_p2"].get<double>() <= 1e-8);

  // validation predictions cover only part of the dataset
  r = w.run("eval --pred " + (w / "run" / "predictions.csv").string() + " --gt " + (w / "ds").string() +
            " --out " + (w / "bad").string());
  CHECK(r.code == 4);

  r = w.run("eval --pred " + (w / "run" / "predictions.csv").string() + " --gt " +
            (w / "run" / "val_gt.csv").string() + " --skeleton " + sk.string() + " --out " + (w / "ev").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(fs::exists(w / "ev" / "per_sample.csv"));
  r = w.run("compare --a " + (w / "ev" / "per_sample.csv").string() + " --b " +
            (w / "ev" / "per_sample.csv").string() + " --out " + (w / "cmp").string());
  REQUIRE(r.code == 0);
  std::istringstream dat(slurp(w / "cmp" / "compare_mplle.dat"));
  int rows = 0;
  while (std::getline(dat, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double id, a, b, d;
    ls >> id >> a >> b >> d;
    CHECK(d == 0.0);
    ++rows;
  }
  CHECK(rows == 4);

  tcfg["method"] = "psm";
  CHECK(w.run("train --config " + w.write("p.json", tcfg).string() + " --out " + (w / "x").string()).code == 2);
  tcfg["method"] = "contextpose";
  tcfg["learning_rate"] = 1;
  CHECK(w.run("train --config " + w.write("k.json", tcfg).string() + " --out " + (w / "y").string()).code == 2);
}

TEST_CASE("train: resume reproduces an uninterrupted run") {
  Workspace w("resume");
  REQUIRE(w.run("generate --config " + w.write("g.json", chain_dataset(8, 0.1, 0.3)).string() + " --out " +
                (w / "ds").string())
              .code == 0);
  json tcfg = {{"method", "pa_only"}, {"dataset", (w / "ds").string()}, {"epochs", 3}, {"batch", 3},
               {"weight_scale", 0.1}, {"checkpoint_every", 1}, {"lr", 1e-2}};
  const auto full = w.write("full.json", tcfg);
  REQUIRE(w.run("train --config " + full.string() + " --out " + (w / "a").string()).code == 0);
  CHECK(fs::exists(w / "a" / "ckpt_epoch_0001.ckpt"));
  REQUIRE(w.run("train --config " + full.string() + " --out " + (w / "b").string() + " --resume " +
                (w / "a" / "ckpt_epoch_0001.ckpt").string())
              .code == 0);
  CHECK(slurp(w / "a" / "final.ckpt") == slurp(w / "b" / "final.ckpt"));
  CHECK(slurp(w / "a" / "predictions.csv") == slurp(w / "b" / "predictions.csv"));
  CHECK(slurp(w / "a" / "ckpt_epoch_0003.ckpt") == slurp(w / "b" / "ckpt_epoch_0003.ckpt"));
}

TEST_CASE("gradcheck subcommand") {
  Workspace w("gc");
  auto r = w.run("gradcheck --method lcn --seeds 3 --out " + (w / "gc").string());
  CHECK_MESSAGE(r.code == 0, r.output);
  const auto j = json::parse(slurp(w / "gc" / "gradcheck.json"));
  CHECK(j["pass"] == true);
  CHECK(w.run("gradcheck --method nope").code == 2);
}
