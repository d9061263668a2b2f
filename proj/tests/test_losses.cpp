#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "ctxpose/contextpose.hpp"
#include "ctxpose/losses.hpp"
#include "ctxpose/rng.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace ctxpose;

namespace {

Heatmap random_heatmap(const VoxelGrid& g, int n, Rng& rng) {
  Heatmap h(g, n);
  for (double& v : h.values) v = rng.normal();
  return softmax_heatmap(h);
}

GlobalAttention to_ga(const Heatmap& h) {
  GlobalAttention ga;
  ga.grid = h.grid;
  ga.n_joints = h.n_joints;
  ga.values = h.values;
  return ga;
}

PoseEstimate random_inside(const VoxelGrid& g, int n, Rng& rng) {
  PoseEstimate p(n);
  for (auto& j : p.joints)
    for (int a = 0; a < 3; ++a) j[a] = rng.uniform(g.box_min()[a], g.box_max()[a]);
  return p;
}

// Euclidean projection onto the probability simplex by sorting.
std::vector<double> project_simplex(std::vector<double> y) {
  std::vector<double> s = y;
  std::sort(s.begin(), s.end(), std::greater<>());
  double cum = 0, theta = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    cum += s[i];
    const double t = (cum - 1) / static_cast<double>(i + 1);
    if (s[i] - t > 0) theta = t;
  }
  for (double& v : y) v = std::max(v - theta, 0.0);
  return y;
}

const VoxelGrid kGrid({3, 3, 3}, Vec3(-30, -30, -30), Vec3(20, 20, 20));

}  // namespace

TEST_CASE("default attention target width is two pitches") {
  CHECK(default_loss_config(VoxelGrid({2, 2, 2}, Vec3::Zero(), Vec3(10, 30, 20))).ga_sigma_mm == 60.0);
  const LossConfig c;
  CHECK(c.beta == 1e-2);
  CHECK(c.lambda == 1e6);
}

TEST_CASE("loss_3d: examples") {
  Rng rng(1);
  const auto gt = random_inside(kGrid, 3, rng);
  Heatmap uni(kGrid, 3);
  std::fill(uni.values.begin(), uni.values.end(), 1.0 / 27);
  LossConfig cfg;
  CHECK(loss_3d(gt, gt, uni, cfg).value == doctest::Approx(-cfg.beta * std::log(1.0 / 27)).epsilon(1e-14));

  cfg.beta = 0;
  PoseEstimate off = gt;
  for (auto& j : off.joints) j += Vec3(1, -2, 3);
  CHECK(loss_3d(off, gt, uni, cfg).value == doctest::Approx(6.0).epsilon(1e-13));

  PoseEstimate far = gt;
  far[1] = Vec3(1000, 0, 0);
  CHECK_FAILS_WITH(loss_3d(gt, far, uni, cfg), ErrorCode::GtOutsideGrid);
  Heatmap bad(kGrid, 3);
  CHECK_FAILS_WITH(loss_3d(gt, gt, bad, cfg), ErrorCode::UnnormalizedHeatmap);
}

TEST_CASE("loss_3d: loop oracle and nonnegativity") {
  const auto centers = oracle::centers(kGrid);
  for (int s = 0; s < 10; ++s) {
    Rng rng(10 + s);
    const auto hm = random_heatmap(kGrid, 4, rng);
    const auto gt = random_inside(kGrid, 4, rng), pred = random_inside(kGrid, 4, rng);
    LossConfig cfg;
    double ref = 0;
    for (int u = 0; u < 4; ++u) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < centers.size(); ++k)
        if ((centers[k] - gt[u]).norm() < (centers[best] - gt[u]).norm()) best = k;
      ref += (pred[u] - gt[u]).cwiseAbs().sum() - cfg.beta * std::log(hm.values[u * 27 + best]);
    }
    ref /= 4;
    const double lib = loss_3d(pred, gt, hm, cfg).value;
    CHECK(std::abs(lib - ref) <= 1e-12 * std::abs(ref));
    CHECK(lib >= 0);
  }
}

TEST_CASE("loss_ga: examples") {
  const VoxelGrid one({1, 1, 1}, Vec3::Zero(), Vec3(10, 10, 10));
  GlobalAttention ga;
  ga.grid = one;
  ga.n_joints = 1;
  ga.values = {1.0};
  LossConfig cfg;
  cfg.ga_sigma_mm = 20;
  CHECK(loss_ga(ga, PoseEstimate({Vec3(5, 5, 5)}), cfg).value == 0.0);
  CHECK_FAILS_WITH(loss_ga(ga, PoseEstimate({Vec3(500, 5, 5)}), cfg), ErrorCode::GtOutsideGrid);

  const VoxelGrid g2({2, 2, 2}, Vec3::Zero(), Vec3(10, 10, 10));
  Rng rng(3);
  const auto ga2 = to_ga(random_heatmap(g2, 1, rng));
  const auto gt = random_inside(g2, 1, rng);
  double ref = 0;
  for (std::size_t k = 0; k < 8; ++k) {
    const Vec3 c = oracle::centers(g2)[k];
    const double t = std::exp(-(c - gt[0]).squaredNorm() / (2 * 20.0 * 20.0));
    ref += (ga2.values[k] - t) * (ga2.values[k] - t);
  }
  ref /= 1 * 8;
  CHECK(std::abs(loss_ga(ga2, gt, cfg).value - ref) <= 1e-12 * ref);
}

TEST_CASE("loss_ga: KKT conditions at the simplex projection of the target") {
  for (int s = 0; s < 10; ++s) {
    Rng rng(20 + s);
    const auto gt = random_inside(kGrid, 2, rng);
    LossConfig cfg;
    cfg.ga_sigma_mm = rng.uniform(5, 40);
    GlobalAttention ga;
    ga.grid = kGrid;
    ga.n_joints = 2;
    for (int u = 0; u < 2; ++u) {
      const auto p = project_simplex(gaussian_heatmap(kGrid, gt[u], cfg.ga_sigma_mm));
      ga.values.insert(ga.values.end(), p.begin(), p.end());
    }
    const auto g = loss_ga(ga, gt, cfg).grad_ga;
    for (int u = 0; u < 2; ++u) {
      double c = 0;
      int support = 0;
      for (int k = 0; k < 27; ++k)
        if (ga.values[u * 27 + k] > 0) c += g[u * 27 + k], ++support;
      c /= support;
      for (int k = 0; k < 27; ++k) {
        const double gk = g[u * 27 + k];
        if (ga.values[u * 27 + k] > 0)
          CHECK(std::abs(gk - c) <= 1e-8);
        else
          CHECK(gk >= c - 1e-8);
      }
    }
  }
}

TEST_CASE("total_loss: combination") {
  Rng rng(4);
  const auto hm = random_heatmap(kGrid, 2, rng);
  const auto ga = to_ga(random_heatmap(kGrid, 2, rng));
  const auto gt = random_inside(kGrid, 2, rng), pred = random_inside(kGrid, 2, rng);
  LossConfig cfg = default_loss_config(kGrid);
  const double l3 = loss_3d(pred, gt, hm, cfg).value, lg = loss_ga(ga, gt, cfg).value;
  const auto t = total_loss(pred, gt, hm, ga, cfg);
  CHECK(t.value == doctest::Approx(l3 + 1e6 * lg).epsilon(1e-14));
  cfg.lambda = 0;
  const auto z = total_loss(pred, gt, hm, ga, cfg);
  CHECK(z.value == l3);
  for (double g : z.grad_ga) CHECK(g == 0.0);
}

TEST_CASE("loss gradients match finite differences") {
  for (auto lookup : {HeatmapLookup::Nearest, HeatmapLookup::Trilinear}) {
    Rng rng(5);
    auto hm = random_heatmap(kGrid, 2, rng);
    auto ga = to_ga(random_heatmap(kGrid, 2, rng));
    const auto gt = random_inside(kGrid, 2, rng);
    auto pred = random_inside(kGrid, 2, rng);
    LossConfig cfg = default_loss_config(kGrid);
    cfg.lookup = lookup;
    cfg.lambda = 3.0;
    const auto t = total_loss(pred, gt, hm, ga, cfg);
    // Normalization is checked with a 1e-6 tolerance, so perturbations stay well below it.
    auto fd = [&](double& slot) {
      const double h = 1e-7, keep = slot;
      slot = keep + h;
      const double up = total_loss(pred, gt, hm, ga, cfg).value;
      slot = keep - h;
      const double dn = total_loss(pred, gt, hm, ga, cfg).value;
      slot = keep;
      return (up - dn) / (2 * h);
    };
    auto close = [](double a, double n) { return std::abs(a - n) <= 1e-5 * std::max(1.0, std::abs(n)); };
    for (int u = 0; u < 2; ++u)
      for (int a = 0; a < 3; ++a) CHECK(close(t.grad_pose[u][a], fd(pred[u][a])));
    for (std::size_t i = 0; i < hm.values.size(); ++i) CHECK(close(t.grad_heatmap[i], fd(hm.values[i])));
    for (std::size_t i = 0; i < ga.values.size(); ++i) CHECK(close(t.grad_ga[i], fd(ga.values[i])));
  }
}
