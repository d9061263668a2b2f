#include <cmath>

#include "ctxpose/psm.hpp"
#include "ctxpose/rng.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace ctxpose;

namespace {

UnaryScores random_unaries(const VoxelGrid& g, int n, Rng& rng) {
  UnaryScores u(g, n);
  for (double& v : u.values) v = rng.uniform();
  return u;
}

PriorTable random_priors(const SkeletonGraph& sk, const VoxelGrid& g, Rng& rng) {
  PriorTable p;
  const double diag = (g.box_max() - g.box_min()).norm();
  for (const auto& [u, v] : sk.edges()) p.set(u, v, {rng.uniform(0, diag), 1.0});
  return p;
}

bool tie_aware_same(const MapResult& a, const MapResult& b) {
  return a.assignment == b.assignment || std::abs(a.energy - b.energy) <= 1e-12 * std::max(1.0, a.energy);
}

}  // namespace

TEST_CASE("hard_pairwise: closed window") {
  PsmConfig cfg;
  cfg.epsilon_mm = 50;
  const LimbPrior p{300, 0};
  CHECK(hard_pairwise(Vec3::Zero(), Vec3(300, 0, 0), p, cfg) == 1);
  CHECK(hard_pairwise(Vec3::Zero(), Vec3(351, 0, 0), p, cfg) == 0);
  CHECK(hard_pairwise(Vec3::Zero(), Vec3(350, 0, 0), p, cfg) == 1);
  CHECK(hard_pairwise(Vec3::Zero(), Vec3(250, 0, 0), p, cfg) == 1);
  CHECK(hard_pairwise(Vec3::Zero(), Vec3(249, 0, 0), p, cfg) == 0);
}

TEST_CASE("default epsilon is half the voxel diagonal") {
  const VoxelGrid g({2, 2, 2}, Vec3::Zero(), Vec3(10, 20, 20));
  CHECK(default_psm_config(g).epsilon_mm == doctest::Approx(15.0));
}

TEST_CASE("energy: examples") {
  const VoxelGrid g({2, 1, 1}, Vec3::Zero(), Vec3(100, 100, 100));
  const auto single = build_graph(1, std::vector<Edge>{});
  UnaryScores u(g, 1);
  u.values = {0.7, 0.2};
  PsmConfig cfg;
  CHECK(energy({0}, u, single, PriorTable{}, cfg) == doctest::Approx(0.7).epsilon(1e-15));

  const auto chain = build_graph(2, std::vector<Edge>{{0, 1}});
  UnaryScores u2(g, 2);
  u2.values = {1, 1, 1, 1};
  PriorTable pr;
  pr.set(0, 1, {100, 0});
  cfg.epsilon_mm = 10;
  CHECK(energy({0, 1}, u2, chain, pr, cfg) == 1.0);
  CHECK(energy({0, 0}, u2, chain, pr, cfg) == 0.0);
  CHECK(std::isinf(log_energy({0, 0}, u2, chain, pr, cfg)));
}

TEST_CASE("energy: all 64 assignments of a 2-joint chain on 2^3") {
  Rng rng(1);
  const VoxelGrid g({2, 2, 2}, Vec3::Zero(), Vec3(10, 10, 10));
  const auto sk = build_graph(2, std::vector<Edge>{{0, 1}});
  const auto un = random_unaries(g, 2, rng);
  PriorTable pr;
  pr.set(0, 1, {12, 0});
  PsmConfig cfg;
  cfg.epsilon_mm = 3;
  int feasible = 0;
  for (std::size_t a = 0; a < 8; ++a)
    for (std::size_t b = 0; b < 8; ++b) {
      const Assignment as{a, b};
      const double ref = oracle::psm_energy(as, un, sk, pr, cfg.epsilon_mm);
      CHECK(energy(as, un, sk, pr, cfg) == doctest::Approx(ref).epsilon(1e-13));
      feasible += ref > 0;
    }
  CHECK(feasible == 48);  // axis and face-diagonal neighbors
}

TEST_CASE("brute_force_map: all-zero unaries tie-break to all zeros") {
  const VoxelGrid g({2, 2, 1}, Vec3::Zero(), Vec3(10, 10, 10));
  const auto sk = build_graph(3, std::vector<Edge>{{0, 1}, {1, 2}});
  PriorTable pr;
  pr.set(0, 1, {10, 0});
  pr.set(1, 2, {10, 0});
  const UnaryScores un(g, 3);
  PsmConfig cfg;
  const auto r = brute_force_map(un, sk, pr, cfg);
  CHECK(r.energy == 0.0);
  CHECK(r.assignment == Assignment{0, 0, 0});
  CHECK(dp_map(un, root_tree(sk), pr, cfg).energy == 0.0);
}

TEST_CASE("brute_force_map: search cap") {
  const VoxelGrid g({4, 4, 4}, Vec3::Zero(), Vec3(10, 10, 10));
  const auto sk = build_graph(4, std::vector<Edge>{{0, 1}, {1, 2}, {2, 3}});
  PriorTable pr;
  for (const auto& [u, v] : sk.edges()) pr.set(u, v, {10, 0});
  PsmConfig cfg;
  CHECK_FAILS_WITH(brute_force_map(UnaryScores(g, 4), sk, pr, cfg), ErrorCode::SearchSpaceTooLarge);
}

TEST_CASE("dp_map: single joint is the unary argmax") {
  Rng rng(2);
  const VoxelGrid g({3, 3, 3}, Vec3::Zero(), Vec3(10, 10, 10));
  const auto sk = build_graph(1, std::vector<Edge>{});
  for (int t = 0; t < 5; ++t) {
    const auto un = random_unaries(g, 1, rng);
    std::size_t best = 0;
    for (std::size_t k = 1; k < g.size(); ++k)
      if (un.values[k] > un.values[best]) best = k;
    const auto r = dp_map(un, root_tree(sk), PriorTable{}, PsmConfig{});
    CHECK(r.assignment == Assignment{best});
    CHECK(r.energy == un.values[best]);
  }
}

TEST_CASE("dp_map: 3-joint chain on 3x1x1 with adjacent-only window") {
  const VoxelGrid g({3, 1, 1}, Vec3::Zero(), Vec3(10, 10, 10));
  const auto sk = build_graph(3, std::vector<Edge>{{0, 1}, {1, 2}});
  PriorTable pr;
  pr.set(0, 1, {10, 0});
  pr.set(1, 2, {10, 0});
  PsmConfig cfg;
  cfg.epsilon_mm = 1;
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    auto un = random_unaries(g, 3, rng);
    const auto dp = dp_map(un, root_tree(sk, 1), pr, cfg);
    const auto bf = brute_force_map(un, sk, pr, cfg);
    CHECK(tie_aware_same(dp, bf));
    const auto& a = dp.assignment;
    CHECK(std::abs(static_cast<int>(a[0]) - static_cast<int>(a[1])) == 1);
    CHECK(std::abs(static_cast<int>(a[1]) - static_cast<int>(a[2])) == 1);
  }
}

TEST_CASE("dp_map matches brute force on random 4-joint trees, 20 seeds") {
  const VoxelGrid g({2, 2, 2}, Vec3::Zero(), Vec3(10, 10, 10));
  for (int s = 0; s < 20; ++s) {
    Rng rng(100 + s);
    const auto sk = oracle::random_tree(4, rng);
    const auto un = random_unaries(g, 4, rng);
    const auto pr = random_priors(sk, g, rng);
    PsmConfig cfg;
    cfg.epsilon_mm = 5;
    const auto bf = brute_force_map(un, sk, pr, cfg);
    for (int root = 0; root < 4; ++root) {
      const auto dp = dp_map(un, root_tree(sk, root), pr, cfg);
      CHECK(dp.energy == doctest::Approx(bf.energy).epsilon(1e-12));
      CHECK(tie_aware_same(dp, bf));
      CHECK(oracle::psm_energy(dp.assignment, un, sk, pr, 5) == doctest::Approx(dp.energy).epsilon(1e-12));
    }
  }
}

TEST_CASE("psm invariants: unary scaling, epsilon monotonicity, dead joint") {
  const VoxelGrid g({3, 3, 1}, Vec3::Zero(), Vec3(10, 10, 10));
  for (int s = 0; s < 10; ++s) {
    Rng rng(200 + s);
    const auto sk = oracle::random_tree(3, rng);
    const auto un = random_unaries(g, 3, rng);
    const auto pr = random_priors(sk, g, rng);
    PsmConfig cfg;
    cfg.epsilon_mm = 4;
    const auto base = brute_force_map(un, sk, pr, cfg);

    auto scaled = un;
    for (double& v : scaled.values) v *= 2.5;
    const auto sc = brute_force_map(scaled, sk, pr, cfg);
    CHECK(sc.energy == doctest::Approx(base.energy * std::pow(2.5, 3)).epsilon(1e-12));
    CHECK(sc.assignment == base.assignment);

    double prev = -1;
    for (double eps : {0.0, 2.0, 4.0, 8.0, 16.0, 100.0}) {
      cfg.epsilon_mm = eps;
      const double e = dp_map(un, root_tree(sk), pr, cfg).energy;
      CHECK(e >= prev);
      prev = e;
    }

    auto dead = un;
    for (double& v : dead.joint(1)) v = 0.0;
    cfg.epsilon_mm = 100;
    CHECK(dp_map(dead, root_tree(sk), pr, cfg).energy == 0.0);
  }
}

TEST_CASE("dp_map does not underflow for long chains") {
  const VoxelGrid g({4, 1, 1}, Vec3::Zero(), Vec3(10, 10, 10));
  const int n = 40;
  std::vector<Edge> edges;
  for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  const auto sk = build_graph(n, edges);
  PriorTable pr;
  for (const auto& [u, v] : edges) pr.set(u, v, {10, 0});
  UnaryScores un(g, n);
  for (double& v : un.values) v = 1e-9;
  PsmConfig cfg;
  cfg.epsilon_mm = 1;
  const auto r = dp_map(un, root_tree(sk), pr, cfg);
  CHECK(std::isfinite(r.log_energy));
  CHECK(r.log_energy == doctest::Approx(n * std::log(1e-9)));
}

TEST_CASE("reproject_check") {
  const VoxelGrid g({4, 4, 4}, Vec3::Zero(), Vec3(10, 10, 10));
  const auto sk = build_graph(3, std::vector<Edge>{{0, 1}, {1, 2}});
  PoseEstimate exact({voxel_center(g, 0), voxel_center(g, 5), voxel_center(g, 21)});
  const Assignment at{0, 5, 21};
  const auto z = reproject_check(at, g, exact, sk);
  CHECK(z.limb_err == 0.0);
  CHECK(z.joint_err == 0.0);

  Rng rng(5);
  PoseEstimate gt(3);
  for (auto& j : gt.joints) j = Vec3(rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(0, 40));
  Assignment near;
  for (const auto& j : gt.joints) near.push_back(nearest_voxel(g, j));
  const auto r = reproject_check(near, g, gt, sk);
  CHECK(r.joint_err <= g.voxel_diagonal() / 2 + 1e-12);

  // Reflect through the plane z = 20: limb lengths preserved, positions not.
  const VoxelGrid big({8, 8, 8}, Vec3::Zero(), Vec3(10, 10, 10));
  PoseEstimate pose({oracle::center(big, 2, 2, 0), oracle::center(big, 4, 3, 1), oracle::center(big, 5, 5, 0)});
  Assignment mirrored;
  for (const auto& j : pose.joints) mirrored.push_back(nearest_voxel(big, Vec3(j.x(), j.y(), 80 - j.z())));
  const auto m = reproject_check(mirrored, big, pose, sk);
  CHECK(m.limb_err < 1e-9);
  CHECK(m.joint_err > 50);
}
