#include <cmath>
#include <numeric>

#include "ctxpose/grid.hpp"
#include "ctxpose/rng.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace ctxpose;

TEST_CASE("voxel_center: examples and layout") {
  const VoxelGrid one({1, 1, 1}, Vec3::Zero(), Vec3(10, 10, 10));
  CHECK(voxel_center(one, 0) == Vec3(5, 5, 5));
  const VoxelGrid two({2, 1, 1}, Vec3::Zero(), Vec3(10, 10, 10));
  CHECK(voxel_center(two, 1) == Vec3(15, 5, 5));
  CHECK_FAILS_WITH(voxel_center(two, 2), ErrorCode::IndexOutOfRange);

  const VoxelGrid g({2, 3, 4}, Vec3(-10, 0, 7), Vec3(1, 2, 3));
  const auto c = oracle::centers(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(voxel_center(g, i) == c[i]);
    const auto xyz = g.unflat(i);
    CHECK(g.flat(xyz[0], xyz[1], xyz[2]) == i);
  }
}

TEST_CASE("nearest_voxel round trip on 4x4x4") {
  const VoxelGrid g({4, 4, 4}, Vec3(3, -2, 1), Vec3(10, 20, 5));
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(nearest_voxel(g, voxel_center(g, i)) == i);
  CHECK(nearest_voxel(g, Vec3(-1e6, -1e6, -1e6)) == 0);
  CHECK(nearest_voxel(g, Vec3(1e6, 1e6, 1e6)) == g.size() - 1);
}

TEST_CASE("grid construction rejects nonpositive dims and spacing") {
  CHECK_THROWS(VoxelGrid({0, 1, 1}, Vec3::Zero(), Vec3::Ones()));
  CHECK_THROWS(VoxelGrid({1, 1, 1}, Vec3::Zero(), Vec3(1, 0, 1)));
}

TEST_CASE("gaussian_heatmap") {
  const VoxelGrid g({5, 5, 5}, Vec3::Zero(), Vec3(10, 10, 10));
  const Vec3 ctr = voxel_center(g, g.flat(2, 2, 2));
  const auto h = gaussian_heatmap(g, ctr, 10);
  CHECK(h[g.flat(2, 2, 2)] == 1.0);
  CHECK(h[g.flat(1, 2, 2)] == h[g.flat(3, 2, 2)]);
  CHECK(h[g.flat(2, 1, 2)] == h[g.flat(2, 2, 3)]);

  const Vec3 p(21.3, 17.9, 33.3);
  const auto f = gaussian_heatmap(g, p, 10);
  double lib = 0, ref = 0;
  for (double v : f) lib += v;
  for (const auto& c : oracle::centers(g)) ref += std::exp(-(c - p).squaredNorm() / (2 * 100.0));
  CHECK(lib == doctest::Approx(ref).epsilon(1e-13));
  CHECK_FAILS_WITH(gaussian_heatmap(g, p, 0.0), ErrorCode::NonPositiveSigma);
  CHECK_FAILS_WITH(gaussian_heatmap(g, p, -1.0), ErrorCode::NonPositiveSigma);
}

TEST_CASE("spatial_softmax") {
  std::vector<double> u(27, 3.0);
  for (double v : spatial_softmax(u)) CHECK(v == doctest::Approx(1.0 / 27).epsilon(1e-15));

  std::vector<double> f(27, 0.0);
  f[5] = 1000.0;
  CHECK(spatial_softmax(f)[5] >= 1 - 1e-9);

  Rng rng(2);
  std::vector<double> r(64), s(64);
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = 5 * rng.normal();
    s[i] = r[i] + 123.4;
  }
  const auto a = spatial_softmax(r), b = spatial_softmax(s);
  double sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i] - b[i]) <= 1e-12);
    sum += a[i];
  }
  CHECK(std::abs(sum - 1) <= 1e-9);
  // monotone in the input
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < r.size(); ++j)
      if (r[i] < r[j]) CHECK(a[i] <= a[j]);
}

TEST_CASE("integrate_pose: examples") {
  const VoxelGrid g({3, 3, 3}, Vec3(5, 15, 25), Vec3(10, 10, 10));
  Heatmap hm(g, 1);
  const std::size_t k = nearest_voxel(g, Vec3(20, 30, 40));
  REQUIRE(voxel_center(g, k) == Vec3(20, 30, 40));
  hm.values[k] = 1.0;
  CHECK(integrate_pose(hm)[0] == Vec3(20, 30, 40));

  const VoxelGrid line({2, 1, 1}, Vec3(-5, -5, -5), Vec3(10, 10, 10));
  Heatmap half(line, 1);
  half.values = {0.5, 0.5};
  CHECK((integrate_pose(half)[0] - Vec3(5, 0, 0)).norm() < 1e-15);

  Heatmap bad(g, 1);
  bad.values[0] = 0.9;
  CHECK_FAILS_WITH(integrate_pose(bad), ErrorCode::UnnormalizedHeatmap);
}

TEST_CASE("integrate_pose: loop oracle, hull, translation equivariance") {
  Rng rng(9);
  const VoxelGrid g({3, 3, 3}, Vec3(1, 2, 3), Vec3(7, 8, 9));
  const auto c = oracle::centers(g);
  for (int t = 0; t < 20; ++t) {
    Heatmap hm(g, 2);
    for (double& v : hm.values) v = rng.normal();
    hm = softmax_heatmap(hm);
    const auto p = integrate_pose(hm);
    for (int u = 0; u < 2; ++u) {
      Vec3 ref = Vec3::Zero();
      for (std::size_t k = 0; k < c.size(); ++k) ref += hm.values[u * c.size() + k] * c[k];
      CHECK((p[u] - ref).norm() <= 1e-12);
      for (int a = 0; a < 3; ++a) {
        CHECK(p[u][a] >= c.front()[a] - 1e-12);
        CHECK(p[u][a] <= c.back()[a] + 1e-12);
      }
    }
    Heatmap shifted = hm;
    shifted.grid.origin += Vec3(64, -32, 16);
    const auto ps = integrate_pose(shifted);
    for (int u = 0; u < 2; ++u) CHECK(((ps[u] - p[u]) - Vec3(64, -32, 16)).norm() <= 1e-12);
  }
}

TEST_CASE("integrate_pose: quantization error shrinks with the pitch") {
  Rng rng(4);
  double prev = 1e300;
  for (double pitch : {40.0, 20.0, 10.0}) {
    const int n = static_cast<int>(std::lround(400 / pitch));
    const VoxelGrid g({n, n, n}, Vec3::Zero(), Vec3(pitch, pitch, pitch));
    Rng r2(4);
    double err = 0;
    for (int t = 0; t < 10; ++t) {
      const Vec3 p(r2.uniform(150, 250), r2.uniform(150, 250), r2.uniform(150, 250));
      Heatmap hm(g, 1);
      const auto f = gaussian_heatmap(g, p, 10.0);
      for (std::size_t k = 0; k < f.size(); ++k) hm.values[k] = std::log(std::max(f[k], 1e-300));
      err += (integrate_pose(softmax_heatmap(hm))[0] - p).norm();
    }
    CHECK(err < prev);
    prev = err;
  }
}
