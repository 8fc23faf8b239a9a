#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "bunet/errors.hpp"
#include "bunet/metrics.hpp"
#include "oracles.hpp"

using namespace bunet;

namespace {

BinaryVolume with_voxels(std::size_t d, std::size_t h, std::size_t w, std::initializer_list<Voxel> on,
                         Spacing s = {}) {
  BinaryVolume v(d, h, w, s);
  for (const auto& p : on) v.at(p[0], p[1], p[2]) = 1;
  return v;
}

BinaryVolume scaled(BinaryVolume v, double k) {
  v.spacing = {v.spacing.z * k, v.spacing.y * k, v.spacing.x * k};
  return v;
}

}  // namespace

TEST_CASE("vdsc examples") {
  const auto a = with_voxels(1, 1, 8, {{0, 0, 0}, {0, 0, 1}, {0, 0, 2}, {0, 0, 3}});
  const auto b = with_voxels(1, 1, 8, {{0, 0, 2}, {0, 0, 3}, {0, 0, 4}, {0, 0, 5}});
  const auto c = with_voxels(1, 1, 8, {{0, 0, 6}, {0, 0, 7}});
  CHECK(vdsc(a, a) == 1.0);
  CHECK(vdsc(a, c) == 0.0);
  CHECK(vdsc(a, b) == 0.5);
  CHECK(vdsc(a, b) == vdsc(b, a));
  CHECK(vdsc(BinaryVolume(2, 2, 2), BinaryVolume(2, 2, 2)) == 1.0);
  CHECK_THROWS_AS(vdsc(a, BinaryVolume(1, 2, 8)), DataError);
}

TEST_CASE("boundary voxels") {
  const auto single = with_voxels(3, 3, 3, {{1, 1, 1}});
  CHECK(boundary_voxels(single) == std::vector<Voxel>{{1, 1, 1}});
  BinaryVolume cube(5, 5, 5);
  for (std::size_t z = 1; z <= 3; ++z)
    for (std::size_t y = 1; y <= 3; ++y)
      for (std::size_t x = 1; x <= 3; ++x) cube.at(z, y, x) = 1;
  const auto shell = boundary_voxels(cube);
  CHECK(shell.size() == 26);
  CHECK(std::find(shell.begin(), shell.end(), Voxel{2, 2, 2}) == shell.end());
  // touching the volume edge counts as background
  BinaryVolume full(3, 3, 3);
  std::fill(full.voxels.begin(), full.voxels.end(), 1);
  CHECK(boundary_voxels(full).size() == 26);
}

TEST_CASE("boundary matches a brute-force neighbour scan") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    const auto v = oracle::random_volume(rng, 6, 10, 9);
    const auto fast = boundary_voxels(v);
    const auto slow = oracle::boundary_mm(v, Spacing{});
    REQUIRE(fast.size() == slow.size());
    for (std::size_t i = 0; i < fast.size(); ++i) {
      CHECK(static_cast<double>(fast[i][0]) == slow[i].z);
      CHECK(static_cast<double>(fast[i][1]) == slow[i].y);
      CHECK(static_cast<double>(fast[i][2]) == slow[i].x);
    }
  }
}

TEST_CASE("hausdorff and abd examples") {
  const auto a = with_voxels(1, 1, 8, {{0, 0, 1}});
  const auto b = with_voxels(1, 1, 8, {{0, 0, 4}});
  CHECK(hausdorff(a, a) == 0.0);
  CHECK(abd(a, a) == 0.0);
  CHECK(hausdorff(a, b) == 3.0);
  CHECK(abd(a, b) == 3.0);
  const auto as = with_voxels(4, 1, 1, {{0, 0, 0}}, {2.5, 1, 1});
  const auto bs = with_voxels(4, 1, 1, {{3, 0, 0}}, {2.5, 1, 1});
  CHECK(hausdorff(as, bs) == 7.5);
}

TEST_CASE("empty volumes make surface metrics undefined") {
  const auto a = with_voxels(2, 2, 2, {{0, 0, 0}});
  const BinaryVolume empty(2, 2, 2);
  CHECK_THROWS_AS(hausdorff(a, empty), MetricUndefined);
  CHECK_THROWS_AS(hausdorff(empty, a), MetricUndefined);
  CHECK_THROWS_AS(abd(a, empty), MetricUndefined);
  CHECK_THROWS_AS(ravd(empty, a), MetricUndefined);
  CHECK(ravd(a, empty) == 100.0);
}

TEST_CASE("ravd examples") {
  BinaryVolume gs(1, 20, 20), seg(1, 20, 20);
  for (std::size_t i = 0; i < 200; ++i) gs.voxels[i] = 1;
  for (std::size_t i = 0; i < 150; ++i) seg.voxels[i] = 1;
  CHECK(ravd(gs, seg) == 25.0);
  CHECK(ravd(gs, gs) == 0.0);
  BinaryVolume dbl(1, 20, 20);
  for (std::size_t i = 0; i < 400; ++i) dbl.voxels[i] = 1;
  CHECK(ravd(gs, dbl) == 100.0);
}

TEST_CASE("metrics match all-pairs oracles and are symmetric") {
  std::mt19937_64 rng(1234);
  const auto t0 = std::chrono::steady_clock::now();
  for (int t = 0; t < 50; ++t) {
    auto a = oracle::random_volume(rng, 8, 32, 32);
    auto b = oracle::random_volume(rng, 8, 32, 32);
    a.spacing = b.spacing = {3.0, 0.625, 0.7};
    const double hd = hausdorff(a, b);
    CHECK(hd == oracle::hausdorff(a, b));
    CHECK(hd == hausdorff(b, a));
    const double d = abd(a, b);
    CHECK(oracle::relative_error(d, oracle::abd(a, b), 1e-300) <= 1e-9);
    CHECK(d == doctest::Approx(abd(b, a)).epsilon(1e-12));
    CHECK(vdsc(a, b) == vdsc(b, a));
  }
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 30.0);
}

TEST_CASE("spacing scaling multiplies distances by k only") {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 10; ++t) {
    const auto a = oracle::random_volume(rng, 8, 32, 32);
    const auto b = oracle::random_volume(rng, 8, 32, 32);
    for (double k : {0.5, 2.0, 3.7}) {
      const auto ak = scaled(a, k), bk = scaled(b, k);
      CHECK(oracle::relative_error(hausdorff(ak, bk), k * hausdorff(a, b), 1e-300) <= 1e-9);
      CHECK(oracle::relative_error(abd(ak, bk), k * abd(a, b), 1e-300) <= 1e-9);
      CHECK(vdsc(ak, bk) == vdsc(a, b));
      CHECK(oracle::relative_error(ravd(ak, bk), ravd(a, b), 1e-300) <= 1e-12);
    }
  }
}

TEST_CASE("percentile hausdorff uses nearest rank over pooled distances") {
  std::mt19937_64 rng(5);
  const auto a = oracle::random_volume(rng, 6, 16, 16);
  const auto b = oracle::random_volume(rng, 6, 16, 16);
  auto pooled = oracle::directed(oracle::boundary_mm(a, a.spacing), oracle::boundary_mm(b, a.spacing));
  const auto back = oracle::directed(oracle::boundary_mm(b, a.spacing), oracle::boundary_mm(a, a.spacing));
  pooled.insert(pooled.end(), back.begin(), back.end());
  std::sort(pooled.begin(), pooled.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(pooled.size())));
  CHECK(hausdorff(a, b, 95.0) == pooled[rank - 1]);
  CHECK(hausdorff(a, b, 100.0) == pooled.back());
  CHECK(hausdorff(a, b, 95.0) <= hausdorff(a, b));
}

TEST_CASE("volume validation") {
  BinaryVolume v(1, 2, 2);
  v.voxels[0] = 2;
  CHECK_THROWS_AS(v.validate(), DataError);
  BinaryVolume w(1, 2, 2, {0.0, 1.0, 1.0});
  CHECK_THROWS_AS(w.validate(), DataError);
}
