// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "volgen/rng.hpp"
#include "volgen/volumeio.hpp"
#include "volgen/voxgrid.hpp"

using namespace volgen;

TEST_CASE("world_to_grid maps extent corners and centers") {
  VoxelGrid g3 = VoxelGrid::zeros(3, 1);
  CHECK(g3.world_to_grid({-1, -1, -1}) == Vec3d{0, 0, 0});
  CHECK(g3.world_to_grid({0, 0, 0}) == Vec3d{1, 1, 1});

  VoxelGrid g5 = VoxelGrid::zeros(5, 1);
  const Vec3d g = g5.world_to_grid({0.5, -1, 1});
  CHECK(g[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(g[2] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("world_to_grid / grid_to_world round trip") {
  VoxelGrid g = VoxelGrid::zeros(9, 1, GridLayout::Density,
                                 Extent{{-0.3, -2.0, 0.5}, {1.1, 0.5, 2.5}});
  RandomStream rng(11);
  for (int i = 0; i < 200; ++i) {
    Vec3d p{rng.uniform(-0.3, 1.1), rng.uniform(-2.0, 0.5), rng.uniform(0.5, 2.5)};
    Vec3d q = g.grid_to_world(g.world_to_grid(p));
    for (int a = 0; a < 3; ++a) CHECK(std::abs(q[a] - p[a]) < 1e-12);
  }
}

TEST_CASE("trilinear interpolation basics") {
  VoxelGrid g = VoxelGrid::zeros(4, 2);
  g.values.fill(3.25f);
  float out[2];
  CHECK(g.sample_trilinear({0.1, -0.4, 0.7}, OobPolicy::Zero, out));
  CHECK(out[0] == doctest::Approx(3.25f));
  CHECK(out[1] == doctest::Approx(3.25f));

  // value at an exact cell center
  VoxelGrid h = VoxelGrid::zeros(5, 1);
  h.at(2, 3, 1, 0) = 7.5f;
  const Vec3d p = h.grid_to_world({2, 3, 1});
  float v;
  h.sample_trilinear(p, OobPolicy::Zero, &v);
  CHECK(v == doctest::Approx(7.5f));

  // midpoint between two adjacent cell centers -> arithmetic mean
  VoxelGrid m = VoxelGrid::zeros(5, 1);
  m.at(1, 2, 2, 0) = 2.0f;
  m.at(2, 2, 2, 0) = 6.0f;
  const Vec3d mid = m.grid_to_world({1.5, 2, 2});
  m.sample_trilinear(mid, OobPolicy::Zero, &v);
  CHECK(v == doctest::Approx(4.0f));
}

TEST_CASE("trilinear is exact on trilinear functions") {
  RandomStream rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    double c[8];
    for (auto& ci : c) ci = rng.uniform(-2, 2);
    auto f = [&](double x, double y, double z) {
      return c[0] + c[1] * x + c[2] * y + c[3] * z + c[4] * x * y + c[5] * x * z +
             c[6] * y * z + c[7] * x * y * z;
    };
    VoxelGrid g = VoxelGrid::zeros(6, 1);
    for (int z = 0; z < 6; ++z)
      for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) {
          const Vec3d p = g.grid_to_world({double(x), double(y), double(z)});
          g.at(x, y, z, 0) = static_cast<float>(f(p[0], p[1], p[2]));
        }
    for (int i = 0; i < 50; ++i) {
      Vec3d p{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      float v;
      g.sample_trilinear(p, OobPolicy::Zero, &v);
      CHECK(v == doctest::Approx(f(p[0], p[1], p[2])).epsilon(2e-4));
    }
  }
}

TEST_CASE("trilinear result is a convex combination of stencil corners") {
  RandomStream rng(31);
  VoxelGrid g = VoxelGrid::zeros(5, 2);
  for (int64_t i = 0; i < g.values.numel(); ++i)
    g.values[i] = static_cast<float>(rng.uniform(-3, 3));
  for (int i = 0; i < 100; ++i) {
    Vec3d p{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const Vec3d gc = g.world_to_grid(p);
    const TrilerpStencil st = trilerp_stencil<float>(g.resolution, gc.data(), OobPolicy::Zero);
    REQUIRE(st.inside);
    float out[2];
    g.sample_trilinear(p, OobPolicy::Zero, out);
    for (int c = 0; c < 2; ++c) {
      float lo = 1e30f, hi = -1e30f;
      for (int k = 0; k < 8; ++k) {
        const float v = g.values[st.corner[k] * 2 + c];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      CHECK(out[c] >= lo - 1e-5f);
      CHECK(out[c] <= hi + 1e-5f);
    }
  }
}

TEST_CASE("oob policies") {
  VoxelGrid g = VoxelGrid::zeros(4, 1);
  g.values.fill(5.0f);
  float v;
  CHECK_FALSE(g.sample_trilinear({1.5, 0, 0}, OobPolicy::Zero, &v));
  CHECK(v == 0.0f);
  CHECK(g.sample_trilinear({1.5, 0, 0}, OobPolicy::Clamp, &v));
  CHECK(v == doctest::Approx(5.0f));
}

TEST_CASE("split_channels") {
  VoxelGrid radiance = VoxelGrid::zeros(8, 4, GridLayout::Radiance);
  radiance.at(1, 2, 3, 0) = 9.0f;
  radiance.at(1, 2, 3, 2) = 4.0f;
  SplitGrids s = split_channels(radiance, GridLayout::Radiance);
  CHECK(s.density.channels == 1);
  CHECK(s.rgb.channels == 3);
  CHECK_FALSE(s.lbs.has_value());
  CHECK(s.density.at(1, 2, 3, 0) == 9.0f);
  CHECK(s.rgb.at(1, 2, 3, 1) == 4.0f);

  VoxelGrid artic = VoxelGrid::zeros(8, 14, GridLayout::Articulated);
  SplitGrids sa = split_channels(artic, GridLayout::Articulated);
  REQUIRE(sa.lbs.has_value());
  CHECK(sa.lbs->channels == 10);

  VoxelGrid bad = VoxelGrid::zeros(8, 5);
  CHECK_THROWS(split_channels(bad, GridLayout::Radiance));
}

TEST_CASE("volume file round trip") {
  RandomStream rng(41);
  VoxelGrid g = VoxelGrid::zeros(9, 3, GridLayout::Latent,
                                 Extent{{-2, -1, 0}, {2, 1, 4}});
  for (int64_t i = 0; i < g.values.numel(); ++i)
    g.values[i] = static_cast<float>(rng.normal());
  const std::string path = std::filesystem::temp_directory_path() / "volgen_test.vol";
  write_volume(path, g);
  VoxelGrid r = read_volume(path);
  CHECK(r.resolution == 9);
  CHECK(r.channels == 3);
  CHECK(r.extent == g.extent);
  for (int64_t i = 0; i < g.values.numel(); ++i) CHECK(r.values[i] == g.values[i]);
  std::remove(path.c_str());
}
