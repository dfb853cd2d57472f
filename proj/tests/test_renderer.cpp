// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "volgen/ops.hpp"
#include "volgen/renderer.hpp"
#include "volgen/rng.hpp"

using namespace volgen;

namespace {

Ray axis_ray(double y = 0.0, double z = 0.0) {
  Ray r;
  r.o = Eigen::Vector3d(-3.0, y, z);
  r.d = Eigen::Vector3d(1, 0, 0);
  return r;
}

void set_interval(Ray& r, const Extent& e) {
  auto hit = intersect_extent(r.o, r.d, e);
  REQUIRE(hit.has_value());
  r.tnear = hit->first;
  r.tfar = hit->second;
}

VoxelGrid constant_grid(int S, float density, const Extent& e,
                        std::array<float, 3> rgb = {1, 1, 1}) {
  VoxelGrid g = VoxelGrid::zeros(S, 4, GridLayout::Radiance, e);
  for (int64_t i = 0; i < int64_t(S) * S * S; ++i) {
    g.values[i * 4] = density;
    g.values[i * 4 + 1] = rgb[0];
    g.values[i * 4 + 2] = rgb[1];
    g.values[i * 4 + 3] = rgb[2];
  }
  return g;
}

RenderSettings identity_settings(int n) {
  RenderSettings st;
  st.n_samples = n;
  st.density_activation = RenderSettings::Activation::Identity;
  return st;
}

}  // namespace

TEST_CASE("zero density renders the background everywhere") {
  VoxelGrid g = VoxelGrid::zeros(8, 4, GridLayout::Radiance);
  RenderSettings st = identity_settings(32);
  st.background = {0.2, 0.4, 0.6};
  const Intrinsics intr = Intrinsics::from_fov(0.7, 8, 8);
  Pose pose = Pose::look_at(Eigen::Vector3d(0, 0, 3), Eigen::Vector3d::Zero());
  RenderOutput out = render(g, intr, pose, st);
  for (int64_t i = 0; i < 64; ++i) {
    CHECK(out.color[i * 3 + 0] == doctest::Approx(0.2f));
    CHECK(out.color[i * 3 + 1] == doctest::Approx(0.4f));
    CHECK(out.color[i * 3 + 2] == doctest::Approx(0.6f));
    CHECK(out.occupancy[i] == doctest::Approx(0.0f));
  }
}

TEST_CASE("homogeneous slab transmittance matches the analytic value") {
  const Extent e{{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}};  // chord length 1
  VoxelGrid g = constant_grid(16, 2.0f, e);
  Ray r = axis_ray();
  set_interval(r, e);
  Tensor rgbo = render_rays(g, {r}, identity_settings(128));
  const double expect = 1.0 - std::exp(-2.0);
  CHECK(std::abs(rgbo[3] - expect) < 1e-3);
}

TEST_CASE("quadrature error decreases as samples double") {
  // density with a cross term is quadratic along a diagonal ray, so the
  // midpoint rule has real discretization error
  const Extent e{{-1, -1, -1}, {1, 1, 1}};
  const int S = 9;
  VoxelGrid g = VoxelGrid::zeros(S, 4, GridLayout::Radiance, e);
  auto f = [](double x, double y, double) { return 1.0 + 0.6 * x + 0.5 * y + 1.2 * x * y; };
  for (int z = 0; z < S; ++z)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        const Vec3d p = g.grid_to_world({double(x), double(y), double(z)});
        g.at(x, y, z, 0) = static_cast<float>(f(p[0], p[1], p[2]));
        g.at(x, y, z, 1) = 1.0f;
      }
  Ray r;
  r.o = Eigen::Vector3d(-2.0, -2.0, 0.0);
  r.d = Eigen::Vector3d(1, 1, 0).normalized();
  set_interval(r, e);

  // analytic line integral of f along the ray between tnear and tfar
  auto integral = [&](double t0, double t1) {
    // x(t) = -2 + t/sqrt2, y(t) = -2 + t/sqrt2
    auto F = [&](double t) {
      const double s = 1.0 / std::sqrt(2.0);
      const double a = -2.0;
      // f = 1 + 0.6x + 0.5y + 1.2xy with x=y=a+st
      const double c0 = 1.0 + 1.1 * a + 1.2 * a * a;
      const double c1 = 1.1 * s + 2.4 * a * s;
      const double c2 = 1.2 * s * s;
      return c0 * t + 0.5 * c1 * t * t + c2 * t * t * t / 3.0;
    };
    return F(t1) - F(t0);
  };
  const double expect = 1.0 - std::exp(-integral(r.tnear, r.tfar));

  double prev_err = 1e9;
  for (int n : {16, 32, 64, 128}) {
    Tensor rgbo = render_rays(g, {r}, identity_settings(n));
    const double err = std::abs(rgbo[3] - expect);
    CHECK(err < prev_err);
    prev_err = err;
  }
}

TEST_CASE("two-slab compositing: opaque front hides the back") {
  const Extent e{{-1, -1, -1}, {1, 1, 1}};
  const int S = 16;
  VoxelGrid g = VoxelGrid::zeros(S, 4, GridLayout::Radiance, e);
  for (int z = 0; z < S; ++z)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        const bool front = x < S / 2;  // ray travels +x, front slab first
        g.at(x, y, z, 0) = front ? 50.0f : 50.0f;
        g.at(x, y, z, 1) = front ? 1.0f : 0.0f;  // red
        g.at(x, y, z, 3) = front ? 0.0f : 1.0f;  // blue
      }
  Ray r = axis_ray();
  set_interval(r, e);
  RenderSettings st = identity_settings(8);
  Tensor rgbo = render_rays(g, {r}, st);

  // independent oracle: manual sequential compositing over the same midpoints
  double trans = 1.0, red = 0.0, blue = 0.0;
  const double dt = (r.tfar - r.tnear) / 8;
  for (int i = 0; i < 8; ++i) {
    const double t = r.tnear + (i + 0.5) * dt;
    const Vec3d p{r.o.x() + t, r.o.y(), r.o.z()};
    float v[4];
    g.sample_trilinear(p, OobPolicy::Zero, v);
    const double alpha = 1.0 - std::exp(-double(v[0]) * dt);
    red += trans * alpha * v[1];
    blue += trans * alpha * v[3];
    trans *= 1.0 - alpha;
  }
  CHECK(rgbo[0] == doctest::Approx(red).epsilon(1e-4));
  CHECK(rgbo[2] == doctest::Approx(blue).epsilon(1e-4));
  CHECK(rgbo[0] > 0.99f);   // front red dominates
  CHECK(rgbo[2] < 1e-3f);   // rear contribution suppressed
}

TEST_CASE("occupancy is monotone in density scale and bounded") {
  RandomStream rng(77);
  const Extent e{{-1, -1, -1}, {1, 1, 1}};
  VoxelGrid g = VoxelGrid::zeros(10, 4, GridLayout::Radiance, e);
  for (int64_t i = 0; i < 1000; ++i) {
    g.values[i * 4] = static_cast<float>(rng.uniform(0.0, 3.0));
    for (int c = 1; c < 4; ++c) g.values[i * 4 + c] = static_cast<float>(rng.uniform());
  }
  const Intrinsics intr = Intrinsics::from_fov(0.8, 6, 6);
  Pose pose = Pose::look_at(Eigen::Vector3d(2.5, 1.0, 2.0), Eigen::Vector3d::Zero());
  RenderSettings st = identity_settings(48);

  RenderOutput base = render(g, intr, pose, st);
  for (float k : {1.5f, 3.0f}) {
    VoxelGrid gs = g;
    gs.values = g.values.clone();
    for (int64_t i = 0; i < 1000; ++i) gs.values[i * 4] *= k;
    RenderOutput scaled = render(gs, intr, pose, st);
    for (int64_t i = 0; i < 36; ++i) {
      CHECK(scaled.occupancy[i] >= base.occupancy[i] - 1e-6f);
      CHECK(base.occupancy[i] >= -0.0f);
      CHECK(scaled.occupancy[i] <= 1.0f + 1e-6f);
    }
  }
}

TEST_CASE("ray missing the volume returns background and zero occupancy") {
  const Extent e{{-1, -1, -1}, {1, 1, 1}};
  VoxelGrid g = constant_grid(8, 5.0f, e);
  Ray r;
  r.o = Eigen::Vector3d(-3, 5, 0);
  r.d = Eigen::Vector3d(1, 0, 0);
  r.tnear = r.tfar = 0.0;
  RenderSettings st = identity_settings(16);
  st.background = {0.1, 0.2, 0.3};
  Tensor rgbo = render_rays(g, {r}, st);
  CHECK(rgbo[0] == doctest::Approx(0.1f));
  CHECK(rgbo[3] == 0.0f);
}

TEST_CASE("renderer gradient matches finite differences in double precision") {
  // 8^3 grid, 4x4 image, random loss weights; double precision end to end
  RandomStream rng(99);
  const int S = 8, C = 4;
  const Extent e{{-1, -1, -1}, {1, 1, 1}};
  std::vector<double> values(size_t(S) * S * S * C);
  for (auto& v : values) v = rng.uniform(-0.5, 2.0);

  const Intrinsics intr = Intrinsics::from_fov(0.8, 4, 4);
  Pose pose = Pose::look_at(Eigen::Vector3d(0.4, 2.6, 1.1), Eigen::Vector3d::Zero());
  auto rays = generate_rays(intr, pose, e);

  RenderSettings st;
  st.n_samples = 24;
  st.density_activation = RenderSettings::Activation::Softplus;
  st.background = {0.3, 0.1, 0.2};

  std::vector<double> loss_w(rays.size() * 4);
  for (auto& w : loss_w) w = rng.uniform(-1, 1);

  auto loss = [&](const std::vector<double>& vals) {
    std::vector<double> rgbo(rays.size() * 4);
    detail::render_rays_core<double>(vals.data(), S, C, e, rays.data(),
                                     int64_t(rays.size()), st, rgbo.data(), nullptr);
    double l = 0;
    for (size_t i = 0; i < rgbo.size(); ++i) l += loss_w[i] * rgbo[i];
    return l;
  };

  std::vector<double> grad(values.size(), 0.0);
  detail::render_rays_backward<double>(values.data(), S, C, e, rays.data(),
                                       int64_t(rays.size()), st, loss_w.data(), grad.data());

  RandomStream pick(3);
  const double h = 1e-6;
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const size_t i = static_cast<size_t>(pick.below(values.size()));
    std::vector<double> vp = values, vm = values;
    vp[i] += h;
    vm[i] -= h;
    const double fd = (loss(vp) - loss(vm)) / (2.0 * h);
    const double an = grad[i];
    if (std::abs(fd) < 1e-12 && std::abs(an) < 1e-12) continue;
    const double rel = std::abs(fd - an) / std::max({1e-9, std::abs(fd), std::abs(an)});
    CHECK(rel < 1e-3);
    ++checked;
  }
  CHECK(checked > 50);
}

TEST_CASE("render op backward agrees with double kernel") {
  RandomStream rng(111);
  const int S = 6, C = 4;
  const Extent e{{-1, -1, -1}, {1, 1, 1}};
  Tensor vals({S, S, S, C});
  for (int64_t i = 0; i < vals.numel(); ++i) vals[i] = float(rng.uniform(0.0, 1.5));
  const Intrinsics intr = Intrinsics::from_fov(0.8, 4, 4);
  Pose pose = Pose::look_at(Eigen::Vector3d(2.2, 0.4, 1.2), Eigen::Vector3d::Zero());
  auto rays = std::make_shared<std::vector<Ray>>(generate_rays(intr, pose, e));

  RenderSettings st = identity_settings(16);
  Var grid = param(vals);
  Var rgbo = render_rgbo_op(grid, S, C, e, rays, st);
  Var loss = ops::sum_all(ops::square(rgbo));
  backward(loss);
  REQUIRE(grid->grad.defined());

  // double-kernel reference gradient
  std::vector<double> dvals(vals.numel());
  for (int64_t i = 0; i < vals.numel(); ++i) dvals[size_t(i)] = vals[i];
  std::vector<double> rgbo_d(rays->size() * 4);
  detail::render_rays_core<double>(dvals.data(), S, C, e, rays->data(),
                                   int64_t(rays->size()), st, rgbo_d.data(), nullptr);
  std::vector<double> up(rays->size() * 4);
  for (size_t i = 0; i < up.size(); ++i) up[i] = 2.0 * rgbo_d[i];
  std::vector<double> ref(vals.numel(), 0.0);
  detail::render_rays_backward<double>(dvals.data(), S, C, e, rays->data(),
                                       int64_t(rays->size()), st, up.data(), ref.data());
  for (int64_t i = 0; i < vals.numel(); i += 3) {
    CHECK(grid->grad[i] == doctest::Approx(ref[size_t(i)]).epsilon(2e-3).scale(1.0));
  }
}

TEST_CASE("normals point against the density gradient") {
  const Extent e{{-1, -1, -1}, {1, 1, 1}};
  const int S = 16;
  // density increasing in +x: a half-space wall
  VoxelGrid g = VoxelGrid::zeros(S, 4, GridLayout::Radiance, e);
  for (int z = 0; z < S; ++z)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        const Vec3d p = g.grid_to_world({double(x), double(y), double(z)});
        g.at(x, y, z, 0) = static_cast<float>(std::max(0.0, 8.0 * p[0]));
        g.at(x, y, z, 1) = 1.0f;
      }
  Ray r = axis_ray();
  set_interval(r, e);
  Tensor n = render_normals(g, {r}, identity_settings(64));
  CHECK(n[0] == doctest::Approx(-1.0f).epsilon(1e-3));
  CHECK(std::abs(n[1]) < 1e-3f);
  CHECK(std::abs(n[2]) < 1e-3f);

  // empty grid: normals undefined -> zero
  VoxelGrid empty = VoxelGrid::zeros(8, 4, GridLayout::Radiance, e);
  Tensor nz = render_normals(empty, {r}, identity_settings(16));
  CHECK(nz[0] == 0.0f);
  CHECK(nz[1] == 0.0f);
  CHECK(nz[2] == 0.0f);
}

TEST_CASE("sphere bump normals are radial") {
  const Extent e{{-1, -1, -1}, {1, 1, 1}};
  const int S = 32;
  VoxelGrid g = VoxelGrid::zeros(S, 4, GridLayout::Radiance, e);
  for (int z = 0; z < S; ++z)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        const Vec3d p = g.grid_to_world({double(x), double(y), double(z)});
        const double rr = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
        g.at(x, y, z, 0) = static_cast<float>(30.0 * std::clamp(0.5 - (rr - 0.5) / 0.2, 0.0, 1.0));
        g.at(x, y, z, 1) = 1.0f;
      }
  const Intrinsics intr = Intrinsics::from_fov(0.7, 16, 16);
  Pose pose = Pose::look_at(Eigen::Vector3d(0, 0, 2.8), Eigen::Vector3d::Zero());
  auto rays = generate_rays(intr, pose, e);
  RenderSettings st = identity_settings(96);
  RenderOutput out = render(g, intr, pose, st, true);
  int tested = 0;
  for (int py = 0; py < 16; ++py)
    for (int px = 0; px < 16; ++px) {
      const int64_t i = py * 16 + px;
      if (out.occupancy[i] < 0.9f) continue;
      Eigen::Vector3d n(out.normals[i * 3], out.normals[i * 3 + 1], out.normals[i * 3 + 2]);
      if (n.norm() < 0.5) continue;
      // expected: radial direction at the surface point hit by the ray
      const Ray& r = rays[size_t(i)];
      const double tmid = out.depth[i];
      Eigen::Vector3d hit = r.o + tmid * r.d;
      if (hit.norm() < 1e-6) continue;
      const double cosang = n.normalized().dot(hit.normalized());
      CHECK(cosang > std::cos(5.0 * M_PI / 180.0));
      ++tested;
    }
  CHECK(tested > 20);
}
