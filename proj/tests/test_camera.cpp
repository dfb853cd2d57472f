// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "volgen/camera.hpp"
#include "volgen/rng.hpp"

using namespace volgen;

namespace {

Pose random_pose(RandomStream& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  Pose p;
  p.R = q.toRotationMatrix();
  p.t = Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  return p;
}

}  // namespace

TEST_CASE("principal ray looks down -z for identity pose") {
  const Intrinsics intr = Intrinsics::from_fov(0.7, 3, 3);
  Pose pose;  // identity: camera at origin, world == camera frame
  auto rays = generate_rays(intr, pose, Extent{{-1, -1, -1}, {1, 1, 1}},
                            {PixelRef{1, 1}});
  REQUIRE(rays.size() == 1);
  CHECK(rays[0].d.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rays[0].d.y() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rays[0].d.z() == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("full image produces W*H rays") {
  const Intrinsics intr = Intrinsics::from_fov(0.7, 7, 5);
  auto rays = generate_rays(intr, Pose{}, Extent{});
  CHECK(rays.size() == 35);
}

TEST_CASE("corner ray angle matches pinhole geometry") {
  const int W = 16, H = 16;
  const double fov = 0.5;
  const Intrinsics intr = Intrinsics::from_fov(fov, W, H);
  auto rays = generate_rays(intr, Pose{}, Extent{}, {PixelRef{0, 0}});
  const double f = 0.5 * H / std::tan(0.5 * fov);
  const double du = (0.5 - 0.5 * W) / f;
  const double dv = (0.5 - 0.5 * H) / f;
  const double expected_tan = std::hypot(du, dv);
  const Eigen::Vector3d d = rays[0].d;
  const double actual_tan = std::hypot(d.x(), d.y()) / -d.z();
  CHECK(std::abs(actual_tan - expected_tan) < 1e-9);
}

TEST_CASE("projection of on-axis point hits the principal point") {
  const Intrinsics intr = Intrinsics::from_pinhole(120, 120, 31.5, 32.5, 64, 64);
  auto pr = project({Eigen::Vector3d(0, 0, -2)}, intr, Pose{});
  REQUIRE(pr.size() == 1);
  CHECK(pr[0].in_front);
  CHECK(pr[0].u == doctest::Approx(31.5).epsilon(1e-12));
  CHECK(pr[0].v == doctest::Approx(32.5).epsilon(1e-12));
}

TEST_CASE("point behind camera flagged") {
  const Intrinsics intr = Intrinsics::from_fov(0.7, 8, 8);
  auto pr = project({Eigen::Vector3d(0, 0, 3)}, intr, Pose{});
  CHECK_FALSE(pr[0].in_front);
}

TEST_CASE("project/generate_rays round trip on random poses and pixels") {
  RandomStream rng(5);
  const Intrinsics intr = Intrinsics::from_fov(0.6, 33, 41);
  for (int trial = 0; trial < 20; ++trial) {
    Pose pose = random_pose(rng);
    const int px = static_cast<int>(rng.below(33));
    const int py = static_cast<int>(rng.below(41));
    auto rays = generate_rays(intr, pose, Extent{}, {PixelRef{px, py}});
    const double depth = rng.uniform(0.5, 4.0);
    const Eigen::Vector3d p = rays[0].o + depth * rays[0].d;
    auto pr = project({p}, intr, pose);
    REQUIRE(pr[0].in_front);
    CHECK(std::abs(pr[0].u - (px + 0.5)) < 1e-6);
    CHECK(std::abs(pr[0].v - (py + 0.5)) < 1e-6);
  }
}

TEST_CASE("pose algebra") {
  RandomStream rng(6);
  for (int i = 0; i < 10; ++i) {
    Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    // associativity
    Pose ab_c = a.compose(b).compose(c);
    Pose a_bc = a.compose(b.compose(c));
    CHECK((ab_c.R - a_bc.R).norm() < 1e-12);
    CHECK((ab_c.t - a_bc.t).norm() < 1e-12);
    // inverse
    Pose id = a.inverse().compose(a);
    CHECK((id.R - Eigen::Matrix3d::Identity()).norm() < 1e-9);
    CHECK(id.t.norm() < 1e-9);
  }
}

TEST_CASE("ray misses the volume -> zero-length interval") {
  const Intrinsics intr = Intrinsics::from_fov(0.2, 9, 9);
  Pose pose = Pose::look_at(Eigen::Vector3d(0, 0, 30), Eigen::Vector3d(0, 20, 0));
  auto rays = generate_rays(intr, pose, Extent{}, {PixelRef{0, 0}});
  CHECK(rays[0].tnear == rays[0].tfar);
}
