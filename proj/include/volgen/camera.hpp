// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "volgen/voxgrid.hpp"

namespace volgen {

// Convention used throughout: right-handed, camera looks down -z in its own
// frame, image y grows downward. Pose is camera-from-world: x_cam = R x_w + t.
struct Intrinsics {
  enum class Mode { Fov, Pinhole };
  Mode mode = Mode::Fov;
  double fov = 0.7;  // radians, full vertical angle (square pixels)
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  static Intrinsics from_fov(double fov, int width, int height);
  static Intrinsics from_pinhole(double fx, double fy, double cx, double cy, int width,
                                 int height);

  double focal_x() const;
  double focal_y() const;
  double center_x() const;
  double center_y() const;
  void validate() const;
};

struct Pose {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();  // camera-from-world
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Pose inverse() const;
  Pose compose(const Pose& rhs) const;  // this ∘ rhs (applies rhs first)
  Eigen::Vector3d apply(const Eigen::Vector3d& p_world) const { return R * p_world + t; }
  Eigen::Vector3d camera_center() const { return -R.transpose() * t; }
  void validate(double tol = 1e-6) const;

  // Camera at `eye` looking at `target`, with an up hint.
  static Pose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                      const Eigen::Vector3d& up = Eigen::Vector3d(0, 1, 0));
};

struct Ray {
  Eigen::Vector3d o;
  Eigen::Vector3d d;  // unit
  double tnear = 0.0, tfar = 0.0;  // tnear == tfar means the ray misses the volume
};

struct PixelRef {
  int x = 0, y = 0;
};

// One ray per requested pixel (all pixels when `pixels` is empty), cast
// through the pixel center; tnear/tfar from intersecting the extent cube.
std::vector<Ray> generate_rays(const Intrinsics& intr, const Pose& pose, const Extent& extent,
                               const std::vector<PixelRef>& pixels = {});

struct Projection {
  double u = 0, v = 0;
  bool in_front = false;
};

std::vector<Projection> project(const std::vector<Eigen::Vector3d>& points,
                                const Intrinsics& intr, const Pose& pose);

// Ray/axis-aligned-box intersection; returns {t0,t1} clamped to t >= 0, or
// nullopt on miss.
std::optional<std::pair<double, double>> intersect_extent(const Eigen::Vector3d& o,
                                                          const Eigen::Vector3d& d,
                                                          const Extent& extent);

// Sphere circumscribing the extent; rotation-invariant ray bounds used by the
// articulated renderer.
std::optional<std::pair<double, double>> intersect_bounding_sphere(const Eigen::Vector3d& o,
                                                                   const Eigen::Vector3d& d,
                                                                   const Extent& extent);

}  // namespace volgen
