// SPDX-License-Identifier: Apache-2.0
#include "volgen/camera.hpp"

#include <cmath>

namespace volgen {

Intrinsics Intrinsics::from_fov(double fov, int width, int height) {
  Intrinsics in;
  in.mode = Mode::Fov;
  in.fov = fov;
  in.width = width;
  in.height = height;
  in.validate();
  return in;
}

Intrinsics Intrinsics::from_pinhole(double fx, double fy, double cx, double cy, int width,
                                    int height) {
  Intrinsics in;
  in.mode = Mode::Pinhole;
  in.fx = fx;
  in.fy = fy;
  in.cx = cx;
  in.cy = cy;
  in.width = width;
  in.height = height;
  in.validate();
  return in;
}

double Intrinsics::focal_y() const {
  if (mode == Mode::Pinhole) return fy;
  return 0.5 * static_cast<double>(height) / std::tan(0.5 * fov);
}

double Intrinsics::focal_x() const { return mode == Mode::Pinhole ? fx : focal_y(); }

double Intrinsics::center_x() const {
  return mode == Mode::Pinhole ? cx : 0.5 * static_cast<double>(width);
}

double Intrinsics::center_y() const {
  return mode == Mode::Pinhole ? cy : 0.5 * static_cast<double>(height);
}

void Intrinsics::validate() const {
  check(width >= 1 && height >= 1, "Intrinsics: image size must be >= 1");
  if (mode == Mode::Fov)
    check(fov > 0.0 && fov < M_PI, "Intrinsics: fov out of range");
  else
    check(fx > 0.0 && fy > 0.0, "Intrinsics: focal lengths must be positive");
}

Pose Pose::inverse() const {
  Pose p;
  p.R = R.transpose();
  p.t = -(R.transpose() * t);
  return p;
}

Pose Pose::compose(const Pose& rhs) const {
  Pose p;
  p.R = R * rhs.R;
  p.t = R * rhs.t + t;
  return p;
}

void Pose::validate(double tol) const {
  check(((R * R.transpose()) - Eigen::Matrix3d::Identity()).norm() < tol,
        "Pose: rotation is not orthonormal");
  check(std::abs(R.determinant() - 1.0) < tol, "Pose: rotation determinant != +1");
}

Pose Pose::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                   const Eigen::Vector3d& up) {
  // camera -z axis points from eye toward target; y is image-down
  Eigen::Vector3d back = (eye - target).normalized();  // camera +z in world
  Eigen::Vector3d right = up.cross(back);
  if (right.norm() < 1e-9) right = Eigen::Vector3d(1, 0, 0);
  right.normalize();
  const Eigen::Vector3d down = back.cross(right);  // image y (down) in world
  Pose p;
  // rows of R are the camera axes expressed in world coordinates
  p.R.row(0) = right.transpose();
  p.R.row(1) = down.transpose();
  p.R.row(2) = back.transpose();
  p.t = -(p.R * eye);
  return p;
}

std::optional<std::pair<double, double>> intersect_extent(const Eigen::Vector3d& o,
                                                          const Eigen::Vector3d& d,
                                                          const Extent& extent) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < extent.lo[a] || o[a] > extent.hi[a]) return std::nullopt;
      continue;
    }
    double ta = (extent.lo[a] - o[a]) / d[a];
    double tb = (extent.hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t1 <= t0) return std::nullopt;
  return std::make_pair(t0, t1);
}

std::optional<std::pair<double, double>> intersect_bounding_sphere(const Eigen::Vector3d& o,
                                                                   const Eigen::Vector3d& d,
                                                                   const Extent& extent) {
  Eigen::Vector3d c(0.5 * (extent.lo[0] + extent.hi[0]), 0.5 * (extent.lo[1] + extent.hi[1]),
                    0.5 * (extent.lo[2] + extent.hi[2]));
  const double r = 0.5 * Eigen::Vector3d(extent.hi[0] - extent.lo[0], extent.hi[1] - extent.lo[1],
                                         extent.hi[2] - extent.lo[2])
                             .norm();
  const Eigen::Vector3d oc = o - c;
  const double b = oc.dot(d);
  const double disc = b * b - (oc.squaredNorm() - r * r);
  if (disc <= 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  double t0 = std::max(0.0, -b - s);
  double t1 = -b + s;
  if (t1 <= t0) return std::nullopt;
  return std::make_pair(t0, t1);
}

std::vector<Ray> generate_rays(const Intrinsics& intr, const Pose& pose, const Extent& extent,
                               const std::vector<PixelRef>& pixels) {
  intr.validate();
  pose.validate();
  const Pose inv = pose.inverse();  // world-from-camera
  const Eigen::Vector3d origin = pose.camera_center();
  const double fx = intr.focal_x(), fy = intr.focal_y();
  const double cx = intr.center_x(), cy = intr.center_y();

  auto make_ray = [&](int px, int py) {
    // pixel center (px+0.5, py+0.5); camera looks down -z, image y down
    const double u = (static_cast<double>(px) + 0.5 - cx) / fx;
    const double v = (static_cast<double>(py) + 0.5 - cy) / fy;
    Eigen::Vector3d dir_cam(u, -v, -1.0);
    Eigen::Vector3d dir = (inv.R * dir_cam).normalized();
    Ray r;
    r.o = origin;
    r.d = dir;
    if (auto hit = intersect_extent(origin, dir, extent)) {
      r.tnear = hit->first;
      r.tfar = hit->second;
    } else {
      r.tnear = r.tfar = 0.0;
    }
    return r;
  };

  std::vector<Ray> rays;
  if (pixels.empty()) {
    rays.reserve(static_cast<size_t>(intr.width) * intr.height);
    for (int py = 0; py < intr.height; ++py)
      for (int px = 0; px < intr.width; ++px) rays.push_back(make_ray(px, py));
  } else {
    rays.reserve(pixels.size());
    for (const auto& p : pixels) rays.push_back(make_ray(p.x, p.y));
  }
  return rays;
}

std::vector<Projection> project(const std::vector<Eigen::Vector3d>& points,
                                const Intrinsics& intr, const Pose& pose) {
  intr.validate();
  const double fx = intr.focal_x(), fy = intr.focal_y();
  const double cx = intr.center_x(), cy = intr.center_y();
  std::vector<Projection> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    const Eigen::Vector3d pc = pose.apply(p);
    Projection pr;
    pr.in_front = pc.z() < 0.0;  // camera looks down -z
    const double z = std::abs(pc.z()) < 1e-12 ? (pc.z() < 0 ? -1e-12 : 1e-12) : pc.z();
    pr.u = cx + fx * (pc.x() / -z);
    pr.v = cy + fy * (-pc.y() / -z);
    out.push_back(pr);
  }
  return out;
}

}  // namespace volgen
