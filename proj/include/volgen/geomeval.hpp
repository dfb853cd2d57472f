// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

#include "volgen/tensor.hpp"
#include "volgen/voxgrid.hpp"

namespace volgen {

struct TriangleMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> faces;

  bool empty() const { return faces.empty(); }
  double area() const;
  void validate() const;
};

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
};

// Iso-surface of a single-channel density grid; vertices in world
// coordinates. No surface crossing yields a valid empty mesh.
TriangleMesh marching_cubes(const VoxelGrid& density, double iso_level);

// Area-weighted uniform surface sampling, deterministic per seed.
PointCloud sample_surface(const TriangleMesh& mesh, int n, uint64_t seed);

// Sum of squared nearest-neighbor distances, both directions (no averaging).
double chamfer(const PointCloud& x, const PointCloud& y);

// Fraction of the reference set that is the nearest reference of at least one
// generated cloud; argmin ties break toward the lowest reference index.
double coverage(const std::vector<PointCloud>& generated,
                const std::vector<PointCloud>& reference);

// Mean over references of the closest generated cloud's Chamfer distance.
double mmd(const std::vector<PointCloud>& generated, const std::vector<PointCloud>& reference);

// 10*log10(1/MSE) for images in [0,1]; +inf sentinel when identical.
double psnr(const Tensor& a, const Tensor& b);

void write_obj(const std::string& path, const TriangleMesh& mesh);

}  // namespace volgen
