// SPDX-License-Identifier: Apache-2.0
#include "volgen/voxgrid.hpp"

#include <cstring>

namespace volgen {

const char* layout_name(GridLayout l) {
  switch (l) {
    case GridLayout::Density: return "density";
    case GridLayout::Radiance: return "radiance";
    case GridLayout::Articulated: return "articulated";
    case GridLayout::Latent: return "latent";
  }
  return "latent";
}

GridLayout layout_from_name(const std::string& name) {
  if (name == "density") return GridLayout::Density;
  if (name == "radiance") return GridLayout::Radiance;
  if (name == "articulated") return GridLayout::Articulated;
  if (name == "latent") return GridLayout::Latent;
  throw std::runtime_error("unknown grid layout: " + name);
}

VoxelGrid VoxelGrid::zeros(int S, int C, GridLayout layout, Extent extent) {
  check(S >= 2 && C >= 1, "VoxelGrid: need S >= 2, C >= 1");
  VoxelGrid g;
  g.resolution = S;
  g.channels = C;
  g.extent = extent;
  g.layout = layout;
  g.values = Tensor::zeros({S, S, S, C});
  return g;
}

Vec3d VoxelGrid::world_to_grid(const Vec3d& p) const {
  Vec3d g;
  for (int a = 0; a < 3; ++a) {
    const double span = extent.hi[a] - extent.lo[a];
    g[a] = (p[a] - extent.lo[a]) / span * static_cast<double>(resolution - 1);
  }
  return g;
}

Vec3d VoxelGrid::grid_to_world(const Vec3d& g) const {
  Vec3d p;
  for (int a = 0; a < 3; ++a) {
    const double span = extent.hi[a] - extent.lo[a];
    p[a] = extent.lo[a] + g[a] / static_cast<double>(resolution - 1) * span;
  }
  return p;
}

bool VoxelGrid::sample_trilinear(const Vec3d& p, OobPolicy oob, float* out) const {
  const Vec3d g = world_to_grid(p);
  return trilerp_fetch<float, float>(values.data(), resolution, channels, g.data(), oob, out);
}

std::vector<float> VoxelGrid::sample_trilinear(const std::vector<Vec3d>& points,
                                               OobPolicy oob) const {
  std::vector<float> out(points.size() * static_cast<size_t>(channels));
  for (size_t i = 0; i < points.size(); ++i)
    sample_trilinear(points[i], oob, out.data() + i * static_cast<size_t>(channels));
  return out;
}

void VoxelGrid::validate() const {
  check(resolution >= 2, "VoxelGrid: resolution must be >= 2");
  check(channels >= 1, "VoxelGrid: channels must be >= 1");
  for (int a = 0; a < 3; ++a)
    check(extent.hi[a] > extent.lo[a], "VoxelGrid: degenerate extent");
  check(values.shape() == Shape({resolution, resolution, resolution, channels}),
        "VoxelGrid: value shape mismatch");
  check(values.all_finite(), "VoxelGrid: non-finite values");
}

SplitGrids split_channels(const VoxelGrid& grid, GridLayout layout) {
  const int C = grid.channels;
  if (layout == GridLayout::Radiance)
    check(C == 4, "split_channels: radiance layout expects 4 channels, got " + std::to_string(C));
  else if (layout == GridLayout::Articulated)
    check(C > 4, "split_channels: articulated layout expects 4+N_p channels, got " +
                     std::to_string(C));
  else
    throw std::runtime_error("split_channels: layout must be radiance or articulated");

  const int S = grid.resolution;
  SplitGrids out;
  out.density = VoxelGrid::zeros(S, 1, GridLayout::Density, grid.extent);
  out.rgb = VoxelGrid::zeros(S, 3, GridLayout::Latent, grid.extent);
  const int np = C - 4;
  if (np > 0) out.lbs = VoxelGrid::zeros(S, np, GridLayout::Latent, grid.extent);

  const int64_t cells = static_cast<int64_t>(S) * S * S;
  const float* src = grid.values.data();
  for (int64_t i = 0; i < cells; ++i) {
    out.density.values[i] = src[i * C + 0];
    for (int c = 0; c < 3; ++c) out.rgb.values[i * 3 + c] = src[i * C + 1 + c];
    if (np > 0)
      for (int c = 0; c < np; ++c) out.lbs->values[i * np + c] = src[i * C + 4 + c];
  }
  return out;
}

}  // namespace volgen
