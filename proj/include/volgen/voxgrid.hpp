// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "volgen/tensor.hpp"

namespace volgen {

using Vec3d = std::array<double, 3>;

// Axis-aligned world-space cube spanned by a grid. Cell-center convention:
// grid coordinate i lies at the world position of cell center i, and the
// extent corners coincide with the outermost cell centers.
struct Extent {
  Vec3d lo{-1.0, -1.0, -1.0};
  Vec3d hi{1.0, 1.0, 1.0};
  bool operator==(const Extent&) const = default;
};

enum class OobPolicy { Zero, Clamp };

// Channel conventions used across the pipeline.
//   density:     C = 1
//   radiance:    C = 4   (1 density + 3 RGB)
//   articulated: C = 4 + n_parts (density, RGB, LBS weights)
//   latent:      free-form feature volume
enum class GridLayout { Density, Radiance, Articulated, Latent };

const char* layout_name(GridLayout l);
GridLayout layout_from_name(const std::string& name);

// Dense voxel grid; values stored channel-last, x fastest among spatial dims:
// flat index ((z*S + y)*S + x)*C + c. Pure value type.
struct VoxelGrid {
  int resolution = 0;  // S, cells per axis
  int channels = 0;    // C
  Extent extent;
  GridLayout layout = GridLayout::Latent;
  Tensor values;  // shape [S,S,S,C]

  static VoxelGrid zeros(int S, int C, GridLayout layout = GridLayout::Latent,
                         Extent extent = {});

  int64_t index(int x, int y, int z, int c = 0) const {
    return ((static_cast<int64_t>(z) * resolution + y) * resolution + x) * channels + c;
  }
  float& at(int x, int y, int z, int c) { return values[index(x, y, z, c)]; }
  float at(int x, int y, int z, int c) const { return values[index(x, y, z, c)]; }

  Vec3d world_to_grid(const Vec3d& p) const;
  Vec3d grid_to_world(const Vec3d& g) const;

  // Trilinear sample of all channels at one world point. Returns false (and
  // zeros `out`) when the point lies outside the extent under the Zero policy.
  bool sample_trilinear(const Vec3d& p, OobPolicy oob, float* out) const;
  std::vector<float> sample_trilinear(const std::vector<Vec3d>& points, OobPolicy oob) const;

  void validate() const;
};

struct SplitGrids {
  VoxelGrid density;  // C=1
  VoxelGrid rgb;      // C=3
  std::optional<VoxelGrid> lbs;
};

// Splits a radiance (C=4) or articulated (C=4+N_p) grid into its parts.
// Throws on channel-count/layout mismatch.
SplitGrids split_channels(const VoxelGrid& grid, GridLayout layout);

// Templated trilinear fetch shared by the renderer kernels; `values` is the
// channel-last buffer described above, `g` a continuous grid coordinate.
template <typename TVal, typename TOut>
inline bool trilerp_fetch(const TVal* values, int S, int C, const double g_in[3],
                          OobPolicy oob, TOut* out) {
  double g[3] = {g_in[0], g_in[1], g_in[2]};
  if (oob == OobPolicy::Zero) {
    for (int a = 0; a < 3; ++a) {
      if (g[a] < 0.0 || g[a] > static_cast<double>(S - 1)) {
        for (int c = 0; c < C; ++c) out[c] = TOut(0);
        return false;
      }
    }
  } else {
    for (int a = 0; a < 3; ++a) g[a] = std::min(std::max(g[a], 0.0), double(S - 1));
  }
  int i0[3], i1[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    double fl = std::floor(g[a]);
    i0[a] = static_cast<int>(fl);
    if (i0[a] >= S - 1) i0[a] = S - 2;
    if (i0[a] < 0) i0[a] = 0;
    i1[a] = i0[a] + 1;
    f[a] = g[a] - static_cast<double>(i0[a]);
  }
  const int64_t SS = static_cast<int64_t>(S);
  for (int c = 0; c < C; ++c) out[c] = TOut(0);
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? f[0] : 1.0 - f[0]) * (dy ? f[1] : 1.0 - f[1]) *
                         (dz ? f[2] : 1.0 - f[2]);
        const int64_t base =
            (((dz ? i1[2] : i0[2]) * SS + (dy ? i1[1] : i0[1])) * SS + (dx ? i1[0] : i0[0])) * C;
        for (int c = 0; c < C; ++c) out[c] += TOut(w * values[base + c]);
      }
  return true;
}

// Corner weights/indices of the same fetch; used by backward passes to
// scatter gradients into the grid.
struct TrilerpStencil {
  int64_t corner[8];  // flat voxel index (without channel)
  double weight[8];
  bool inside = false;
};

template <typename TVal>
inline TrilerpStencil trilerp_stencil(int S, const double g_in[3], OobPolicy oob) {
  TrilerpStencil st;
  double g[3] = {g_in[0], g_in[1], g_in[2]};
  if (oob == OobPolicy::Zero) {
    for (int a = 0; a < 3; ++a)
      if (g[a] < 0.0 || g[a] > static_cast<double>(S - 1)) return st;
  } else {
    for (int a = 0; a < 3; ++a) g[a] = std::min(std::max(g[a], 0.0), double(S - 1));
  }
  int i0[3], i1[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    double fl = std::floor(g[a]);
    i0[a] = static_cast<int>(fl);
    if (i0[a] >= S - 1) i0[a] = S - 2;
    if (i0[a] < 0) i0[a] = 0;
    i1[a] = i0[a] + 1;
    f[a] = g[a] - static_cast<double>(i0[a]);
  }
  const int64_t SS = static_cast<int64_t>(S);
  int k = 0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx, ++k) {
        st.weight[k] = (dx ? f[0] : 1.0 - f[0]) * (dy ? f[1] : 1.0 - f[1]) *
                       (dz ? f[2] : 1.0 - f[2]);
        st.corner[k] =
            ((dz ? i1[2] : i0[2]) * SS + (dy ? i1[1] : i0[1])) * SS + (dx ? i1[0] : i0[0]);
      }
  st.inside = true;
  return st;
}

}  // namespace volgen
