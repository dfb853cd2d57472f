// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "volgen/autograd.hpp"
#include "volgen/camera.hpp"
#include "volgen/rng.hpp"
#include "volgen/voxgrid.hpp"

namespace volgen {

struct RenderSettings {
  int n_samples = 128;
  enum class Activation { Softplus, Relu, Identity };
  Activation density_activation = Activation::Softplus;
  double density_shift = 0.0;  // softplus(x + shift)
  std::array<double, 3> background{0.0, 0.0, 0.0};
  bool stratified = false;   // jittered bins during training; midpoints otherwise
  uint64_t jitter_seed = 0;  // stratified sampling is deterministic per seed
  enum class Bounds { Box, Sphere };
  Bounds bounds = Bounds::Box;  // per-ray interval: extent cube or its circumsphere

  void validate() const { check(n_samples >= 2, "RenderSettings: n_samples >= 2"); }
};

struct RenderOutput {
  int width = 0, height = 0;
  Tensor color;      // [H,W,3]
  Tensor occupancy;  // [H,W]
  Tensor depth;      // [H,W], expected ray parameter (0 where vacuum)
  Tensor normals;    // [H,W,3] when requested, unit where defined
};

namespace detail {

template <typename T>
inline T apply_density_act(T x, RenderSettings::Activation act, double shift) {
  switch (act) {
    case RenderSettings::Activation::Softplus: {
      const T z = x + T(shift);
      if (z > T(20)) return z;
      return std::log1p(std::exp(z));
    }
    case RenderSettings::Activation::Relu:
      return x > T(0) ? x : T(0);
    case RenderSettings::Activation::Identity:
      return x;
  }
  return x;
}

template <typename T>
inline T density_act_grad(T x, RenderSettings::Activation act, double shift) {
  switch (act) {
    case RenderSettings::Activation::Softplus: {
      const T z = x + T(shift);
      if (z > T(20)) return T(1);
      return T(1) / (T(1) + std::exp(-z));
    }
    case RenderSettings::Activation::Relu:
      return x > T(0) ? T(1) : T(0);
    case RenderSettings::Activation::Identity:
      return T(1);
  }
  return T(1);
}

inline std::pair<double, double> ray_interval(const Ray& r, const Extent& extent,
                                              RenderSettings::Bounds bounds) {
  if (bounds == RenderSettings::Bounds::Box) return {r.tnear, r.tfar};
  if (auto hit = intersect_bounding_sphere(r.o, r.d, extent)) return *hit;
  return {0.0, 0.0};
}

// Piecewise-constant quadrature with alpha compositing over equal bins.
// `values` is a channel-last radiance grid (C >= 4: density + RGB + rest).
// Outputs rgb+occupancy packed as [n_rays,4]; depth optional.
template <typename T>
void render_rays_core(const T* values, int S, int C, const Extent& extent, const Ray* rays,
                      int64_t n_rays, const RenderSettings& st, T* out_rgbo, T* out_depth) {
  const double sx = double(S - 1) / (extent.hi[0] - extent.lo[0]);
  const double sy = double(S - 1) / (extent.hi[1] - extent.lo[1]);
  const double sz = double(S - 1) / (extent.hi[2] - extent.lo[2]);
  const int n = st.n_samples;

#pragma omp parallel for schedule(static)
  for (int64_t ri = 0; ri < n_rays; ++ri) {
    const Ray& r = rays[ri];
    T* o = out_rgbo + ri * 4;
    auto [t0, t1] = ray_interval(r, extent, st.bounds);
    if (!(t1 > t0)) {
      o[0] = T(st.background[0]);
      o[1] = T(st.background[1]);
      o[2] = T(st.background[2]);
      o[3] = T(0);
      if (out_depth) out_depth[ri] = T(0);
      continue;
    }
    RandomStream jitter;
    if (st.stratified) jitter = RandomStream(st.jitter_seed).fork(uint64_t(ri) + 1);
    const double dt = (t1 - t0) / n;
    T trans = T(1);
    T acc_rgb[3] = {T(0), T(0), T(0)};
    T acc_w = T(0), acc_wt = T(0);
    for (int i = 0; i < n; ++i) {
      const double u = st.stratified ? jitter.uniform() : 0.5;
      const double t = t0 + (i + u) * dt;
      const double px = r.o.x() + t * r.d.x();
      const double py = r.o.y() + t * r.d.y();
      const double pz = r.o.z() + t * r.d.z();
      const double g[3] = {(px - extent.lo[0]) * sx, (py - extent.lo[1]) * sy,
                           (pz - extent.lo[2]) * sz};
      // outside the modeled volume stays empty regardless of the activation
      T sigma = T(0), cr = T(0), cg = T(0), cb = T(0);
      const TrilerpStencil stn = trilerp_stencil<T>(S, g, OobPolicy::Zero);
      if (stn.inside) {
        T f[4] = {T(0), T(0), T(0), T(0)};
        for (int k = 0; k < 8; ++k) {
          const T w = T(stn.weight[k]);
          const T* cell = values + stn.corner[k] * C;
          f[0] += w * cell[0];
          f[1] += w * cell[1];
          f[2] += w * cell[2];
          f[3] += w * cell[3];
        }
        sigma = apply_density_act(f[0], st.density_activation, st.density_shift);
        cr = f[1];
        cg = f[2];
        cb = f[3];
      }
      const T alpha = T(1) - std::exp(-sigma * T(dt));
      const T w = alpha * trans;
      acc_rgb[0] += w * cr;
      acc_rgb[1] += w * cg;
      acc_rgb[2] += w * cb;
      acc_w += w;
      acc_wt += w * T(t);
      trans *= (T(1) - alpha);
    }
    o[0] = acc_rgb[0] + trans * T(st.background[0]);
    o[1] = acc_rgb[1] + trans * T(st.background[1]);
    o[2] = acc_rgb[2] + trans * T(st.background[2]);
    o[3] = acc_w;
    if (out_depth) out_depth[ri] = acc_wt / std::max(acc_w, T(1e-10));
  }
}

// Gradient of a scalar loss with upstream grads on the packed rgb+occupancy
// outputs; depth is excluded from the differentiable path. `grad_values` must
// be zero-initialized by the caller (accumulated into). The range variant
// processes rays [r0, r1) with global indices, so jitter replay matches the
// forward pass exactly.
template <typename T>
void render_rays_backward_range(const T* values, int S, int C, const Extent& extent,
                                const Ray* rays, int64_t r0, int64_t r1,
                                const RenderSettings& st, const T* grad_rgbo,
                                T* grad_values) {
  const double sx = double(S - 1) / (extent.hi[0] - extent.lo[0]);
  const double sy = double(S - 1) / (extent.hi[1] - extent.lo[1]);
  const double sz = double(S - 1) / (extent.hi[2] - extent.lo[2]);
  const int n = st.n_samples;

  std::vector<T> alpha(n), wgt(n), tr(n), raw(n);
  std::vector<T> cols(static_cast<size_t>(n) * 3);
  std::vector<TrilerpStencil> stencils(n);

  for (int64_t ri = r0; ri < r1; ++ri) {
    const Ray& r = rays[ri];
    auto [t0, t1] = ray_interval(r, extent, st.bounds);
    if (!(t1 > t0)) continue;
    const T* g4 = grad_rgbo + ri * 4;
    RandomStream jitter;
    if (st.stratified) jitter = RandomStream(st.jitter_seed).fork(uint64_t(ri) + 1);
    const double dt = (t1 - t0) / n;

    // forward replay
    T trans = T(1);
    T fetched[4];
    for (int i = 0; i < n; ++i) {
      const double u = st.stratified ? jitter.uniform() : 0.5;
      const double t = t0 + (i + u) * dt;
      const double g[3] = {(r.o.x() + t * r.d.x() - extent.lo[0]) * sx,
                           (r.o.y() + t * r.d.y() - extent.lo[1]) * sy,
                           (r.o.z() + t * r.d.z() - extent.lo[2]) * sz};
      stencils[i] = trilerp_stencil<T>(S, g, OobPolicy::Zero);
      T sigma = T(0);
      raw[i] = T(0);
      cols[3 * i] = cols[3 * i + 1] = cols[3 * i + 2] = T(0);
      if (stencils[i].inside) {
        for (int c = 0; c < 4; ++c) fetched[c] = T(0);
        for (int k = 0; k < 8; ++k) {
          const T w = T(stencils[i].weight[k]);
          const T* cell = values + stencils[i].corner[k] * C;
          fetched[0] += w * cell[0];
          fetched[1] += w * cell[1];
          fetched[2] += w * cell[2];
          fetched[3] += w * cell[3];
        }
        raw[i] = fetched[0];
        sigma = apply_density_act(fetched[0], st.density_activation, st.density_shift);
        cols[3 * i] = fetched[1];
        cols[3 * i + 1] = fetched[2];
        cols[3 * i + 2] = fetched[3];
      }
      alpha[i] = T(1) - std::exp(-sigma * T(dt));
      wgt[i] = alpha[i] * trans;
      tr[i] = trans;
      trans *= (T(1) - alpha[i]);
    }

    // suffix accumulation of d L / d alpha_i
    const T bg_phi = g4[0] * T(st.background[0]) + g4[1] * T(st.background[1]) +
                     g4[2] * T(st.background[2]);
    T suffix = bg_phi * trans;  // gradient through the background term
    for (int i = n - 1; i >= 0; --i) {
      const T phi =
          g4[0] * cols[3 * i] + g4[1] * cols[3 * i + 1] + g4[2] * cols[3 * i + 2] + g4[3];
      const T one_m_a = std::max(T(1) - alpha[i], T(1e-12));
      const T dalpha = phi * tr[i] - suffix / one_m_a;
      suffix += phi * wgt[i];
      if (!stencils[i].inside) continue;
      const T dsigma_act = dalpha * T(dt) * (T(1) - alpha[i]);
      const T dsigma_raw =
          dsigma_act * density_act_grad(raw[i], st.density_activation, st.density_shift);
      const T dc[3] = {g4[0] * wgt[i], g4[1] * wgt[i], g4[2] * wgt[i]};
      for (int k = 0; k < 8; ++k) {
        const T w = T(stencils[i].weight[k]);
        T* cell = grad_values + stencils[i].corner[k] * C;
        cell[0] += w * dsigma_raw;
        cell[1] += w * dc[0];
        cell[2] += w * dc[1];
        cell[3] += w * dc[2];
      }
    }
  }
}

template <typename T>
void render_rays_backward(const T* values, int S, int C, const Extent& extent, const Ray* rays,
                          int64_t n_rays, const RenderSettings& st, const T* grad_rgbo,
                          T* grad_values) {
  render_rays_backward_range<T>(values, S, C, extent, rays, 0, n_rays, st, grad_rgbo,
                                grad_values);
}

}  // namespace detail

// Plain (non-differentiable) rendering of a radiance grid into images.
RenderOutput render(const VoxelGrid& grid, const Intrinsics& intr, const Pose& pose,
                    const RenderSettings& settings, bool with_normals = false);

// Flat variant over an explicit ray list: returns [n,4] rgb+occupancy (and
// fills depth if given).
Tensor render_rays(const VoxelGrid& grid, const std::vector<Ray>& rays,
                   const RenderSettings& settings, Tensor* depth = nullptr);

// Differentiable render of a channel-last radiance grid Var [S,S,S,C>=4];
// output Var is [n_rays, 4] packed rgb+occupancy.
Var render_rgbo_op(Var grid_values, int S, int C, const Extent& extent,
                   std::shared_ptr<std::vector<Ray>> rays, const RenderSettings& settings);

// Composited density-gradient normals; [H,W,3], zero where undefined.
Tensor render_normals(const VoxelGrid& grid, const std::vector<Ray>& rays,
                      const RenderSettings& settings, double occupancy_threshold = 0.5);

}  // namespace volgen
