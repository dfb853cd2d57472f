// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Core>

#include <cstring>
#include <vector>

#include "volgen/ops.hpp"

namespace volgen {
namespace ops {

namespace {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

// Output z-slices are processed in slabs so the im2col buffer stays small.
int64_t slab_rows(int64_t patch, int64_t cols_per_slice) {
  const int64_t budget = (8ll << 20) / static_cast<int64_t>(sizeof(float));  // 8 MB
  return std::max<int64_t>(1, budget / std::max<int64_t>(1, patch * cols_per_slice));
}

void im2col_3d(const float* x, int64_t Ci, int64_t D, int64_t H, int64_t W, int k, int s,
               int p, int64_t Ho, int64_t Wo, int64_t z0, int64_t z1, float* cols) {
  const int64_t S = (z1 - z0) * Ho * Wo;
  for (int64_t ci = 0; ci < Ci; ++ci)
    for (int kz = 0; kz < k; ++kz)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          float* row = cols + (((ci * k + kz) * k + ky) * k + kx) * S;
          int64_t col = 0;
          for (int64_t oz = z0; oz < z1; ++oz) {
            const int64_t iz = oz * s + kz - p;
            const bool z_ok = iz >= 0 && iz < D;
            for (int64_t oy = 0; oy < Ho; ++oy) {
              const int64_t iy = oy * s + ky - p;
              const bool y_ok = iy >= 0 && iy < H;
              if (!z_ok || !y_ok) {
                for (int64_t ox = 0; ox < Wo; ++ox) row[col++] = 0.0f;
                continue;
              }
              const float* src = x + ((ci * D + iz) * H + iy) * W;
              for (int64_t ox = 0; ox < Wo; ++ox) {
                const int64_t ix = ox * s + kx - p;
                row[col++] = (ix >= 0 && ix < W) ? src[ix] : 0.0f;
              }
            }
          }
        }
}

void col2im_3d(const float* cols, int64_t Ci, int64_t D, int64_t H, int64_t W, int k, int s,
               int p, int64_t Ho, int64_t Wo, int64_t z0, int64_t z1, float* gx) {
  const int64_t S = (z1 - z0) * Ho * Wo;
  for (int64_t ci = 0; ci < Ci; ++ci)
    for (int kz = 0; kz < k; ++kz)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const float* row = cols + (((ci * k + kz) * k + ky) * k + kx) * S;
          int64_t col = 0;
          for (int64_t oz = z0; oz < z1; ++oz) {
            const int64_t iz = oz * s + kz - p;
            const bool z_ok = iz >= 0 && iz < D;
            for (int64_t oy = 0; oy < Ho; ++oy) {
              const int64_t iy = oy * s + ky - p;
              if (!z_ok || iy < 0 || iy >= H) {
                col += Wo;
                continue;
              }
              float* dst = gx + ((ci * D + iz) * H + iy) * W;
              for (int64_t ox = 0; ox < Wo; ++ox, ++col) {
                const int64_t ix = ox * s + kx - p;
                if (ix >= 0 && ix < W) dst[ix] += row[col];
              }
            }
          }
        }
}

}  // namespace

Var conv3d(Var x, Var w, Var b, int stride) {
  const Shape& xs = x->shape();
  const Shape& ws = w->shape();
  check(xs.size() == 5 && ws.size() == 5, "conv3d: rank");
  const int64_t N = xs[0], Ci = xs[1], D = xs[2], H = xs[3], W = xs[4];
  const int64_t Co = ws[0];
  const int k = static_cast<int>(ws[2]);
  check(ws[1] == Ci && ws[3] == k && ws[4] == k && (k % 2 == 1), "conv3d: kernel");
  check(stride == 1 || stride == 2, "conv3d: stride");
  const int p = k / 2;
  const int64_t Do = (D + 2 * p - k) / stride + 1;
  const int64_t Ho = (H + 2 * p - k) / stride + 1;
  const int64_t Wo = (W + 2 * p - k) / stride + 1;
  const int64_t patch = Ci * k * k * k;
  const int64_t out_spatial = Do * Ho * Wo;

  Tensor y({N, Co, Do, Ho, Wo});

  const bool pointwise = (k == 1 && stride == 1);
  std::vector<float> cols;
  if (!pointwise) cols.resize(static_cast<size_t>(patch * slab_rows(patch, Ho * Wo) * Ho * Wo));

  for (int64_t n = 0; n < N; ++n) {
    const float* xn = x->value.data() + n * Ci * D * H * W;
    float* yn = y.data() + n * Co * out_spatial;
    if (pointwise) {
      MapM(yn, Co, out_spatial).noalias() =
          CMapM(w->value.data(), Co, Ci) * CMapM(xn, Ci, out_spatial);
    } else {
      const int64_t step = slab_rows(patch, Ho * Wo);
      for (int64_t z0 = 0; z0 < Do; z0 += step) {
        const int64_t z1 = std::min(Do, z0 + step);
        const int64_t S = (z1 - z0) * Ho * Wo;
        im2col_3d(xn, Ci, D, H, W, k, stride, p, Ho, Wo, z0, z1, cols.data());
        MatRM out = CMapM(w->value.data(), Co, patch) * CMapM(cols.data(), patch, S);
        for (int64_t co = 0; co < Co; ++co)
          std::memcpy(yn + co * out_spatial + z0 * Ho * Wo, out.data() + co * S,
                      static_cast<size_t>(S) * sizeof(float));
      }
    }
    if (b) {
      for (int64_t co = 0; co < Co; ++co) {
        const float bv = b->value[co];
        float* dst = yn + co * out_spatial;
        for (int64_t i = 0; i < out_spatial; ++i) dst[i] += bv;
      }
    }
  }

  std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  return make_op(
      "conv3d", std::move(y), parents,
      [x, w, b, N, Ci, D, H, W, Co, k, stride, p, Do, Ho, Wo, patch, out_spatial,
       pointwise](VarNode& node) {
        std::vector<float> cols, dcols;
        if (!pointwise) {
          const int64_t step = slab_rows(patch, Ho * Wo);
          cols.resize(static_cast<size_t>(patch * step * Ho * Wo));
          dcols.resize(static_cast<size_t>(patch * step * Ho * Wo));
        }
        for (int64_t n = 0; n < N; ++n) {
          const float* xn = x->value.data() + n * Ci * D * H * W;
          const float* gyn = node.grad.data() + n * Co * out_spatial;
          if (pointwise) {
            if (w->requires_grad)
              MapM(w->ensure_grad().data(), Co, Ci).noalias() +=
                  CMapM(gyn, Co, out_spatial) * CMapM(xn, Ci, out_spatial).transpose();
            if (x->requires_grad)
              MapM(x->ensure_grad().data() + n * Ci * D * H * W, Ci, out_spatial).noalias() +=
                  CMapM(w->value.data(), Co, Ci).transpose() * CMapM(gyn, Co, out_spatial);
          } else {
            const int64_t step = slab_rows(patch, Ho * Wo);
            for (int64_t z0 = 0; z0 < Do; z0 += step) {
              const int64_t z1 = std::min(Do, z0 + step);
              const int64_t S = (z1 - z0) * Ho * Wo;
              // gather the slab of output grads contiguously per channel
              MatRM gy_slab(Co, S);
              for (int64_t co = 0; co < Co; ++co)
                std::memcpy(gy_slab.data() + co * S, gyn + co * out_spatial + z0 * Ho * Wo,
                            static_cast<size_t>(S) * sizeof(float));
              if (w->requires_grad) {
                im2col_3d(xn, Ci, D, H, W, k, stride, p, Ho, Wo, z0, z1, cols.data());
                MapM(w->ensure_grad().data(), Co, patch).noalias() +=
                    gy_slab * CMapM(cols.data(), patch, S).transpose();
              }
              if (x->requires_grad) {
                MapM(dcols.data(), patch, S).noalias() =
                    CMapM(w->value.data(), Co, patch).transpose() * gy_slab;
                col2im_3d(dcols.data(), Ci, D, H, W, k, stride, p, Ho, Wo, z0, z1,
                          x->ensure_grad().data() + n * Ci * D * H * W);
              }
            }
          }
          if (b && b->requires_grad) {
            Tensor& gb = b->ensure_grad();
            for (int64_t co = 0; co < Co; ++co) {
              double acc = 0.0;
              const float* src = gyn + co * out_spatial;
              for (int64_t i = 0; i < out_spatial; ++i) acc += src[i];
              gb[co] += static_cast<float>(acc);
            }
          }
        }
      });
}

namespace {

void im2col_2d(const float* x, int64_t Ci, int64_t H, int64_t W, int k, int s, int p,
               int64_t Ho, int64_t Wo, float* cols) {
  const int64_t S = Ho * Wo;
  for (int64_t ci = 0; ci < Ci; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        float* row = cols + ((ci * k + ky) * k + kx) * S;
        int64_t col = 0;
        for (int64_t oy = 0; oy < Ho; ++oy) {
          const int64_t iy = oy * s + ky - p;
          if (iy < 0 || iy >= H) {
            for (int64_t ox = 0; ox < Wo; ++ox) row[col++] = 0.0f;
            continue;
          }
          const float* src = x + (ci * H + iy) * W;
          for (int64_t ox = 0; ox < Wo; ++ox) {
            const int64_t ix = ox * s + kx - p;
            row[col++] = (ix >= 0 && ix < W) ? src[ix] : 0.0f;
          }
        }
      }
}

void col2im_2d(const float* cols, int64_t Ci, int64_t H, int64_t W, int k, int s, int p,
               int64_t Ho, int64_t Wo, float* gx) {
  const int64_t S = Ho * Wo;
  for (int64_t ci = 0; ci < Ci; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const float* row = cols + ((ci * k + ky) * k + kx) * S;
        int64_t col = 0;
        for (int64_t oy = 0; oy < Ho; ++oy) {
          const int64_t iy = oy * s + ky - p;
          if (iy < 0 || iy >= H) {
            col += Wo;
            continue;
          }
          float* dst = gx + (ci * H + iy) * W;
          for (int64_t ox = 0; ox < Wo; ++ox, ++col) {
            const int64_t ix = ox * s + kx - p;
            if (ix >= 0 && ix < W) dst[ix] += row[col];
          }
        }
      }
}

}  // namespace

Var conv2d(Var x, Var w, Var b, int stride) {
  const Shape& xs = x->shape();
  const Shape& ws = w->shape();
  check(xs.size() == 4 && ws.size() == 4, "conv2d: rank");
  const int64_t N = xs[0], Ci = xs[1], H = xs[2], W = xs[3];
  const int64_t Co = ws[0];
  const int k = static_cast<int>(ws[2]);
  check(ws[1] == Ci && ws[3] == k && (k % 2 == 1), "conv2d: kernel");
  const int p = k / 2;
  const int64_t Ho = (H + 2 * p - k) / stride + 1;
  const int64_t Wo = (W + 2 * p - k) / stride + 1;
  const int64_t patch = Ci * k * k;
  const int64_t S = Ho * Wo;

  Tensor y({N, Co, Ho, Wo});
  std::vector<float> cols(static_cast<size_t>(patch * S));
  for (int64_t n = 0; n < N; ++n) {
    const float* xn = x->value.data() + n * Ci * H * W;
    im2col_2d(xn, Ci, H, W, k, stride, p, Ho, Wo, cols.data());
    MapM(y.data() + n * Co * S, Co, S).noalias() =
        CMapM(w->value.data(), Co, patch) * CMapM(cols.data(), patch, S);
    if (b) {
      for (int64_t co = 0; co < Co; ++co) {
        const float bv = b->value[co];
        float* dst = y.data() + (n * Co + co) * S;
        for (int64_t i = 0; i < S; ++i) dst[i] += bv;
      }
    }
  }

  std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  return make_op("conv2d", std::move(y), parents,
                 [x, w, b, N, Ci, H, W, Co, k, stride, p, Ho, Wo, patch, S](VarNode& node) {
                   std::vector<float> cols(static_cast<size_t>(patch * S));
                   std::vector<float> dcols(static_cast<size_t>(patch * S));
                   for (int64_t n = 0; n < N; ++n) {
                     const float* xn = x->value.data() + n * Ci * H * W;
                     const float* gyn = node.grad.data() + n * Co * S;
                     if (w->requires_grad) {
                       im2col_2d(xn, Ci, H, W, k, stride, p, Ho, Wo, cols.data());
                       MapM(w->ensure_grad().data(), Co, patch).noalias() +=
                           CMapM(gyn, Co, S) * CMapM(cols.data(), patch, S).transpose();
                     }
                     if (x->requires_grad) {
                       MapM(dcols.data(), patch, S).noalias() =
                           CMapM(w->value.data(), Co, patch).transpose() * CMapM(gyn, Co, S);
                       col2im_2d(dcols.data(), Ci, H, W, k, stride, p, Ho, Wo,
                                 x->ensure_grad().data() + n * Ci * H * W);
                     }
                     if (b && b->requires_grad) {
                       Tensor& gb = b->ensure_grad();
                       for (int64_t co = 0; co < Co; ++co) {
                         double acc = 0.0;
                         for (int64_t i = 0; i < S; ++i) acc += gyn[co * S + i];
                         gb[co] += static_cast<float>(acc);
                       }
                     }
                   }
                 });
}

}  // namespace ops
}  // namespace volgen
