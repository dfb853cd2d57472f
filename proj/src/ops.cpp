// SPDX-License-Identifier: Apache-2.0
#include "volgen/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace volgen {
namespace ops {

namespace {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

void require_same_shape(const Var& a, const Var& b, const char* who) {
  check(a->shape() == b->shape(), std::string(who) + ": shape mismatch " +
                                      shape_str(a->shape()) + " vs " + shape_str(b->shape()));
}

Tensor map_unary(const Tensor& x, float (*f)(float)) {
  Tensor y(x.shape());
  const float* xs = x.data();
  float* ys = y.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) ys[i] = f(xs[i]);
  return y;
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor y(a->shape());
  const int64_t n = y.numel();
  for (int64_t i = 0; i < n; ++i) y[i] = a->value[i] + b->value[i];
  return make_op("add", std::move(y), {a, b}, [a, b](VarNode& node) {
    const int64_t n = node.grad.numel();
    if (a->requires_grad) {
      Tensor& ga = a->ensure_grad();
      for (int64_t i = 0; i < n; ++i) ga[i] += node.grad[i];
    }
    if (b->requires_grad) {
      Tensor& gb = b->ensure_grad();
      for (int64_t i = 0; i < n; ++i) gb[i] += node.grad[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor y(a->shape());
  const int64_t n = y.numel();
  for (int64_t i = 0; i < n; ++i) y[i] = a->value[i] - b->value[i];
  return make_op("sub", std::move(y), {a, b}, [a, b](VarNode& node) {
    const int64_t n = node.grad.numel();
    if (a->requires_grad) {
      Tensor& ga = a->ensure_grad();
      for (int64_t i = 0; i < n; ++i) ga[i] += node.grad[i];
    }
    if (b->requires_grad) {
      Tensor& gb = b->ensure_grad();
      for (int64_t i = 0; i < n; ++i) gb[i] -= node.grad[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor y(a->shape());
  const int64_t n = y.numel();
  for (int64_t i = 0; i < n; ++i) y[i] = a->value[i] * b->value[i];
  return make_op("mul", std::move(y), {a, b}, [a, b](VarNode& node) {
    const int64_t n = node.grad.numel();
    if (a->requires_grad) {
      Tensor& ga = a->ensure_grad();
      for (int64_t i = 0; i < n; ++i) ga[i] += node.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      Tensor& gb = b->ensure_grad();
      for (int64_t i = 0; i < n; ++i) gb[i] += node.grad[i] * a->value[i];
    }
  });
}

Var scale(Var a, float s) {
  Tensor y(a->shape());
  const int64_t n = y.numel();
  for (int64_t i = 0; i < n; ++i) y[i] = a->value[i] * s;
  return make_op("scale", std::move(y), {a}, [a, s](VarNode& node) {
    Tensor& ga = a->ensure_grad();
    const int64_t n = node.grad.numel();
    for (int64_t i = 0; i < n; ++i) ga[i] += node.grad[i] * s;
  });
}

Var add_scalar(Var a, float s) {
  Tensor y(a->shape());
  const int64_t n = y.numel();
  for (int64_t i = 0; i < n; ++i) y[i] = a->value[i] + s;
  return make_op("add_scalar", std::move(y), {a}, [a](VarNode& node) {
    Tensor& ga = a->ensure_grad();
    const int64_t n = node.grad.numel();
    for (int64_t i = 0; i < n; ++i) ga[i] += node.grad[i];
  });
}

Var relu(Var a) {
  Tensor y = map_unary(a->value, [](float x) { return x > 0.0f ? x : 0.0f; });
  return make_op("relu", std::move(y), {a}, [a](VarNode& node) {
    Tensor& ga = a->ensure_grad();
    const int64_t n = node.grad.numel();
    for (int64_t i = 0; i < n; ++i)
      if (a->value[i] > 0.0f) ga[i] += node.grad[i];
  });
}

Var silu(Var a) {
  Tensor y(a->shape());
  const int64_t n = y.numel();
  for (int64_t i = 0; i < n; ++i) {
    const float x = a->value[i];
    y[i] = x / (1.0f + std::exp(-x));
  }
  return make_op("silu", std::move(y), {a}, [a](VarNode& node) {
    Tensor& ga = a->ensure_grad();
    const int64_t n = node.grad.numel();
    for (int64_t i = 0; i < n; ++i) {
      const float x = a->value[i];
      const float s = 1.0f / (1.0f + std::exp(-x));
      ga[i] += node.grad[i] * (s * (1.0f + x * (1.0f - s)));
    }
  });
}

namespace {
constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)
}

Var gelu(Var a) {
  // tanh approximation
  Tensor y(a->shape());
  const int64_t n = y.numel();
  for (int64_t i = 0; i < n; ++i) {
    const float x = a->value[i];
    y[i] = 0.5f * x * (1.0f + std::tanh(kGeluC * (x + 0.044715f * x * x * x)));
  }
  return make_op("gelu", std::move(y), {a}, [a](VarNode& node) {
    Tensor& ga = a->ensure_grad();
    const int64_t n = node.grad.numel();
    for (int64_t i = 0; i < n; ++i) {
      const float x = a->value[i];
      const float u = kGeluC * (x + 0.044715f * x * x * x);
      const float t = std::tanh(u);
      const float du = kGeluC * (1.0f + 3.0f * 0.044715f * x * x);
      ga[i] += node.grad[i] * (0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * du);
    }
  });
}

Var sigmoid(Var a) {
  Tensor y(a->shape());
  const int64_t n = y.numel();
  for (int64_t i = 0; i < n; ++i) y[i] = 1.0f / (1.0f + std::exp(-a->value[i]));
  Var out = make_op("sigmoid", std::move(y), {a}, nullptr);
  if (out->requires_grad) {
    out->backward_fn = [a](VarNode& node) {
      Tensor& ga = a->ensure_grad();
      const int64_t n = node.grad.numel();
      for (int64_t i = 0; i < n; ++i) {
        const float s = node.value[i];
        ga[i] += node.grad[i] * s * (1.0f - s);
      }
    };
  }
  return out;
}

Var abs(Var a) {
  Tensor y = map_unary(a->value, [](float x) { return std::fabs(x); });
  return make_op("abs", std::move(y), {a}, [a](VarNode& node) {
    Tensor& ga = a->ensure_grad();
    const int64_t n = node.grad.numel();
    for (int64_t i = 0; i < n; ++i) {
      const float x = a->value[i];
      ga[i] += node.grad[i] * (x > 0.0f ? 1.0f : (x < 0.0f ? -1.0f : 0.0f));
    }
  });
}

Var square(Var a) {
  Tensor y = map_unary(a->value, [](float x) { return x * x; });
  return make_op("square", std::move(y), {a}, [a](VarNode& node) {
    Tensor& ga = a->ensure_grad();
    const int64_t n = node.grad.numel();
    for (int64_t i = 0; i < n; ++i) ga[i] += node.grad[i] * 2.0f * a->value[i];
  });
}

Var sum_all(Var a) {
  double acc = 0.0;
  const int64_t n = a->numel();
  for (int64_t i = 0; i < n; ++i) acc += a->value[i];
  return make_op("sum", Tensor::scalar(static_cast<float>(acc)), {a}, [a](VarNode& node) {
    const float g = node.grad[0];
    Tensor& ga = a->ensure_grad();
    const int64_t n = ga.numel();
    for (int64_t i = 0; i < n; ++i) ga[i] += g;
  });
}

Var mean_all(Var a) { return scale(sum_all(a), 1.0f / static_cast<float>(a->numel())); }

Var reshape(Var a, Shape shape) {
  Tensor y = a->value.reshaped(std::move(shape));
  return make_op("reshape", std::move(y), {a}, [a](VarNode& node) {
    Tensor& ga = a->ensure_grad();
    const int64_t n = ga.numel();
    for (int64_t i = 0; i < n; ++i) ga[i] += node.grad[i];
  });
}

Var permute(Var a, std::vector<int> perm) {
  const Shape& in = a->shape();
  const int nd = static_cast<int>(in.size());
  check(static_cast<int>(perm.size()) == nd, "permute: rank mismatch");
  Shape out(nd);
  for (int i = 0; i < nd; ++i) out[i] = in[perm[i]];

  // row-major strides
  std::vector<int64_t> in_strides(nd, 1), out_strides(nd, 1);
  for (int i = nd - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in[i + 1];
  for (int i = nd - 2; i >= 0; --i) out_strides[i] = out_strides[i + 1] * out[i + 1];

  auto scatter = [nd, in_strides, out_strides, perm, out](const float* src, float* dst,
                                                          bool accumulate) {
    const int64_t n = shape_numel(out);
    std::vector<int64_t> idx(nd, 0);
    for (int64_t o = 0; o < n; ++o) {
      int64_t src_off = 0;
      for (int i = 0; i < nd; ++i) src_off += idx[i] * in_strides[perm[i]];
      if (accumulate)
        dst[src_off] += src[o];
      else
        dst[o] = src[src_off];
      for (int i = nd - 1; i >= 0; --i) {
        if (++idx[i] < out[i]) break;
        idx[i] = 0;
      }
    }
  };

  Tensor y(out);
  scatter(a->value.data(), y.data(), false);
  return make_op("permute", std::move(y), {a}, [a, scatter](VarNode& node) {
    Tensor& ga = a->ensure_grad();
    scatter(node.grad.data(), ga.data(), true);
  });
}

Var concat(const std::vector<Var>& xs, int dim) {
  check(!xs.empty(), "concat: empty input");
  const Shape& s0 = xs[0]->shape();
  const int nd = static_cast<int>(s0.size());
  check(dim >= 0 && dim < nd, "concat: bad dim");
  int64_t cat = 0;
  for (const auto& x : xs) {
    check(x->shape().size() == s0.size(), "concat: rank mismatch");
    for (int i = 0; i < nd; ++i)
      if (i != dim) check(x->shape()[i] == s0[i], "concat: shape mismatch");
    cat += x->shape()[dim];
  }
  Shape out = s0;
  out[dim] = cat;

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < dim; ++i) outer *= s0[i];
  for (int i = dim + 1; i < nd; ++i) inner *= s0[i];

  std::vector<int64_t> widths;
  widths.reserve(xs.size());
  for (const auto& x : xs) widths.push_back(x->shape()[dim] * inner);

  Tensor y(out);
  {
    float* dst = y.data();
    const int64_t row = cat * inner;
    int64_t off = 0;
    for (size_t xi = 0; xi < xs.size(); ++xi) {
      const float* src = xs[xi]->value.data();
      for (int64_t o = 0; o < outer; ++o)
        std::memcpy(dst + o * row + off, src + o * widths[xi],
                    static_cast<size_t>(widths[xi]) * sizeof(float));
      off += widths[xi];
    }
  }
  std::vector<Var> parents = xs;
  return make_op("concat", std::move(y), parents,
                 [parents, widths, outer, inner, cat](VarNode& node) {
                   const int64_t row = cat * inner;
                   int64_t off = 0;
                   for (size_t xi = 0; xi < parents.size(); ++xi) {
                     if (parents[xi]->requires_grad) {
                       Tensor& gp = parents[xi]->ensure_grad();
                       for (int64_t o = 0; o < outer; ++o) {
                         const float* src = node.grad.data() + o * row + off;
                         float* dst = gp.data() + o * widths[xi];
                         for (int64_t i = 0; i < widths[xi]; ++i) dst[i] += src[i];
                       }
                     }
                     off += widths[xi];
                   }
                 });
}

Var slice(Var a, int dim, int64_t start, int64_t len) {
  const Shape& s = a->shape();
  const int nd = static_cast<int>(s.size());
  check(dim >= 0 && dim < nd && start >= 0 && start + len <= s[dim], "slice: out of range");
  Shape out = s;
  out[dim] = len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < dim; ++i) outer *= s[i];
  for (int i = dim + 1; i < nd; ++i) inner *= s[i];

  Tensor y(out);
  {
    const float* src = a->value.data();
    float* dst = y.data();
    const int64_t in_row = s[dim] * inner, out_row = len * inner;
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(dst + o * out_row, src + o * in_row + start * inner,
                  static_cast<size_t>(out_row) * sizeof(float));
  }
  return make_op("slice", std::move(y), {a}, [a, outer, inner, start, dimsz = s[dim], len](VarNode& node) {
    Tensor& ga = a->ensure_grad();
    const int64_t in_row = dimsz * inner, out_row = len * inner;
    for (int64_t o = 0; o < outer; ++o) {
      float* dst = ga.data() + o * in_row + start * inner;
      const float* src = node.grad.data() + o * out_row;
      for (int64_t i = 0; i < out_row; ++i) dst[i] += src[i];
    }
  });
}

Var matmul(Var a, Var b) {
  check(a->shape().size() == 2 && b->shape().size() == 2 && a->shape()[1] == b->shape()[0],
        "matmul: bad shapes");
  const int64_t m = a->shape()[0], k = a->shape()[1], n = b->shape()[1];
  Tensor y({m, n});
  MapM(y.data(), m, n).noalias() =
      CMapM(a->value.data(), m, k) * CMapM(b->value.data(), k, n);
  return make_op("matmul", std::move(y), {a, b}, [a, b, m, k, n](VarNode& node) {
    CMapM gy(node.grad.data(), m, n);
    if (a->requires_grad) {
      Tensor& ga = a->ensure_grad();
      MapM(ga.data(), m, k).noalias() += gy * CMapM(b->value.data(), k, n).transpose();
    }
    if (b->requires_grad) {
      Tensor& gb = b->ensure_grad();
      MapM(gb.data(), k, n).noalias() += CMapM(a->value.data(), m, k).transpose() * gy;
    }
  });
}

Var linear(Var x, Var w, Var b) {
  check(x->shape().size() == 2 && w->shape().size() == 2 && x->shape()[1] == w->shape()[1],
        "linear: bad shapes");
  const int64_t B = x->shape()[0], in = x->shape()[1], out = w->shape()[0];
  Tensor y({B, out});
  MapM ym(y.data(), B, out);
  ym.noalias() = CMapM(x->value.data(), B, in) * CMapM(w->value.data(), out, in).transpose();
  if (b) {
    check(b->numel() == out, "linear: bias size");
    for (int64_t i = 0; i < B; ++i)
      for (int64_t j = 0; j < out; ++j) y[i * out + j] += b->value[j];
  }
  std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  return make_op("linear", std::move(y), parents, [x, w, b, B, in, out](VarNode& node) {
    CMapM gy(node.grad.data(), B, out);
    if (x->requires_grad) {
      Tensor& gx = x->ensure_grad();
      MapM(gx.data(), B, in).noalias() += gy * CMapM(w->value.data(), out, in);
    }
    if (w->requires_grad) {
      Tensor& gw = w->ensure_grad();
      MapM(gw.data(), out, in).noalias() +=
          gy.transpose() * CMapM(x->value.data(), B, in);
    }
    if (b && b->requires_grad) {
      Tensor& gb = b->ensure_grad();
      for (int64_t i = 0; i < B; ++i)
        for (int64_t j = 0; j < out; ++j) gb[j] += node.grad[i * out + j];
    }
  });
}

Var bmm(Var a, Var b, bool transpose_b) {
  check(a->shape().size() == 3 && b->shape().size() == 3, "bmm: rank");
  const int64_t B = a->shape()[0], m = a->shape()[1], k = a->shape()[2];
  const int64_t n = transpose_b ? b->shape()[1] : b->shape()[2];
  check(b->shape()[0] == B && (transpose_b ? b->shape()[2] : b->shape()[1]) == k, "bmm: dims");
  Tensor y({B, m, n});
  for (int64_t i = 0; i < B; ++i) {
    CMapM am(a->value.data() + i * m * k, m, k);
    MapM ym(y.data() + i * m * n, m, n);
    if (transpose_b)
      ym.noalias() = am * CMapM(b->value.data() + i * n * k, n, k).transpose();
    else
      ym.noalias() = am * CMapM(b->value.data() + i * k * n, k, n);
  }
  return make_op("bmm", std::move(y), {a, b}, [a, b, B, m, k, n, transpose_b](VarNode& node) {
    for (int64_t i = 0; i < B; ++i) {
      CMapM gy(node.grad.data() + i * m * n, m, n);
      CMapM am(a->value.data() + i * m * k, m, k);
      if (a->requires_grad) {
        MapM ga(a->ensure_grad().data() + i * m * k, m, k);
        if (transpose_b)
          ga.noalias() += gy * CMapM(b->value.data() + i * n * k, n, k);
        else
          ga.noalias() += gy * CMapM(b->value.data() + i * k * n, k, n).transpose();
      }
      if (b->requires_grad) {
        if (transpose_b) {
          MapM gb(b->ensure_grad().data() + i * n * k, n, k);
          gb.noalias() += gy.transpose() * am;
        } else {
          MapM gb(b->ensure_grad().data() + i * k * n, k, n);
          gb.noalias() += am.transpose() * gy;
        }
      }
    }
  });
}

Var softmax_lastdim(Var a) {
  const Shape& s = a->shape();
  const int64_t n = s.back();
  const int64_t rows = a->numel() / n;
  Tensor y(s);
  for (int64_t r = 0; r < rows; ++r) {
    const float* xs = a->value.data() + r * n;
    float* ys = y.data() + r * n;
    float mx = xs[0];
    for (int64_t i = 1; i < n; ++i) mx = std::max(mx, xs[i]);
    double Z = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      ys[i] = std::exp(xs[i] - mx);
      Z += ys[i];
    }
    const float inv = static_cast<float>(1.0 / Z);
    for (int64_t i = 0; i < n; ++i) ys[i] *= inv;
  }
  Var out = make_op("softmax", std::move(y), {a}, nullptr);
  if (out->requires_grad) {
    Tensor yv = out->value;  // shares storage
    out->backward_fn = [a, yv, rows, n](VarNode& node) {
      Tensor& ga = a->ensure_grad();
      for (int64_t r = 0; r < rows; ++r) {
        const float* yr = yv.data() + r * n;
        const float* gr = node.grad.data() + r * n;
        double dot = 0.0;
        for (int64_t i = 0; i < n; ++i) dot += static_cast<double>(gr[i]) * yr[i];
        float* gar = ga.data() + r * n;
        for (int64_t i = 0; i < n; ++i)
          gar[i] += yr[i] * (gr[i] - static_cast<float>(dot));
      }
    };
  }
  return out;
}

Var layernorm_lastdim(Var x, Var gamma, Var beta, float eps) {
  const Shape& s = x->shape();
  const int64_t C = s.back();
  const int64_t rows = x->numel() / C;
  check(gamma->numel() == C && beta->numel() == C, "layernorm: affine size");
  Tensor y(s);
  auto mu = std::make_shared<std::vector<float>>(rows);
  auto rstd = std::make_shared<std::vector<float>>(rows);
  for (int64_t r = 0; r < rows; ++r) {
    const float* xr = x->value.data() + r * C;
    double m = 0.0;
    for (int64_t i = 0; i < C; ++i) m += xr[i];
    m /= C;
    double v = 0.0;
    for (int64_t i = 0; i < C; ++i) v += (xr[i] - m) * (xr[i] - m);
    v /= C;
    const float rs = static_cast<float>(1.0 / std::sqrt(v + eps));
    (*mu)[r] = static_cast<float>(m);
    (*rstd)[r] = rs;
    float* yr = y.data() + r * C;
    for (int64_t i = 0; i < C; ++i)
      yr[i] = (xr[i] - static_cast<float>(m)) * rs * gamma->value[i] + beta->value[i];
  }
  return make_op("layernorm", std::move(y), {x, gamma, beta},
                 [x, gamma, beta, mu, rstd, rows, C](VarNode& node) {
                   Tensor* gx = x->requires_grad ? &x->ensure_grad() : nullptr;
                   Tensor* gg = gamma->requires_grad ? &gamma->ensure_grad() : nullptr;
                   Tensor* gb = beta->requires_grad ? &beta->ensure_grad() : nullptr;
                   for (int64_t r = 0; r < rows; ++r) {
                     const float* xr = x->value.data() + r * C;
                     const float* gr = node.grad.data() + r * C;
                     const float m = (*mu)[r], rs = (*rstd)[r];
                     double s1 = 0.0, s2 = 0.0;
                     for (int64_t i = 0; i < C; ++i) {
                       const float xh = (xr[i] - m) * rs;
                       const float dyh = gr[i] * gamma->value[i];
                       s1 += dyh;
                       s2 += static_cast<double>(dyh) * xh;
                       if (gg) (*gg)[i] += gr[i] * xh;
                       if (gb) (*gb)[i] += gr[i];
                     }
                     if (gx) {
                       const float a1 = static_cast<float>(s1 / C);
                       const float a2 = static_cast<float>(s2 / C);
                       float* gxr = gx->data() + r * C;
                       for (int64_t i = 0; i < C; ++i) {
                         const float xh = (xr[i] - m) * rs;
                         const float dyh = gr[i] * gamma->value[i];
                         gxr[i] += rs * (dyh - a1 - xh * a2);
                       }
                     }
                   }
                 });
}

Var group_norm(Var x, Var gamma, Var beta, int groups, float eps) {
  const Shape& s = x->shape();
  check(s.size() >= 2, "group_norm: rank");
  const int64_t N = s[0], C = s[1];
  check(C % groups == 0, "group_norm: groups must divide channels");
  int64_t spatial = 1;
  for (size_t i = 2; i < s.size(); ++i) spatial *= s[i];
  const int64_t cpg = C / groups;
  const int64_t gsz = cpg * spatial;

  Tensor y(s);
  auto mu = std::make_shared<std::vector<float>>(N * groups);
  auto rstd = std::make_shared<std::vector<float>>(N * groups);
  for (int64_t nidx = 0; nidx < N; ++nidx) {
    for (int64_t g = 0; g < groups; ++g) {
      const float* base = x->value.data() + (nidx * C + g * cpg) * spatial;
      double m = 0.0;
      for (int64_t i = 0; i < gsz; ++i) m += base[i];
      m /= gsz;
      double v = 0.0;
      for (int64_t i = 0; i < gsz; ++i) v += (base[i] - m) * (base[i] - m);
      v /= gsz;
      const float rs = static_cast<float>(1.0 / std::sqrt(v + eps));
      (*mu)[nidx * groups + g] = static_cast<float>(m);
      (*rstd)[nidx * groups + g] = rs;
      float* yb = y.data() + (nidx * C + g * cpg) * spatial;
      for (int64_t c = 0; c < cpg; ++c) {
        const float ga = gamma->value[g * cpg + c], be = beta->value[g * cpg + c];
        for (int64_t i = 0; i < spatial; ++i) {
          yb[c * spatial + i] =
              (base[c * spatial + i] - static_cast<float>(m)) * rs * ga + be;
        }
      }
    }
  }
  return make_op(
      "group_norm", std::move(y), {x, gamma, beta},
      [x, gamma, beta, mu, rstd, N, C, groups, cpg, spatial, gsz](VarNode& node) {
        Tensor* gx = x->requires_grad ? &x->ensure_grad() : nullptr;
        Tensor* gg = gamma->requires_grad ? &gamma->ensure_grad() : nullptr;
        Tensor* gb = beta->requires_grad ? &beta->ensure_grad() : nullptr;
        for (int64_t nidx = 0; nidx < N; ++nidx) {
          for (int64_t g = 0; g < groups; ++g) {
            const float* xb = x->value.data() + (nidx * C + g * cpg) * spatial;
            const float* gr = node.grad.data() + (nidx * C + g * cpg) * spatial;
            const float m = (*mu)[nidx * groups + g], rs = (*rstd)[nidx * groups + g];
            double s1 = 0.0, s2 = 0.0;
            for (int64_t c = 0; c < cpg; ++c) {
              const float ga = gamma->value[g * cpg + c];
              for (int64_t i = 0; i < spatial; ++i) {
                const int64_t o = c * spatial + i;
                const float xh = (xb[o] - m) * rs;
                const float dyh = gr[o] * ga;
                s1 += dyh;
                s2 += static_cast<double>(dyh) * xh;
                if (gg) (*gg)[g * cpg + c] += gr[o] * xh;
                if (gb) (*gb)[g * cpg + c] += gr[o];
              }
            }
            if (gx) {
              const float a1 = static_cast<float>(s1 / gsz);
              const float a2 = static_cast<float>(s2 / gsz);
              float* gxb = gx->data() + (nidx * C + g * cpg) * spatial;
              for (int64_t c = 0; c < cpg; ++c) {
                const float ga = gamma->value[g * cpg + c];
                for (int64_t i = 0; i < spatial; ++i) {
                  const int64_t o = c * spatial + i;
                  const float xh = (xb[o] - m) * rs;
                  const float dyh = gr[o] * ga;
                  gxb[o] += rs * (dyh - a1 - xh * a2);
                }
              }
            }
          }
        }
      });
}

Var batch_norm(Var x, Var gamma, Var beta, Tensor running_mean, Tensor running_var,
               bool training, float momentum, float eps) {
  const Shape& s = x->shape();
  const int64_t N = s[0], C = s[1];
  int64_t spatial = 1;
  for (size_t i = 2; i < s.size(); ++i) spatial *= s[i];
  const int64_t M = N * spatial;

  auto mu = std::make_shared<std::vector<float>>(C);
  auto rstd = std::make_shared<std::vector<float>>(C);
  for (int64_t c = 0; c < C; ++c) {
    double m, v;
    if (training) {
      m = 0.0;
      for (int64_t nidx = 0; nidx < N; ++nidx) {
        const float* base = x->value.data() + (nidx * C + c) * spatial;
        for (int64_t i = 0; i < spatial; ++i) m += base[i];
      }
      m /= M;
      v = 0.0;
      for (int64_t nidx = 0; nidx < N; ++nidx) {
        const float* base = x->value.data() + (nidx * C + c) * spatial;
        for (int64_t i = 0; i < spatial; ++i) v += (base[i] - m) * (base[i] - m);
      }
      v /= M;
      running_mean[c] = (1.0f - momentum) * running_mean[c] + momentum * static_cast<float>(m);
      running_var[c] = (1.0f - momentum) * running_var[c] + momentum * static_cast<float>(v);
    } else {
      m = running_mean[c];
      v = running_var[c];
    }
    (*mu)[c] = static_cast<float>(m);
    (*rstd)[c] = static_cast<float>(1.0 / std::sqrt(v + eps));
  }

  Tensor y(s);
  for (int64_t nidx = 0; nidx < N; ++nidx)
    for (int64_t c = 0; c < C; ++c) {
      const float* base = x->value.data() + (nidx * C + c) * spatial;
      float* yb = y.data() + (nidx * C + c) * spatial;
      const float m = (*mu)[c], rs = (*rstd)[c];
      const float ga = gamma->value[c], be = beta->value[c];
      for (int64_t i = 0; i < spatial; ++i) yb[i] = (base[i] - m) * rs * ga + be;
    }

  return make_op(
      "batch_norm", std::move(y), {x, gamma, beta},
      [x, gamma, beta, mu, rstd, N, C, spatial, M, training](VarNode& node) {
        Tensor* gx = x->requires_grad ? &x->ensure_grad() : nullptr;
        Tensor* gg = gamma->requires_grad ? &gamma->ensure_grad() : nullptr;
        Tensor* gb = beta->requires_grad ? &beta->ensure_grad() : nullptr;
        for (int64_t c = 0; c < C; ++c) {
          const float m = (*mu)[c], rs = (*rstd)[c], ga = gamma->value[c];
          double s1 = 0.0, s2 = 0.0;
          for (int64_t nidx = 0; nidx < N; ++nidx) {
            const float* xb = x->value.data() + (nidx * C + c) * spatial;
            const float* gr = node.grad.data() + (nidx * C + c) * spatial;
            for (int64_t i = 0; i < spatial; ++i) {
              const float xh = (xb[i] - m) * rs;
              s1 += gr[i];
              s2 += static_cast<double>(gr[i]) * xh;
              if (gg) (*gg)[c] += gr[i] * xh;
              if (gb) (*gb)[c] += gr[i];
            }
          }
          if (gx) {
            const float a1 = static_cast<float>(s1 / M) * ga;
            const float a2 = static_cast<float>(s2 / M) * ga;
            for (int64_t nidx = 0; nidx < N; ++nidx) {
              const float* xb = x->value.data() + (nidx * C + c) * spatial;
              const float* gr = node.grad.data() + (nidx * C + c) * spatial;
              float* gxb = gx->data() + (nidx * C + c) * spatial;
              if (training) {
                for (int64_t i = 0; i < spatial; ++i) {
                  const float xh = (xb[i] - m) * rs;
                  gxb[i] += rs * (gr[i] * ga - a1 - xh * a2);
                }
              } else {
                for (int64_t i = 0; i < spatial; ++i) gxb[i] += rs * ga * gr[i];
              }
            }
          }
        }
      });
}

Var scale_shift_channels(Var x, Var s, Var t) {
  const Shape& xs = x->shape();
  const int64_t N = xs[0], C = xs[1];
  check(s->shape() == Shape({N, C}) && t->shape() == Shape({N, C}), "scale_shift: bad shapes");
  int64_t spatial = 1;
  for (size_t i = 2; i < xs.size(); ++i) spatial *= xs[i];
  Tensor y(xs);
  for (int64_t nidx = 0; nidx < N; ++nidx)
    for (int64_t c = 0; c < C; ++c) {
      const float sv = s->value[nidx * C + c], tv = t->value[nidx * C + c];
      const float* xb = x->value.data() + (nidx * C + c) * spatial;
      float* yb = y.data() + (nidx * C + c) * spatial;
      for (int64_t i = 0; i < spatial; ++i) yb[i] = xb[i] * sv + tv;
    }
  return make_op("scale_shift", std::move(y), {x, s, t}, [x, s, t, N, C, spatial](VarNode& node) {
    for (int64_t nidx = 0; nidx < N; ++nidx)
      for (int64_t c = 0; c < C; ++c) {
        const float* gr = node.grad.data() + (nidx * C + c) * spatial;
        const float sv = s->value[nidx * C + c];
        const float* xb = x->value.data() + (nidx * C + c) * spatial;
        if (x->requires_grad) {
          float* gxb = x->ensure_grad().data() + (nidx * C + c) * spatial;
          for (int64_t i = 0; i < spatial; ++i) gxb[i] += gr[i] * sv;
        }
        if (s->requires_grad) {
          double acc = 0.0;
          for (int64_t i = 0; i < spatial; ++i) acc += static_cast<double>(gr[i]) * xb[i];
          s->ensure_grad()[nidx * C + c] += static_cast<float>(acc);
        }
        if (t->requires_grad) {
          double acc = 0.0;
          for (int64_t i = 0; i < spatial; ++i) acc += gr[i];
          t->ensure_grad()[nidx * C + c] += static_cast<float>(acc);
        }
      }
  });
}

Var upsample_nearest3d(Var x) {
  const Shape& s = x->shape();
  check(s.size() == 5, "upsample3d: rank");
  const int64_t N = s[0], C = s[1], D = s[2], H = s[3], W = s[4];
  Tensor y({N, C, D * 2, H * 2, W * 2});
  const float* src = x->value.data();
  float* dst = y.data();
  for (int64_t nc = 0; nc < N * C; ++nc)
    for (int64_t z = 0; z < 2 * D; ++z)
      for (int64_t yy = 0; yy < 2 * H; ++yy)
        for (int64_t xx = 0; xx < 2 * W; ++xx)
          dst[((nc * 2 * D + z) * 2 * H + yy) * 2 * W + xx] =
              src[((nc * D + z / 2) * H + yy / 2) * W + xx / 2];
  return make_op("upsample3d", std::move(y), {x}, [x, N, C, D, H, W](VarNode& node) {
    Tensor& gx = x->ensure_grad();
    const float* gr = node.grad.data();
    for (int64_t nc = 0; nc < N * C; ++nc)
      for (int64_t z = 0; z < 2 * D; ++z)
        for (int64_t yy = 0; yy < 2 * H; ++yy)
          for (int64_t xx = 0; xx < 2 * W; ++xx)
            gx[((nc * D + z / 2) * H + yy / 2) * W + xx / 2] +=
                gr[((nc * 2 * D + z) * 2 * H + yy) * 2 * W + xx];
  });
}

Var upsample_nearest2d(Var x) {
  const Shape& s = x->shape();
  check(s.size() == 4, "upsample2d: rank");
  const int64_t N = s[0], C = s[1], H = s[2], W = s[3];
  Tensor y({N, C, H * 2, W * 2});
  const float* src = x->value.data();
  float* dst = y.data();
  for (int64_t nc = 0; nc < N * C; ++nc)
    for (int64_t yy = 0; yy < 2 * H; ++yy)
      for (int64_t xx = 0; xx < 2 * W; ++xx)
        dst[(nc * 2 * H + yy) * 2 * W + xx] = src[(nc * H + yy / 2) * W + xx / 2];
  return make_op("upsample2d", std::move(y), {x}, [x, N, C, H, W](VarNode& node) {
    Tensor& gx = x->ensure_grad();
    const float* gr = node.grad.data();
    for (int64_t nc = 0; nc < N * C; ++nc)
      for (int64_t yy = 0; yy < 2 * H; ++yy)
        for (int64_t xx = 0; xx < 2 * W; ++xx)
          gx[(nc * H + yy / 2) * W + xx / 2] += gr[(nc * 2 * H + yy) * 2 * W + xx];
  });
}

Var avg_pool2d(Var x) {
  const Shape& s = x->shape();
  check(s.size() == 4 && s[2] % 2 == 0 && s[3] % 2 == 0, "avg_pool2d: bad shape");
  const int64_t N = s[0], C = s[1], H = s[2], W = s[3];
  Tensor y({N, C, H / 2, W / 2});
  const float* src = x->value.data();
  float* dst = y.data();
  for (int64_t nc = 0; nc < N * C; ++nc)
    for (int64_t yy = 0; yy < H / 2; ++yy)
      for (int64_t xx = 0; xx < W / 2; ++xx) {
        const float* b = src + (nc * H + 2 * yy) * W + 2 * xx;
        dst[(nc * (H / 2) + yy) * (W / 2) + xx] =
            0.25f * (b[0] + b[1] + b[W] + b[W + 1]);
      }
  return make_op("avg_pool2d", std::move(y), {x}, [x, N, C, H, W](VarNode& node) {
    Tensor& gx = x->ensure_grad();
    const float* gr = node.grad.data();
    for (int64_t nc = 0; nc < N * C; ++nc)
      for (int64_t yy = 0; yy < H / 2; ++yy)
        for (int64_t xx = 0; xx < W / 2; ++xx) {
          const float g = 0.25f * gr[(nc * (H / 2) + yy) * (W / 2) + xx];
          float* b = gx.data() + (nc * H + 2 * yy) * W + 2 * xx;
          b[0] += g;
          b[1] += g;
          b[W] += g;
          b[W + 1] += g;
        }
  });
}

Var embedding_rows(Var table, std::vector<int64_t> indices) {
  check(table->shape().size() == 2, "embedding: table rank");
  const int64_t V = table->shape()[0], dim = table->shape()[1];
  const int64_t B = static_cast<int64_t>(indices.size());
  Tensor y({B, dim});
  for (int64_t i = 0; i < B; ++i) {
    check(indices[i] >= 0 && indices[i] < V, "embedding: index out of range");
    std::memcpy(y.data() + i * dim, table->value.data() + indices[i] * dim,
                static_cast<size_t>(dim) * sizeof(float));
  }
  return make_op("embedding", std::move(y), {table},
                 [table, idx = std::move(indices), dim](VarNode& node) {
                   Tensor& gt = table->ensure_grad();
                   for (size_t i = 0; i < idx.size(); ++i) {
                     const float* gr = node.grad.data() + static_cast<int64_t>(i) * dim;
                     float* dst = gt.data() + idx[i] * dim;
                     for (int64_t j = 0; j < dim; ++j) dst[j] += gr[j];
                   }
                 });
}

Var l1_sum(Var a, Var b) { return sum_all(abs(sub(a, b))); }
Var mse_mean(Var a, Var b) { return mean_all(square(sub(a, b))); }

}  // namespace ops
}  // namespace volgen
