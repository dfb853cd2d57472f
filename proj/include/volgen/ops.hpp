// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "volgen/autograd.hpp"

namespace volgen {
namespace ops {

// elementwise
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, float s);
Var add_scalar(Var a, float s);
Var relu(Var a);
Var silu(Var a);
Var gelu(Var a);
Var sigmoid(Var a);
Var abs(Var a);
Var square(Var a);

// reductions
Var sum_all(Var a);
Var mean_all(Var a);

// shape
Var reshape(Var a, Shape shape);
Var permute(Var a, std::vector<int> perm);
Var concat(const std::vector<Var>& xs, int dim);
Var slice(Var a, int dim, int64_t start, int64_t len);

// linear algebra
Var matmul(Var a, Var b);                       // [m,k] x [k,n]
Var linear(Var x, Var w, Var b);                // [B,in] x [out,in]^T + b
Var bmm(Var a, Var b, bool transpose_b = false);  // [B,m,k] x [B,k,n]

// normalizations / structured nonlinearities
Var softmax_lastdim(Var a);
Var layernorm_lastdim(Var x, Var gamma, Var beta, float eps = 1e-5f);
Var group_norm(Var x, Var gamma, Var beta, int groups, float eps = 1e-5f);
// Batch statistics over (N, spatial); updates running stats in training mode.
Var batch_norm(Var x, Var gamma, Var beta, Tensor running_mean, Tensor running_var,
               bool training, float momentum = 0.1f, float eps = 1e-5f);

// x:[N,C,...] scaled per (n,c): y = x * s + t
Var scale_shift_channels(Var x, Var s, Var t);

// convolutions, odd kernel, padding k/2
Var conv3d(Var x, Var w, Var b, int stride = 1);  // x:[N,C,D,H,W] w:[Co,Ci,k,k,k]
Var conv2d(Var x, Var w, Var b, int stride = 1);  // x:[N,C,H,W]  w:[Co,Ci,k,k]

Var upsample_nearest3d(Var x);  // x2 each spatial dim
Var upsample_nearest2d(Var x);
Var avg_pool2d(Var x);  // 2x2, stride 2

// rows of a [V,dim] table; gradient scatter-adds into the table
Var embedding_rows(Var table, std::vector<int64_t> indices);

// composites
Var l1_sum(Var a, Var b);   // sum |a-b|
Var mse_mean(Var a, Var b);

}  // namespace ops
}  // namespace volgen
