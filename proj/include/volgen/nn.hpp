// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "volgen/ops.hpp"
#include "volgen/rng.hpp"

namespace volgen {
namespace nn {

// Named parameter/buffer registry. Modules register on construction so
// checkpointing and the optimizer see a stable, ordered view.
struct Registry {
  struct Entry {
    std::string name;
    Var var;        // requires_grad for params, not for buffers
    bool is_param;  // buffers (running stats) are saved but not optimized
  };
  std::vector<Entry> entries;

  Var add_param(const std::string& name, Tensor init) {
    Var v = param(std::move(init));
    entries.push_back({name, v, true});
    return v;
  }
  Var add_buffer(const std::string& name, Tensor init) {
    Var v = constant(std::move(init));
    entries.push_back({name, v, false});
    return v;
  }
  std::vector<Var> params() const {
    std::vector<Var> out;
    for (const auto& e : entries)
      if (e.is_param) out.push_back(e.var);
    return out;
  }
  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& e : entries)
      if (e.is_param) n += e.var->numel();
    return n;
  }
};

Tensor normal_init(Shape shape, double stddev, RandomStream& rng);
Tensor kaiming_init(Shape shape, int64_t fan_in, RandomStream& rng);

struct Linear {
  Var w, b;
  Linear() = default;
  Linear(Registry& reg, const std::string& name, int64_t in, int64_t out, RandomStream& rng,
         bool bias = true);
  Var operator()(Var x) const { return ops::linear(x, w, b); }
};

struct Conv3d {
  Var w, b;
  int stride = 1;
  Conv3d() = default;
  Conv3d(Registry& reg, const std::string& name, int64_t in, int64_t out, int k,
         RandomStream& rng, int stride = 1, bool bias = true, double gain = 1.0);
  Var operator()(Var x) const { return ops::conv3d(x, w, b, stride); }
};

struct Conv2d {
  Var w, b;
  int stride = 1;
  Conv2d() = default;
  Conv2d(Registry& reg, const std::string& name, int64_t in, int64_t out, int k,
         RandomStream& rng, int stride = 1, bool bias = true);
  Var operator()(Var x) const { return ops::conv2d(x, w, b, stride); }
};

// Normalization used inside decoder/denoiser blocks. kind "group" is
// batch-size independent; "batch" keeps running statistics.
struct Norm {
  std::string kind = "group";
  int groups = 8;
  Var gamma, beta;
  Var running_mean, running_var;  // batch mode only
  bool* training = nullptr;       // owned by the enclosing model

  Norm() = default;
  Norm(Registry& reg, const std::string& name, int64_t channels, const std::string& kind,
       bool* training_flag);
  Var operator()(Var x) const;
};

struct LayerNorm {
  Var gamma, beta;
  LayerNorm() = default;
  LayerNorm(Registry& reg, const std::string& name, int64_t channels);
  Var operator()(Var x) const { return ops::layernorm_lastdim(x, gamma, beta); }
};

// ADM-style self-attention over flattened voxels: x + proj(attn(norm(x))).
struct SelfAttention3d {
  Norm norm;
  Linear to_q, to_k, to_v, proj;
  int heads = 1;
  SelfAttention3d() = default;
  SelfAttention3d(Registry& reg, const std::string& name, int64_t channels, int heads,
                  const std::string& norm_kind, bool* training_flag, RandomStream& rng);
  Var operator()(Var x) const;  // x: [N,C,D,H,W]
};

// Multi-head attention over token sequences; q: [N,S,C], kv: [N,L,Ckv].
Var attention(Var q_tokens, Var kv_tokens, const Linear& to_q, const Linear& to_k,
              const Linear& to_v, const Linear& proj, int heads);

// LDM-style transformer block stack with cross-attention to a condition
// sequence; applied at configured resolutions of the denoiser.
struct SpatialTransformer3d {
  struct Block {
    LayerNorm n1, n2, n3;
    Linear q1, k1, v1, p1;  // self
    Linear q2, k2, v2, p2;  // cross
    Linear ff1, ff2;
  };
  Norm norm_in;
  Linear proj_in, proj_out;
  std::vector<Block> blocks;
  int heads = 1;
  SpatialTransformer3d() = default;
  SpatialTransformer3d(Registry& reg, const std::string& name, int64_t channels,
                       int64_t cond_dim, int depth, int heads, const std::string& norm_kind,
                       bool* training_flag, RandomStream& rng);
  Var operator()(Var x, Var cond) const;  // x: [N,C,D,H,W], cond: [N,L,cond_dim]
};

struct Adam {
  float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;
  std::vector<Var> params;
  std::vector<Tensor> m, v;
  int64_t t = 0;

  Adam() = default;
  Adam(std::vector<Var> params, float beta1, float beta2, float eps = 1e-8f);
  void zero_grad();
  void step(float lr);
};

}  // namespace nn
}  // namespace volgen
