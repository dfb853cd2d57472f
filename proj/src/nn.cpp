// SPDX-License-Identifier: Apache-2.0
#include "volgen/nn.hpp"

#include <cmath>

namespace volgen {
namespace nn {

Tensor normal_init(Shape shape, double stddev, RandomStream& rng) {
  Tensor t(shape);
  const int64_t n = t.numel();
  for (int64_t i = 0; i < n; ++i) t[i] = static_cast<float>(rng.normal() * stddev);
  return t;
}

Tensor kaiming_init(Shape shape, int64_t fan_in, RandomStream& rng) {
  return normal_init(std::move(shape), std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

Linear::Linear(Registry& reg, const std::string& name, int64_t in, int64_t out,
               RandomStream& rng, bool bias) {
  w = reg.add_param(name + ".w", normal_init({out, in}, 1.0 / std::sqrt(double(in)), rng));
  if (bias) b = reg.add_param(name + ".b", Tensor::zeros({out}));
}

Conv3d::Conv3d(Registry& reg, const std::string& name, int64_t in, int64_t out, int k,
               RandomStream& rng, int stride_, bool bias, double gain) {
  stride = stride_;
  const int64_t fan_in = in * k * k * k;
  Tensor init = normal_init({out, in, k, k, k}, gain * std::sqrt(2.0 / double(fan_in)), rng);
  w = reg.add_param(name + ".w", std::move(init));
  if (bias) b = reg.add_param(name + ".b", Tensor::zeros({out}));
}

Conv2d::Conv2d(Registry& reg, const std::string& name, int64_t in, int64_t out, int k,
               RandomStream& rng, int stride_, bool bias) {
  stride = stride_;
  const int64_t fan_in = in * k * k;
  w = reg.add_param(name + ".w", normal_init({out, in, k, k}, std::sqrt(2.0 / double(fan_in)), rng));
  if (bias) b = reg.add_param(name + ".b", Tensor::zeros({out}));
}

Norm::Norm(Registry& reg, const std::string& name, int64_t channels, const std::string& kind_,
           bool* training_flag) {
  kind = kind_;
  training = training_flag;
  groups = static_cast<int>(std::min<int64_t>(8, channels));
  while (channels % groups != 0) --groups;
  gamma = reg.add_param(name + ".gamma", Tensor::full({channels}, 1.0f));
  beta = reg.add_param(name + ".beta", Tensor::zeros({channels}));
  if (kind == "batch") {
    running_mean = reg.add_buffer(name + ".running_mean", Tensor::zeros({channels}));
    running_var = reg.add_buffer(name + ".running_var", Tensor::full({channels}, 1.0f));
  }
}

Var Norm::operator()(Var x) const {
  if (kind == "batch") {
    const bool train = training == nullptr || *training;
    return ops::batch_norm(x, gamma, beta, running_mean->value, running_var->value, train);
  }
  return ops::group_norm(x, gamma, beta, groups);
}

SelfAttention3d::SelfAttention3d(Registry& reg, const std::string& name, int64_t channels,
                                 int heads_, const std::string& norm_kind, bool* training_flag,
                                 RandomStream& rng) {
  heads = heads_;
  norm = Norm(reg, name + ".norm", channels, norm_kind, training_flag);
  to_q = Linear(reg, name + ".q", channels, channels, rng);
  to_k = Linear(reg, name + ".k", channels, channels, rng);
  to_v = Linear(reg, name + ".v", channels, channels, rng);
  proj = Linear(reg, name + ".proj", channels, channels, rng);
  // zero-init the output projection: the block starts as identity
  proj.w->value.zero();
}

Var attention(Var q_tokens, Var kv_tokens, const Linear& to_q, const Linear& to_k,
              const Linear& to_v, const Linear& proj, int heads) {
  const int64_t N = q_tokens->shape()[0];
  const int64_t S = q_tokens->shape()[1];
  const int64_t C = q_tokens->shape()[2];
  const int64_t L = kv_tokens->shape()[1];
  const int64_t Ckv = kv_tokens->shape()[2];
  const int64_t Cq = to_q.w->shape()[0];
  check(Cq % heads == 0, "attention: heads must divide channels");
  const int64_t dh = Cq / heads;
  const int64_t hh = heads;

  Var q = ops::reshape(to_q(ops::reshape(q_tokens, {N * S, C})), {N, S, hh, dh});
  Var k = ops::reshape(to_k(ops::reshape(kv_tokens, {N * L, Ckv})), {N, L, hh, dh});
  Var v = ops::reshape(to_v(ops::reshape(kv_tokens, {N * L, Ckv})), {N, L, hh, dh});
  q = ops::reshape(ops::permute(q, {0, 2, 1, 3}), {N * hh, S, dh});
  k = ops::reshape(ops::permute(k, {0, 2, 1, 3}), {N * hh, L, dh});
  v = ops::reshape(ops::permute(v, {0, 2, 1, 3}), {N * hh, L, dh});

  Var logits = ops::scale(ops::bmm(q, k, /*transpose_b=*/true),
                          1.0f / std::sqrt(static_cast<float>(dh)));
  Var out = ops::bmm(ops::softmax_lastdim(logits), v);  // [N*heads, S, dh]
  out = ops::reshape(ops::permute(ops::reshape(out, {N, hh, S, dh}), {0, 2, 1, 3}), {N * S, Cq});
  return ops::reshape(proj(out), {N, S, Cq});
}

Var SelfAttention3d::operator()(Var x) const {
  const Shape& s = x->shape();
  const int64_t N = s[0], C = s[1];
  const int64_t S = s[2] * s[3] * s[4];
  Var h = norm(x);
  Var tokens = ops::reshape(ops::permute(ops::reshape(h, {N, C, S}), {0, 2, 1}), {N, S, C});
  Var out = attention(tokens, tokens, to_q, to_k, to_v, proj, heads);
  Var vol = ops::reshape(ops::permute(out, {0, 2, 1}), s);
  return ops::add(x, vol);
}

SpatialTransformer3d::SpatialTransformer3d(Registry& reg, const std::string& name,
                                           int64_t channels, int64_t cond_dim, int depth,
                                           int heads_, const std::string& norm_kind,
                                           bool* training_flag, RandomStream& rng) {
  heads = heads_;
  norm_in = Norm(reg, name + ".norm_in", channels, norm_kind, training_flag);
  proj_in = Linear(reg, name + ".proj_in", channels, channels, rng);
  proj_out = Linear(reg, name + ".proj_out", channels, channels, rng);
  proj_out.w->value.zero();
  blocks.resize(depth);
  for (int d = 0; d < depth; ++d) {
    auto& blk = blocks[d];
    const std::string bn = name + ".block" + std::to_string(d);
    blk.n1 = LayerNorm(reg, bn + ".n1", channels);
    blk.n2 = LayerNorm(reg, bn + ".n2", channels);
    blk.n3 = LayerNorm(reg, bn + ".n3", channels);
    blk.q1 = Linear(reg, bn + ".q1", channels, channels, rng);
    blk.k1 = Linear(reg, bn + ".k1", channels, channels, rng);
    blk.v1 = Linear(reg, bn + ".v1", channels, channels, rng);
    blk.p1 = Linear(reg, bn + ".p1", channels, channels, rng);
    blk.q2 = Linear(reg, bn + ".q2", channels, channels, rng);
    blk.k2 = Linear(reg, bn + ".k2", cond_dim, channels, rng);
    blk.v2 = Linear(reg, bn + ".v2", cond_dim, channels, rng);
    blk.p2 = Linear(reg, bn + ".p2", channels, channels, rng);
    blk.ff1 = Linear(reg, bn + ".ff1", channels, channels * 4, rng);
    blk.ff2 = Linear(reg, bn + ".ff2", channels * 4, channels, rng);
  }
}

LayerNorm::LayerNorm(Registry& reg, const std::string& name, int64_t channels) {
  gamma = reg.add_param(name + ".gamma", Tensor::full({channels}, 1.0f));
  beta = reg.add_param(name + ".beta", Tensor::zeros({channels}));
}

Var SpatialTransformer3d::operator()(Var x, Var cond) const {
  const Shape& s = x->shape();
  const int64_t N = s[0], C = s[1];
  const int64_t S = s[2] * s[3] * s[4];
  Var h = norm_in(x);
  Var tokens = ops::reshape(ops::permute(ops::reshape(h, {N, C, S}), {0, 2, 1}), {N, S, C});
  tokens = ops::reshape(proj_in(ops::reshape(tokens, {N * S, C})), {N, S, C});
  for (const auto& blk : blocks) {
    Var t1 = ops::reshape(blk.n1(ops::reshape(tokens, {N * S, C})), {N, S, C});
    tokens = ops::add(tokens, attention(t1, t1, blk.q1, blk.k1, blk.v1, blk.p1, heads));
    if (cond) {
      Var t2 = ops::reshape(blk.n2(ops::reshape(tokens, {N * S, C})), {N, S, C});
      tokens = ops::add(tokens, attention(t2, cond, blk.q2, blk.k2, blk.v2, blk.p2, heads));
    }
    Var t3 = blk.n3(ops::reshape(tokens, {N * S, C}));
    Var ff = blk.ff2(ops::gelu(blk.ff1(t3)));
    tokens = ops::add(tokens, ops::reshape(ff, {N, S, C}));
  }
  tokens = ops::reshape(proj_out(ops::reshape(tokens, {N * S, C})), {N, S, C});
  Var vol = ops::reshape(ops::permute(tokens, {0, 2, 1}), s);
  return ops::add(x, vol);
}

Adam::Adam(std::vector<Var> params_, float beta1_, float beta2_, float eps_) {
  params = std::move(params_);
  beta1 = beta1_;
  beta2 = beta2_;
  eps = eps_;
  for (const auto& p : params) {
    m.push_back(Tensor::zeros(p->shape()));
    v.push_back(Tensor::zeros(p->shape()));
  }
}

void Adam::zero_grad() {
  for (auto& p : params)
    if (p->grad.defined()) p->grad.zero();
}

void Adam::step(float lr) {
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    if (!p->grad.defined()) continue;
    const int64_t n = p->numel();
    float* w = p->value.data();
    const float* g = p->grad.data();
    float* mi = m[pi].data();
    float* vi = v[pi].data();
    for (int64_t i = 0; i < n; ++i) {
      mi[i] = beta1 * mi[i] + (1.0f - beta1) * g[i];
      vi[i] = beta2 * vi[i] + (1.0f - beta2) * g[i] * g[i];
      const double mhat = mi[i] / bc1;
      const double vhat = vi[i] / bc2;
      w[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

}  // namespace nn
}  // namespace volgen
