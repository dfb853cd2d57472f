// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <doctest.h>

#include <functional>
#include <vector>

#include "volgen/nn.hpp"
#include "volgen/ops.hpp"
#include "volgen/rng.hpp"

namespace volgen {
namespace testing {

using LossFn = std::function<Var(const std::vector<Var>&)>;

// Central finite differences against the tape gradient, on a subset of
// entries per input. float32 all the way through, so tolerances are loose;
// formula errors are O(1) and still show up clearly.
inline void check_gradients(const std::vector<Shape>& shapes, const LossFn& f, uint64_t seed,
                            float h = 1e-2f, float tol = 4e-2f, double init_scale = 0.5) {
  RandomStream rng(seed);
  std::vector<Var> params;
  for (const auto& s : shapes) params.push_back(param(nn::normal_init(s, init_scale, rng)));

  Var loss = f(params);
  REQUIRE(loss->numel() == 1);
  backward(loss);

  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    REQUIRE(p->grad.defined());
    const int64_t n = p->numel();
    const int64_t stride = std::max<int64_t>(1, n / 24);
    for (int64_t i = 0; i < n; i += stride) {
      const float orig = p->value[i];
      p->value[i] = orig + h;
      const float lp = f(params)->value[0];
      p->value[i] = orig - h;
      const float lm = f(params)->value[0];
      p->value[i] = orig;
      const double fd = (static_cast<double>(lp) - lm) / (2.0 * h);
      const double an = p->grad[i];
      const double err = std::abs(fd - an) / std::max(1.0, std::abs(fd) + std::abs(an));
      INFO("param ", pi, " entry ", i, " fd=", fd, " an=", an);
      CHECK(err < tol);
    }
  }
}

}  // namespace testing
}  // namespace volgen
