// Small fixtures shared by the model-level unit suites.
#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "cdavsr/pipeline.hpp"
#include "../oracles.hpp"

namespace fixtures {

using namespace cdavsr;

inline ModelConfig tiny_config(Variant v = Variant::full) {
  ModelConfig c;
  c.channels = 4;
  c.extract_blocks = 1;
  c.m_blocks = 2;
  c.n_blocks = 1;
  c.scale = 2;
  c.groups = 2;
  c.fres_width = 3;
  c.variant = v;
  return c;
}

/// Edge-replicating pad by `p` pixels on every side.
template <typename T>
Tensor<T> replicate_pad(const Tensor<T>& x, int p) {
  const Shape s = x.shape();
  Tensor<T> o(Shape{s.n, s.c, s.h + 2 * p, s.w + 2 * p});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h + 2 * p; ++y)
        for (int xx = 0; xx < s.w + 2 * p; ++xx)
          o.at(n, c, y, xx) = x.at(n, c, std::clamp(y - p, 0, s.h - 1), std::clamp(xx - p, 0, s.w - 1));
  return o;
}

/// out(y, x) = x(clamp(y + dy), clamp(x + dx)).
template <typename T>
Tensor<T> translate(const Tensor<T>& x, int dx, int dy) {
  const Shape s = x.shape();
  Tensor<T> o(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int xx = 0; xx < s.w; ++xx)
          o.at(n, c, y, xx) =
              x.at(n, c, std::clamp(y + dy, 0, s.h - 1), std::clamp(xx + dx, 0, s.w - 1));
  return o;
}

/// Overwrites every parameter with uniform noise of the given amplitude.
template <typename T>
void randomize(ParamSet<T>& ps, std::mt19937_64& rng, double amp) {
  std::uniform_real_distribution<double> u(-amp, amp);
  for (auto& [name, e] : ps)
    for (auto& v : e.value.data()) v = static_cast<T>(u(rng));
}

template <typename T>
void zero_all(ParamSet<T>& ps) {
  for (auto& [name, e] : ps) std::fill(e.value.data().begin(), e.value.data().end(), T(0));
}

template <typename T>
Var<T> cst(Tensor<T> t) {
  return Var<T>(std::move(t));
}

}  // namespace fixtures
