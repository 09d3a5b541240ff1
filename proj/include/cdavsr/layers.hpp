#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "cdavsr/ops.hpp"
#include "cdavsr/param_set.hpp"

namespace cdavsr {

using Rng = std::mt19937_64;

enum class Init {
  kaiming,  // N(0, 2/fan_in) weights, zero bias
  zero
};

/// Registers `<name>.weight` (out x in x k x k) and `<name>.bias` (1 x out x 1 x 1).
template <typename T>
void add_conv(ParamSet<T>& ps, const std::string& name, int in, int out, int k, Init init,
              Rng& rng);

/// 'Same'-padded stride-1 convolution using `<name>.weight/.bias`.
template <typename T>
Var<T> apply_conv(const BoundParams<T>& p, const std::string& name, const Var<T>& x);

/// conv3x3 -> leaky-relu(0.1) -> conv3x3, plus the identity skip. The second
/// conv is zero-initialised so a fresh block is the identity.
template <typename T>
void add_residual_block(ParamSet<T>& ps, const std::string& name, int channels, Rng& rng);

template <typename T>
Var<T> residual_block(const BoundParams<T>& p, const std::string& name, const Var<T>& x);

inline std::uint64_t conv_macs(int in, int out, int k, int h, int w) {
  return static_cast<std::uint64_t>(in) * out * k * k * h * w;
}

inline std::size_t conv_params(int in, int out, int k) {
  return static_cast<std::size_t>(in) * out * k * k + out;
}

}  // namespace cdavsr
