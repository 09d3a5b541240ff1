#pragma once

#include <span>
#include <vector>

#include "cdavsr/autograd.hpp"

namespace cdavsr::ops {

enum class Activation { sigmoid, tanh, relu, leaky_relu };

inline constexpr double kLeakySlope = 0.1;

/// Cross-correlation with zero padding. `bias` may be undefined; otherwise it
/// holds one value per output channel (shape 1 x outC x 1 x 1).
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, int stride = 1,
              int padding = 1);

/// Samples `input` at absolute positions coords(n,0,y,x)=x, coords(n,1,y,x)=y.
/// Positions are clamped to the valid rectangle (border replication).
template <typename T>
Var<T> bilinear_sample(const Var<T>& input, const Var<T>& coords);

/// (N, C*r*r, H, W) -> (N, C, H*r, W*r).
template <typename T>
Var<T> pixel_shuffle(const Var<T>& input, int r);

template <typename T>
Var<T> activate(const Var<T>& input, Activation f);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& a, T s);

/// x (N,C,H,W) times a single-channel spatial map (N,1,H,W).
template <typename T>
Var<T> mul_spatial(const Var<T>& x, const Var<T>& gate);

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts);

template <typename T>
Var<T> concat_channels(std::initializer_list<Var<T>> parts) {
  std::vector<Var<T>> v(parts);
  return concat_channels<T>(std::span<const Var<T>>(v));
}

/// Mean of all elements, as a 1x1x1x1 tensor.
template <typename T>
Var<T> mean(const Var<T>& x);

/// mean(sqrt((a-b)^2 + eps^2)) over every element.
template <typename T>
Var<T> charbonnier(const Var<T>& a, const Var<T>& b, T eps);

/// Absolute pixel grid: coords(n,0,y,x)=x, coords(n,1,y,x)=y.
template <typename T>
Tensor<T> pixel_grid(int n, int h, int w);

/// Half-pixel-centred bilinear upscaling by an integer factor.
template <typename T>
Var<T> upsample_bilinear(const Var<T>& x, int factor);

}  // namespace cdavsr::ops
