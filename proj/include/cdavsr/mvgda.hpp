#pragma once

#include "cdavsr/layers.hpp"
#include "cdavsr/model_config.hpp"

namespace cdavsr::mvgda {

inline constexpr int kTaps = 9;  // 3x3 kernel

/// out(p) = features(p + mv(p)), bilinear with border clamp. The vector points
/// from the current pixel into the reference frame.
template <typename T>
Var<T> warp(const Var<T>& features, const Var<T>& dense_mv);

/// Learned part of the deformable sampling. Offset channel 2*(g*9+k) holds dx
/// of tap k in group g and the next channel holds dy; mask channel g*9+k.
template <typename T>
struct AlignmentFields {
  Var<T> delta;  // (N, 18G, H, W), |value| <= offset limit
  Var<T> mask;   // (N, 9G, H, W), in (0, 1)
};

template <typename T>
void add_params(ParamSet<T>& ps, const ModelConfig& cfg, Rng& rng);

template <typename T>
AlignmentFields<T> predict_offsets_mask(const Var<T>& h_cur, const Var<T>& warped_l,
                                        const Var<T>& warped_h, const BoundParams<T>& p,
                                        const ModelConfig& cfg);

/// 3x3 modulated deformable convolution, stride 1. Tap k of input channel c
/// samples at p + p_k + base(p) + delta_{g(c),k}(p) and is scaled by
/// mask_{g(c),k}(p), with g(c) = floor(c * G / C).
template <typename T>
Var<T> modulated_deform_conv(const Var<T>& features, const Var<T>& base_offset,
                             const Var<T>& delta, const Var<T>& mask, const Var<T>& weight,
                             const Var<T>& bias, int groups);

template <typename T>
struct AlignedPair {
  Var<T> l;
  Var<T> h;
};

/// Warps the previous (h_L, h_H) by the dense field, predicts one shared set of
/// offsets and masks, and applies per-stream deformable convs to the unwarped
/// states. `onlymv`/`onlygl` stop after the warp; `onlydcn` drops the motion
/// initialisation entirely.
template <typename T>
AlignedPair<T> align_dual(const Var<T>& prev_l, const Var<T>& prev_h, const Var<T>& h_cur,
                          const Var<T>& dense_mv, const BoundParams<T>& p,
                          const ModelConfig& cfg);

}  // namespace cdavsr::mvgda
