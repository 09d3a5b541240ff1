#pragma once

#include "cdavsr/layers.hpp"
#include "cdavsr/model_config.hpp"
#include "cdavsr/toy_codec.hpp"

namespace cdavsr::ftar {

/// Name prefix of residual block `i` in a trunk, e.g. "ftar.trunk_i.rb03".
std::string block_name(const std::string& trunk, int i);

template <typename T>
void add_params(ParamSet<T>& ps, const ModelConfig& cfg, Rng& rng);

/// `blocks` residual blocks in sequence, read from `<trunk>.rbNN.*`.
template <typename T>
Var<T> trunk(const Var<T>& features, const std::string& trunk_name, int blocks,
             const BoundParams<T>& p);

/// Shared upsampler plus the global bilinear skip from the LR frame.
template <typename T>
Var<T> upsample_head(const Var<T>& trunk_out, const Var<T>& lr, const BoundParams<T>& p,
                     const ModelConfig& cfg);

template <typename T>
struct Reconstruction {
  Var<T> sr;
  Var<T> h_high;  // trunk output, the next frame's h_H
};

/// I-frames run the deep trunk on h_L; P-frames run the shallow trunk on h_f.
template <typename T>
Reconstruction<T> reconstruct(codec::FrameType type, const Var<T>& h_low, const Var<T>& h_fused,
                              const Var<T>& lr, const BoundParams<T>& p, const ModelConfig& cfg);

}  // namespace cdavsr::ftar
