#pragma once

#include "cdavsr/layers.hpp"
#include "cdavsr/model_config.hpp"

namespace cdavsr::rmgf {

/// `rmgf.fres.*` (skipped by the nogate variant) and `rmgf.fuse.*`.
template <typename T>
void add_params(ParamSet<T>& ps, const ModelConfig& cfg, Rng& rng);

/// sigmoid(F_res(residual)) with F_res = conv(1->16), leaky, conv(16->1).
/// `residual` is (N, 1, H, W).
template <typename T>
Var<T> compute_gate(const Var<T>& residual, const BoundParams<T>& p);

/// conv(3C->C) over [gate*aligned_l, gate*aligned_h, h_cur].
template <typename T>
Var<T> fuse(const Var<T>& gate, const Var<T>& aligned_l, const Var<T>& aligned_h,
            const Var<T>& h_cur, const BoundParams<T>& p);

/// A gate of ones, as used by the nogate variant.
template <typename T>
Var<T> unit_gate(const Shape& features);

}  // namespace cdavsr::rmgf
