#include "cdavsr/rmgf.hpp"

namespace cdavsr::rmgf {

template <typename T>
void add_params(ParamSet<T>& ps, const ModelConfig& cfg, Rng& rng) {
  if (cfg.uses_gate()) {
    add_conv(ps, "rmgf.fres.conv1", 1, cfg.fres_width, 3, Init::kaiming, rng);
    add_conv(ps, "rmgf.fres.conv2", cfg.fres_width, 1, 3, Init::kaiming, rng);
    // Start the gate mostly open (sigmoid(2) ~ 0.88) so the aligned features
    // enter fusion at close to full strength until training learns to close it.
    ps.mutable_at("rmgf.fres.conv2.bias").data()[0] = T(2);
  }
  add_conv(ps, "rmgf.fuse", 3 * cfg.channels, cfg.channels, 3, Init::kaiming, rng);
}

template <typename T>
Var<T> compute_gate(const Var<T>& residual, const BoundParams<T>& p) {
  require(residual.shape().c == 1,
          "compute_gate: residual must be single-channel, got " + residual.shape().str());
  using ops::Activation;
  Var<T> h = ops::activate(apply_conv(p, "rmgf.fres.conv1", residual), Activation::leaky_relu);
  return ops::activate(apply_conv(p, "rmgf.fres.conv2", h), Activation::sigmoid);
}

template <typename T>
Var<T> fuse(const Var<T>& gate, const Var<T>& aligned_l, const Var<T>& aligned_h,
            const Var<T>& h_cur, const BoundParams<T>& p) {
  const Shape s = h_cur.shape();
  require(aligned_l.shape() == s && aligned_h.shape() == s,
          "fuse: aligned features " + aligned_l.shape().str() + "/" + aligned_h.shape().str() +
              " do not match " + s.str());
  require(gate.shape() == Shape{s.n, 1, s.h, s.w},
          "fuse: gate " + gate.shape().str() + " does not match features " + s.str());
  return apply_conv(p, "rmgf.fuse",
                    ops::concat_channels<T>({ops::mul_spatial(aligned_l, gate),
                                             ops::mul_spatial(aligned_h, gate), h_cur}));
}

template <typename T>
Var<T> unit_gate(const Shape& features) {
  return Var<T>(Tensor<T>(Shape{features.n, 1, features.h, features.w}, T(1)));
}

#define CDAVSR_INSTANTIATE_RMGF(T)                                                           \
  template void add_params(ParamSet<T>&, const ModelConfig&, Rng&);                          \
  template Var<T> compute_gate(const Var<T>&, const BoundParams<T>&);                        \
  template Var<T> fuse(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&,           \
                       const BoundParams<T>&);                                               \
  template Var<T> unit_gate<T>(const Shape&);

CDAVSR_INSTANTIATE_RMGF(float)
CDAVSR_INSTANTIATE_RMGF(double)

}  // namespace cdavsr::rmgf
