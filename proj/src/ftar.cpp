#include "cdavsr/ftar.hpp"

#include <cstdio>

namespace cdavsr::ftar {

std::string block_name(const std::string& trunk, int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, ".rb%02d", i);
  return trunk + buf;
}

template <typename T>
void add_params(ParamSet<T>& ps, const ModelConfig& cfg, Rng& rng) {
  const int C = cfg.channels;
  for (int i = 0; i < cfg.m_blocks; ++i)
    add_residual_block(ps, block_name("ftar.trunk_i", i), C, rng);
  for (int i = 0; i < cfg.n_blocks; ++i)
    add_residual_block(ps, block_name("ftar.trunk_p", i), C, rng);
  // The last conv of either head starts at zero: a fresh model outputs the bilinear upsample.
  if (cfg.head == HeadKind::single_stage) {
    add_conv(ps, "ftar.head.conv", C, 3 * cfg.scale * cfg.scale, 3, Init::zero, rng);
    return;
  }
  add_conv(ps, "ftar.head.up1", C, 4 * C, 3, Init::kaiming, rng);
  if (cfg.scale == 4) add_conv(ps, "ftar.head.up2", C, 4 * C, 3, Init::kaiming, rng);
  add_conv(ps, "ftar.head.out", C, 3, 3, Init::zero, rng);
}

template <typename T>
Var<T> trunk(const Var<T>& features, const std::string& trunk_name, int blocks,
             const BoundParams<T>& p) {
  Var<T> h = features;
  for (int i = 0; i < blocks; ++i) h = residual_block(p, block_name(trunk_name, i), h);
  return h;
}

template <typename T>
Var<T> upsample_head(const Var<T>& trunk_out, const Var<T>& lr, const BoundParams<T>& p,
                     const ModelConfig& cfg) {
  const Shape ts = trunk_out.shape(), ls = lr.shape();
  require(ls.n == ts.n && ls.c == 3 && ls.h == ts.h && ls.w == ts.w,
          "upsample_head: LR frame " + ls.str() + " does not match features " + ts.str());
  Var<T> y;
  if (p.contains("ftar.head.conv.weight")) {
    y = ops::pixel_shuffle(apply_conv(p, "ftar.head.conv", trunk_out), cfg.scale);
  } else {
    using ops::Activation;
    y = ops::activate(ops::pixel_shuffle(apply_conv(p, "ftar.head.up1", trunk_out), 2),
                      Activation::leaky_relu);
    if (p.contains("ftar.head.up2.weight"))
      y = ops::activate(ops::pixel_shuffle(apply_conv(p, "ftar.head.up2", y), 2),
                        Activation::leaky_relu);
    y = apply_conv(p, "ftar.head.out", y);
  }
  return ops::add(y, ops::upsample_bilinear(lr, cfg.scale));
}

template <typename T>
Reconstruction<T> reconstruct(codec::FrameType type, const Var<T>& h_low, const Var<T>& h_fused,
                              const Var<T>& lr, const BoundParams<T>& p, const ModelConfig& cfg) {
  Var<T> h;
  if (type == codec::FrameType::I) {
    require(h_low.defined(), "reconstruct: I-frame needs h_L");
    h = trunk(h_low, "ftar.trunk_i", cfg.m_blocks, p);
  } else {
    require(h_fused.defined(), "reconstruct: P-frame needs the fused feature h_f");
    h = trunk(h_fused, "ftar.trunk_p", cfg.n_blocks, p);
  }
  return {upsample_head(h, lr, p, cfg), h};
}

#define CDAVSR_INSTANTIATE_FTAR(T)                                                           \
  template void add_params(ParamSet<T>&, const ModelConfig&, Rng&);                          \
  template Var<T> trunk(const Var<T>&, const std::string&, int, const BoundParams<T>&);      \
  template Var<T> upsample_head(const Var<T>&, const Var<T>&, const BoundParams<T>&,         \
                                const ModelConfig&);                                         \
  template Reconstruction<T> reconstruct(codec::FrameType, const Var<T>&, const Var<T>&,     \
                                         const Var<T>&, const BoundParams<T>&,               \
                                         const ModelConfig&);

CDAVSR_INSTANTIATE_FTAR(float)
CDAVSR_INSTANTIATE_FTAR(double)

}  // namespace cdavsr::ftar
