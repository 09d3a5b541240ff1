#include "cdavsr/layers.hpp"

#include <cmath>

namespace cdavsr {

template <typename T>
void add_conv(ParamSet<T>& ps, const std::string& name, int in, int out, int k, Init init,
              Rng& rng) {
  Tensor<T> w(Shape{out, in, k, k});
  if (init == Init::kaiming) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (in * k * k)));
    for (auto& v : w.data()) v = static_cast<T>(dist(rng));
  }
  ps.add(name + ".weight", std::move(w));
  ps.add(name + ".bias", Tensor<T>(Shape{1, out, 1, 1}));
}

template <typename T>
Var<T> apply_conv(const BoundParams<T>& p, const std::string& name, const Var<T>& x) {
  const Var<T>& w = p.at(name + ".weight");
  return ops::conv2d(x, w, p.at(name + ".bias"), 1, w.shape().h / 2);
}

template <typename T>
void add_residual_block(ParamSet<T>& ps, const std::string& name, int channels, Rng& rng) {
  add_conv(ps, name + ".conv1", channels, channels, 3, Init::kaiming, rng);
  add_conv(ps, name + ".conv2", channels, channels, 3, Init::zero, rng);
}

template <typename T>
Var<T> residual_block(const BoundParams<T>& p, const std::string& name, const Var<T>& x) {
  Var<T> h = ops::activate(apply_conv(p, name + ".conv1", x), ops::Activation::leaky_relu);
  return ops::add(x, apply_conv(p, name + ".conv2", h));
}

#define CDAVSR_INSTANTIATE_LAYERS(T)                                                        \
  template void add_conv(ParamSet<T>&, const std::string&, int, int, int, Init, Rng&);      \
  template Var<T> apply_conv(const BoundParams<T>&, const std::string&, const Var<T>&);     \
  template void add_residual_block(ParamSet<T>&, const std::string&, int, Rng&);            \
  template Var<T> residual_block(const BoundParams<T>&, const std::string&, const Var<T>&);

CDAVSR_INSTANTIATE_LAYERS(float)
CDAVSR_INSTANTIATE_LAYERS(double)

}  // namespace cdavsr
