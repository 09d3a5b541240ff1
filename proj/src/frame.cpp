#include "cdavsr/frame.hpp"

#include <algorithm>
#include <cmath>

namespace cdavsr {

std::uint8_t to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

Frame clamp01(const Frame& f) {
  Frame out = f;
  for (auto& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

Frame quantize8(const Frame& f) {
  Frame out = f;
  for (auto& v : out.data) v = from_byte(to_byte(v));
  return out;
}

template <typename T>
Tensor<T> Frame::to_tensor() const {
  Tensor<T> t(Shape{1, channels, height, width});
  for (std::size_t i = 0; i < data.size(); ++i) t[i] = static_cast<T>(data[i]);
  return t;
}

template <typename T>
Frame Frame::from_tensor(const Tensor<T>& t, int batch_index) {
  const Shape s = t.shape();
  require(batch_index >= 0 && batch_index < s.n, "Frame::from_tensor: batch index out of range");
  Frame f(s.w, s.h, s.c);
  const T* src = t.plane(batch_index, 0);
  for (std::size_t i = 0; i < f.data.size(); ++i) f.data[i] = static_cast<float>(src[i]);
  return f;
}

template Tensor<float> Frame::to_tensor<float>() const;
template Tensor<double> Frame::to_tensor<double>() const;
template Frame Frame::from_tensor<float>(const Tensor<float>&, int);
template Frame Frame::from_tensor<double>(const Tensor<double>&, int);

}  // namespace cdavsr
