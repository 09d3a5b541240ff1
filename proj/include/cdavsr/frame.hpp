#pragma once

#include <cstdint>
#include <vector>

#include "cdavsr/tensor.hpp"

namespace cdavsr {

/// Planar image, channel-major (c, y, x), values nominally in [0, 1].
struct Frame {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> data;

  Frame() = default;
  Frame(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  bool same_dims(const Frame& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  bool operator==(const Frame&) const = default;

  /// (1, C, H, W) tensor view copy.
  template <typename T>
  Tensor<T> to_tensor() const;
  template <typename T>
  static Frame from_tensor(const Tensor<T>& t, int batch_index = 0);
};

/// Round to the nearest 1/255 step after clamping to [0, 1].
std::uint8_t to_byte(float v);
inline float from_byte(std::uint8_t b) { return static_cast<float>(b) / 255.0f; }

/// Copy with every sample clamped to [0, 1].
Frame clamp01(const Frame& f);
/// Snap every sample to the 8-bit grid (k / 255).
Frame quantize8(const Frame& f);

}  // namespace cdavsr
