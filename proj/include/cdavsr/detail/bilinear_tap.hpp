#pragma once

#include <algorithm>
#include <cmath>

namespace cdavsr::detail {

// Bilinear tap at a clamped position. `inside_*` is false when the position was
// clamped on that axis, in which case its derivative is zero.
struct Tap {
  int x0, x1, y0, y1;
  double fx, fy;
  bool inside_x, inside_y;
};

template <typename T>
Tap make_tap(T px, T py, int H, int W) {
  Tap t{};
  t.inside_x = px >= T(0) && px <= T(W - 1);
  t.inside_y = py >= T(0) && py <= T(H - 1);
  const T cx = std::clamp(px, T(0), T(W - 1));
  const T cy = std::clamp(py, T(0), T(H - 1));
  const T fx0 = std::floor(cx);
  const T fy0 = std::floor(cy);
  t.x0 = static_cast<int>(fx0);
  t.y0 = static_cast<int>(fy0);
  t.x1 = std::min(t.x0 + 1, W - 1);
  t.y1 = std::min(t.y0 + 1, H - 1);
  t.fx = static_cast<double>(cx - fx0);
  t.fy = static_cast<double>(cy - fy0);
  return t;
}

}  // namespace cdavsr::detail
