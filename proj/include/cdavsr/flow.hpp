#pragma once

#include <cstdint>

#include "cdavsr/frame.hpp"

namespace cdavsr {

struct FlowOptions {
  int levels = 3;
  int iterations = 4;  // per level
  int window = 2;      // half-width of the box window
  double regularizer = 1e-4;
  double max_step = 16.0;  // flow components are clamped to +/- this
};

/// Coarse-to-fine Lucas-Kanade on luma. Returns (1, 2, H, W) (dx, dy) such that
/// ref(p + flow(p)) approximates cur(p), the same convention as codec vectors.
Tensor<float> lucas_kanade_flow(const Frame& cur, const Frame& ref, const FlowOptions& opts = {});

/// Bilinear-sampling MACs of one lucas_kanade_flow call (8 per sampled value).
std::uint64_t lucas_kanade_macs(int width, int height, const FlowOptions& opts = {});

}  // namespace cdavsr
