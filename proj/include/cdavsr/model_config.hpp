#pragma once

#include <string>

namespace cdavsr {

/// Model variants used by the ablation study. `uniform_depth` is `full` with
/// equal trunk depths allowed.
enum class Variant { full, onlymv, onlydcn, onlygl, nogate, uniform_depth };

/// Upsampling head. `single_stage`: conv(C -> 3 s^2) + pixel_shuffle(s).
/// `two_stage`: two conv(C -> 4C) + pixel_shuffle(2) + leaky stages, then conv(C -> 3).
enum class HeadKind { single_stage, two_stage };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);
std::string to_string(HeadKind h);
HeadKind parse_head(const std::string& s);

struct ModelConfig {
  int channels = 64;
  int extract_blocks = 3;
  int m_blocks = 24;  // I-frame trunk depth
  int n_blocks = 12;  // P-frame trunk depth
  int scale = 4;
  int groups = 8;
  double offset_limit = 10.0;
  int fres_width = 16;
  HeadKind head = HeadKind::single_stage;
  Variant variant = Variant::full;

  /// 64 channels, 3/24/12 blocks, x4, 8 deformable groups.
  static ModelConfig reference();
  /// 32 channels, 6/3 trunk blocks.
  static ModelConfig desk();

  bool uses_dcn() const { return variant != Variant::onlymv && variant != Variant::onlygl; }
  bool uses_gate() const { return variant != Variant::nogate; }
  void validate() const;
};

}  // namespace cdavsr
