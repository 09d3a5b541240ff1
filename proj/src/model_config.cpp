#include "cdavsr/model_config.hpp"

#include "cdavsr/tensor.hpp"

namespace cdavsr {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::onlymv: return "onlymv";
    case Variant::onlydcn: return "onlydcn";
    case Variant::onlygl: return "onlygl";
    case Variant::nogate: return "nogate";
    case Variant::uniform_depth: return "uniform_depth";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::full, Variant::onlymv, Variant::onlydcn, Variant::onlygl,
                    Variant::nogate, Variant::uniform_depth})
    if (to_string(v) == s) return v;
  throw ContractViolation("unknown variant '" + s + "'");
}

std::string to_string(HeadKind h) { return h == HeadKind::single_stage ? "single" : "two_stage"; }

HeadKind parse_head(const std::string& s) {
  if (s == "single") return HeadKind::single_stage;
  if (s == "two_stage") return HeadKind::two_stage;
  throw ContractViolation("unknown head kind '" + s + "' (expected single or two_stage)");
}

ModelConfig ModelConfig::reference() { return ModelConfig{}; }

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.channels = 32;
  c.m_blocks = 6;
  c.n_blocks = 3;
  return c;
}

void ModelConfig::validate() const {
  require(channels >= 1 && extract_blocks >= 0 && m_blocks >= 0 && n_blocks >= 0,
          "model config: channel and block counts must be non-negative");
  require(scale == 2 || scale == 4, "model config: scale must be 2 or 4, got " +
                                        std::to_string(scale));
  require(groups >= 1 && channels % groups == 0,
          "model config: channels " + std::to_string(channels) + " not divisible by groups " +
              std::to_string(groups));
  require(offset_limit > 0.0 && fres_width >= 1, "model config: bad offset limit or gate width");
  require(n_blocks < m_blocks || variant == Variant::uniform_depth,
          "model config: P trunk must be shallower than I trunk (n=" + std::to_string(n_blocks) +
              ", m=" + std::to_string(m_blocks) + ") outside the uniform-depth variant");
}

}  // namespace cdavsr
