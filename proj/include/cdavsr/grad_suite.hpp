#pragma once

#include <string>
#include <vector>

#include "cdavsr/grad_check.hpp"
#include "cdavsr/model_config.hpp"

namespace cdavsr {

struct GradSuiteEntry {
  std::string name;
  GradCheckReport report;
};

struct GradSuiteOptions {
  double tolerance = 1e-4;
  std::uint64_t seed = 1;
  /// Probes per tensor for the model-level checks (0 probes every element).
  std::size_t samples = 16;
  int frames = 3;
};

/// Four-channel, two-group model with one extract block, trunk depths 2/1
/// and x2 upsampling.
ModelConfig tiny_model_config(Variant v = Variant::full);

/// Central-difference checks in 64-bit for every differentiable operation,
/// each module, and an I,P,P... end-to-end clip on the tiny config.
std::vector<GradSuiteEntry> run_grad_suite(const GradSuiteOptions& opts = {});

}  // namespace cdavsr
