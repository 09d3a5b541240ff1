#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cdavsr/param_set.hpp"

namespace cdavsr {

struct GradCheckOptions {
  double step = 1e-6;
  /// Elements probed per tensor; 0 probes every element.
  std::size_t samples_per_tensor = 0;
  /// Denominator floor for the relative error, so vanishing gradients are
  /// judged on an absolute scale.
  double scale_floor = 1e-5;
  std::uint64_t seed = 7;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t probed = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  bool finite = true;
  std::string worst;       // parameter holding the largest error
  std::string diagnostic;  // set when something non-finite shows up
  std::vector<GradCheckEntry> entries;
};

/// Builds the scalar loss from bound values. Must be a pure function of them.
using LossGraph = std::function<Var<double>(const BoundParams<double>&)>;

/// Compares reverse-mode gradients against central differences for every
/// trainable entry of `values`. Run in 64-bit.
GradCheckReport grad_check(const ParamSet<double>& values, const LossGraph& graph,
                           double tolerance, const GradCheckOptions& opts = {});

}  // namespace cdavsr
