#include "cdavsr/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace cdavsr {

namespace {

double eval_loss(const ParamSet<double>& values, const LossGraph& graph) {
  return graph(BoundParams<double>::constants(values)).value()[0];
}

}  // namespace

GradCheckReport grad_check(const ParamSet<double>& values, const LossGraph& graph,
                           double tolerance, const GradCheckOptions& opts) {
  GradCheckReport report;
  Tape<double> tape;
  auto bound = BoundParams<double>::on_tape(tape, values);
  Var<double> loss = graph(bound);
  require(loss.defined() && loss.value().size() == 1, "grad_check: graph must return a scalar");
  if (!std::isfinite(loss.value()[0])) {
    report.finite = false;
    report.diagnostic = "loss is not finite";
    return report;
  }
  if (!loss.requires_grad()) {
    // Nothing trainable reaches the loss; every analytic gradient is zero.
    report.pass = true;
  } else {
    tape.backward(loss);
  }
  const auto grads = bound.grads();

  std::mt19937_64 rng(opts.seed);
  ParamSet<double> probe = values;
  for (const auto& [name, entry] : values) {
    if (!entry.trainable) continue;
    const Tensor<double>& g = grads.at(name);
    std::vector<std::size_t> idx(entry.value.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (opts.samples_per_tensor > 0 && idx.size() > opts.samples_per_tensor) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opts.samples_per_tensor);
      std::sort(idx.begin(), idx.end());
    }
    GradCheckEntry e{name, 0.0, idx.size()};
    Tensor<double>& slot = probe.mutable_at(name);
    for (std::size_t i : idx) {
      const double orig = slot[i];
      slot[i] = orig + opts.step;
      const double up = eval_loss(probe, graph);
      slot[i] = orig - opts.step;
      const double down = eval_loss(probe, graph);
      slot[i] = orig;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double analytic = g[i];
      if (!std::isfinite(numeric) || !std::isfinite(analytic)) {
        report.finite = false;
        report.diagnostic = "non-finite gradient at " + name + "[" + std::to_string(i) + "]";
        report.pass = false;
        report.entries.push_back(e);
        return report;
      }
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), opts.scale_floor});
      e.max_rel_err = std::max(e.max_rel_err, std::abs(analytic - numeric) / denom);
    }
    if (e.max_rel_err >= report.max_rel_err) {
      report.max_rel_err = e.max_rel_err;
      report.worst = name;
    }
    report.entries.push_back(e);
  }
  report.pass = report.max_rel_err <= tolerance;
  return report;
}

}  // namespace cdavsr
