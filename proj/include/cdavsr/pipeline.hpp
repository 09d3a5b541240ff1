#pragma once

#include <optional>
#include <span>
#include <vector>

#include "cdavsr/ftar.hpp"
#include "cdavsr/mvgda.hpp"
#include "cdavsr/rmgf.hpp"

namespace cdavsr {

/// Every parameter of the model described by `cfg`, initialised from `seed`.
template <typename T>
ParamSet<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Recovers the architecture from parameter names and shapes. Variants with
/// the same layout (full/onlydcn, onlymv/onlygl) are told apart by `variant`,
/// which must agree with the layout; full with equal trunk depths becomes
/// uniform_depth.
ModelConfig config_from_params(const ParamSet<float>& params, Variant variant,
                               double offset_limit = 10.0);

/// conv(3->C) followed by `extract_blocks` residual blocks.
template <typename T>
Var<T> extract_features(const Var<T>& lr, const BoundParams<T>& p, const ModelConfig& cfg);

template <typename T>
struct FeatureState {
  Var<T> low;   // h_L
  Var<T> high;  // h_H
};

/// One time step for a batch of N aligned streams that share a frame type.
template <typename T>
struct StepInputs {
  Var<T> lr;                           // (N, 3, H, W)
  codec::FrameType type = codec::FrameType::I;
  Var<T> dense_mv;                     // (N, 2, H, W); P only
  Var<T> residual;                     // (N, 1, H, W); P only
};

struct StageMacs {
  std::uint64_t extract = 0;
  std::uint64_t align = 0;
  std::uint64_t fuse = 0;
  std::uint64_t reconstruct = 0;
  std::uint64_t total() const { return extract + align + fuse + reconstruct; }
};

template <typename T>
struct StepOutputs {
  Var<T> sr;  // unclamped
  FeatureState<T> state;
  bool intra_path = true;
  StageMacs macs;
  Var<T> gate;       // P only
  Var<T> aligned_l;  // P only
};

/// P-frames without a state are a contract violation.
template <typename T>
StepOutputs<T> forward_step(const BoundParams<T>& p, const ModelConfig& cfg,
                            const std::optional<FeatureState<T>>& state,
                            const StepInputs<T>& in);

/// Dense motion input for a P step: codec vectors, or Lucas-Kanade flow
/// between the decoded frames for the onlygl variant.
template <typename T>
Tensor<T> motion_input(const ModelConfig& cfg, const codec::PriorRecord& prior, const Frame& cur,
                       const Frame& prev);

template <typename T>
Tensor<T> residual_input(const codec::ResidualMap& r);

/// Stacks (1, C, H, W) tensors along the batch axis.
template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> parts);

/// Causal single-stream inference in 32-bit.
class StreamSession {
 public:
  StreamSession(const ParamSet<float>& params, const ModelConfig& cfg);

  /// The first frame always takes the I path. Returns the SR frame clamped to [0, 1].
  Frame step(const Frame& lr, const codec::PriorRecord& prior);

  int frame_index() const noexcept { return frame_index_; }
  bool has_state() const noexcept { return state_.has_value(); }
  const StepOutputs<float>& last() const noexcept { return last_; }
  const ModelConfig& config() const noexcept { return cfg_; }

 private:
  BoundParams<float> params_;
  ModelConfig cfg_;
  std::optional<FeatureState<float>> state_;
  std::optional<Frame> prev_lr_;
  StepOutputs<float> last_;
  int frame_index_ = 0;
};

std::vector<Frame> run_stream(std::span<const Frame> lr_frames,
                              std::span<const codec::PriorRecord> priors,
                              const ParamSet<float>& params, const ModelConfig& cfg);

}  // namespace cdavsr
