#include "cdavsr/pipeline.hpp"

#include "cdavsr/flow.hpp"
#include "cdavsr/mac_counter.hpp"

namespace cdavsr {

template <typename T>
ParamSet<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ParamSet<T> ps;
  add_conv(ps, "extract.conv_in", 3, cfg.channels, 3, Init::kaiming, rng);
  for (int i = 0; i < cfg.extract_blocks; ++i)
    add_residual_block(ps, ftar::block_name("extract", i), cfg.channels, rng);
  mvgda::add_params(ps, cfg, rng);
  rmgf::add_params(ps, cfg, rng);
  ftar::add_params(ps, cfg, rng);
  return ps;
}

namespace {

int count_blocks(const ParamSet<float>& ps, const std::string& trunk) {
  int n = 0;
  while (ps.contains(ftar::block_name(trunk, n) + ".conv1.weight")) ++n;
  return n;
}

}  // namespace

ModelConfig config_from_params(const ParamSet<float>& ps, Variant variant, double offset_limit) {
  auto shape = [&](const std::string& name) {
    require(ps.contains(name), "weights: missing parameter " + name);
    return ps.at(name).shape();
  };
  ModelConfig c;
  c.variant = variant;
  c.offset_limit = offset_limit;
  c.channels = shape("extract.conv_in.weight").n;
  c.extract_blocks = count_blocks(ps, "extract");
  c.m_blocks = count_blocks(ps, "ftar.trunk_i");
  c.n_blocks = count_blocks(ps, "ftar.trunk_p");
  if (ps.contains("ftar.head.conv.weight")) {
    c.head = HeadKind::single_stage;
    const int out = shape("ftar.head.conv.weight").n;
    c.scale = out == 12 ? 2 : out == 48 ? 4 : 0;
    require(c.scale != 0, "weights: head produces " + std::to_string(out) + " channels");
  } else {
    c.head = HeadKind::two_stage;
    shape("ftar.head.up1.weight");
    c.scale = ps.contains("ftar.head.up2.weight") ? 4 : 2;
  }
  const bool has_dcn = ps.contains("mvgda.dcn_L.weight");
  c.groups = has_dcn ? shape("mvgda.head_m.weight").n / mvgda::kTaps
                     : (c.channels % 8 == 0 ? 8 : 1);
  const bool has_gate = ps.contains("rmgf.fres.conv1.weight");
  if (has_gate) c.fres_width = shape("rmgf.fres.conv1.weight").n;
  if (c.variant == Variant::full && c.n_blocks >= c.m_blocks) c.variant = Variant::uniform_depth;
  require(c.uses_dcn() == has_dcn && c.uses_gate() == has_gate,
          "weights do not match the " + to_string(variant) + " variant");
  c.validate();
  return c;
}

template <typename T>
Var<T> extract_features(const Var<T>& lr, const BoundParams<T>& p, const ModelConfig& cfg) {
  require(lr.shape().c == 3, "extract_features: expected an RGB frame, got " + lr.shape().str());
  Var<T> h = apply_conv(p, "extract.conv_in", lr);
  for (int i = 0; i < cfg.extract_blocks; ++i)
    h = residual_block(p, ftar::block_name("extract", i), h);
  return h;
}

template <typename T>
StepOutputs<T> forward_step(const BoundParams<T>& p, const ModelConfig& cfg,
                            const std::optional<FeatureState<T>>& state,
                            const StepInputs<T>& in) {
  const Shape ls = in.lr.shape();
  StepOutputs<T> out;
  Var<T> h_low;
  {
    MacCounter mc;
    h_low = extract_features(in.lr, p, cfg);
    out.macs.extract = mc.total();
  }
  Var<T> h_fused;
  out.intra_path = in.type == codec::FrameType::I;
  if (!out.intra_path) {
    require(state.has_value(), "P-frame without a feature state (stream must start with I)");
    require(in.dense_mv.defined() && in.dense_mv.shape() == Shape{ls.n, 2, ls.h, ls.w},
            "P-frame motion field does not match frame " + ls.str());
    require(in.residual.defined() && in.residual.shape() == Shape{ls.n, 1, ls.h, ls.w},
            "P-frame residual map does not match frame " + ls.str());
    mvgda::AlignedPair<T> aligned;
    {
      MacCounter mc;
      aligned = mvgda::align_dual(state->low, state->high, h_low, in.dense_mv, p, cfg);
      out.macs.align = mc.total();
    }
    {
      MacCounter mc;
      out.gate = cfg.uses_gate() ? rmgf::compute_gate(in.residual, p)
                                 : rmgf::unit_gate<T>(h_low.shape());
      h_fused = rmgf::fuse(out.gate, aligned.l, aligned.h, h_low, p);
      out.macs.fuse = mc.total();
    }
    out.aligned_l = aligned.l;
  }
  {
    MacCounter mc;
    ftar::Reconstruction<T> r = ftar::reconstruct(in.type, h_low, h_fused, in.lr, p, cfg);
    out.macs.reconstruct = mc.total();
    out.sr = r.sr;
    out.state = {h_low, r.h_high};
  }
  return out;
}

template <typename T>
Tensor<T> motion_input(const ModelConfig& cfg, const codec::PriorRecord& prior, const Frame& cur,
                       const Frame& prev) {
  if (cfg.variant == Variant::onlygl) {
    const Tensor<float> f = lucas_kanade_flow(cur, prev);
    return f.template cast<T>();
  }
  require(prior.motion.has_value(), "P-frame prior carries no motion field");
  return codec::densify_motion<T>(*prior.motion, cur.height, cur.width);
}

template <typename T>
Tensor<T> residual_input(const codec::ResidualMap& r) {
  Tensor<T> t(Shape{1, 1, r.height, r.width});
  for (std::size_t i = 0; i < r.values.size(); ++i) t[i] = static_cast<T>(r.values[i]);
  return t;
}

template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> parts) {
  require(!parts.empty(), "stack_batch: nothing to stack");
  const Shape s = parts[0].shape();
  Tensor<T> out(Shape{static_cast<int>(parts.size()), s.c, s.h, s.w});
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Shape si = parts[i].shape();
    require(si.n == 1 && si.c == s.c && si.h == s.h && si.w == s.w,
            "stack_batch: " + si.str() + " does not match " + s.str());
    std::copy(parts[i].data().begin(), parts[i].data().end(),
              out.plane(static_cast<int>(i), 0));
  }
  return out;
}

StreamSession::StreamSession(const ParamSet<float>& params, const ModelConfig& cfg)
    : params_(BoundParams<float>::constants(params)), cfg_(cfg) {
  cfg_.validate();
}

Frame StreamSession::step(const Frame& lr, const codec::PriorRecord& prior) {
  require(lr.channels == 3, "stream frames must be RGB");
  if (prev_lr_) require(lr.same_dims(*prev_lr_), "frame dimensions changed mid-stream");
  const bool intra = !state_.has_value() || prior.frame_type == codec::FrameType::I;
  StepInputs<float> in;
  std::uint64_t motion_macs = 0;
  in.lr = Var<float>(lr.to_tensor<float>());
  in.type = intra ? codec::FrameType::I : codec::FrameType::P;
  if (!intra) {
    require(prior.residual.width == lr.width && prior.residual.height == lr.height,
            "residual map " + std::to_string(prior.residual.width) + "x" +
                std::to_string(prior.residual.height) + " does not match frame " +
                std::to_string(lr.width) + "x" + std::to_string(lr.height));
    MacCounter mc;
    in.dense_mv = Var<float>(motion_input<float>(cfg_, prior, lr, *prev_lr_));
    motion_macs = mc.total();
    in.residual = Var<float>(residual_input<float>(prior.residual));
  }
  last_ = forward_step(params_, cfg_, state_, in);
  last_.macs.align += motion_macs;
  state_ = last_.state;
  prev_lr_ = lr;
  ++frame_index_;
  return clamp01(Frame::from_tensor(last_.sr.value()));
}

std::vector<Frame> run_stream(std::span<const Frame> lr_frames,
                              std::span<const codec::PriorRecord> priors,
                              const ParamSet<float>& params, const ModelConfig& cfg) {
  require(lr_frames.size() == priors.size(),
          "run_stream: " + std::to_string(lr_frames.size()) + " frames but " +
              std::to_string(priors.size()) + " priors");
  require(priors.empty() || priors[0].frame_type == codec::FrameType::I,
          "run_stream: the first frame must be an I-frame");
  StreamSession s(params, cfg);
  std::vector<Frame> out;
  out.reserve(lr_frames.size());
  for (std::size_t t = 0; t < lr_frames.size(); ++t) out.push_back(s.step(lr_frames[t], priors[t]));
  return out;
}

#define CDAVSR_INSTANTIATE_PIPELINE(T)                                                       \
  template ParamSet<T> init_params<T>(const ModelConfig&, std::uint64_t);                    \
  template Var<T> extract_features(const Var<T>&, const BoundParams<T>&, const ModelConfig&); \
  template StepOutputs<T> forward_step(const BoundParams<T>&, const ModelConfig&,            \
                                       const std::optional<FeatureState<T>>&,                \
                                       const StepInputs<T>&);                                \
  template Tensor<T> motion_input<T>(const ModelConfig&, const codec::PriorRecord&,          \
                                     const Frame&, const Frame&);                            \
  template Tensor<T> residual_input<T>(const codec::ResidualMap&);                           \
  template Tensor<T> stack_batch(std::span<const Tensor<T>>);

CDAVSR_INSTANTIATE_PIPELINE(float)
CDAVSR_INSTANTIATE_PIPELINE(double)

}  // namespace cdavsr
