#include "cdavsr/grad_suite.hpp"

#include <functional>

#include "cdavsr/pipeline.hpp"

namespace cdavsr {

namespace {

using ops::Activation;
using B = BoundParams<double>;

Tensor<double> noise(Shape s, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(s);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

Var<double> sq_mean(const Var<double>& x) { return ops::mean(ops::mul(x, x)); }

void randomize(ParamSet<double>& ps, Rng& rng, double amp) {
  for (auto& [name, e] : ps) e.value = noise(e.value.shape(), rng, -amp, amp);
}

}  // namespace

ModelConfig tiny_model_config(Variant v) {
  ModelConfig c;
  c.channels = 4;
  c.extract_blocks = 1;
  c.m_blocks = 2;
  c.n_blocks = 1;
  c.scale = 2;
  c.groups = 2;
  c.fres_width = 3;
  c.variant = v;
  return c;
}

std::vector<GradSuiteEntry> run_grad_suite(const GradSuiteOptions& o) {
  std::vector<GradSuiteEntry> out;
  Rng rng(o.seed);
  GradCheckOptions full_probe;
  full_probe.seed = o.seed;
  GradCheckOptions sampled = full_probe;
  sampled.samples_per_tensor = o.samples;

  auto run = [&](const std::string& name, const ParamSet<double>& ps,
                 const std::function<Var<double>(const B&)>& f, const GradCheckOptions& g) {
    out.push_back({name, grad_check(ps, f, o.tolerance, g)});
  };

  // Primitive operations.
  ParamSet<double> prim;
  prim.add("a", noise(Shape{1, 4, 5, 5}, rng, -1, 1));
  prim.add("b", noise(Shape{1, 4, 5, 5}, rng, -1, 1));
  prim.add("g", noise(Shape{1, 1, 5, 5}, rng, -1, 1));
  prim.add("w", noise(Shape{3, 4, 3, 3}, rng, -1, 1));
  prim.add("bias", noise(Shape{1, 3, 1, 1}, rng, -1, 1));
  prim.add("coords", noise(Shape{1, 2, 5, 5}, rng, 0.1, 3.9));
  prim.add("mv", noise(Shape{1, 2, 5, 5}, rng, -1.9, 1.9));
  run("conv2d", prim, [](const B& p) {
    return sq_mean(ops::conv2d(p.at("a"), p.at("w"), p.at("bias"), 1, 1));
  }, full_probe);
  run("conv2d_stride2", prim, [](const B& p) {
    return sq_mean(ops::conv2d(p.at("a"), p.at("w"), p.at("bias"), 2, 1));
  }, full_probe);
  run("bilinear_sample", prim, [](const B& p) {
    return sq_mean(ops::bilinear_sample(p.at("a"), p.at("coords")));
  }, full_probe);
  run("warp", prim, [](const B& p) { return sq_mean(mvgda::warp(p.at("a"), p.at("mv"))); },
      full_probe);
  run("pixel_shuffle", prim, [](const B& p) {
    return sq_mean(ops::pixel_shuffle(ops::mul(p.at("a"), p.at("b")), 2));
  }, full_probe);
  run("upsample_bilinear", prim, [](const B& p) {
    return sq_mean(ops::upsample_bilinear(p.at("a"), 4));
  }, full_probe);
  for (auto [name, act] : {std::pair{"sigmoid", Activation::sigmoid}, {"tanh", Activation::tanh},
                           {"relu", Activation::relu}, {"leaky_relu", Activation::leaky_relu}})
    run(name, prim, [act](const B& p) { return sq_mean(ops::activate(p.at("a"), act)); },
        full_probe);
  run("add_sub_scale", prim, [](const B& p) {
    return sq_mean(ops::scale(ops::sub(ops::add(p.at("a"), p.at("b")), ops::mul(p.at("a"), p.at("a"))), 0.7));
  }, full_probe);
  run("mul_spatial", prim, [](const B& p) {
    return sq_mean(ops::mul_spatial(p.at("a"), p.at("g")));
  }, full_probe);
  run("concat_channels", prim, [](const B& p) {
    return sq_mean(ops::mul(ops::concat_channels<double>({p.at("a"), p.at("b")}),
                            ops::concat_channels<double>({p.at("b"), p.at("a")})));
  }, full_probe);
  run("charbonnier", prim, [](const B& p) { return ops::charbonnier(p.at("a"), p.at("b"), 1e-3); },
      full_probe);

  // Deformable convolution with every input differentiable.
  ParamSet<double> dcn;
  dcn.add("x", noise(Shape{1, 4, 5, 4}, rng, -1, 1));
  dcn.add("base", noise(Shape{1, 2, 5, 4}, rng, -0.9, 0.9));
  dcn.add("delta", noise(Shape{1, 36, 5, 4}, rng, -0.9, 0.9));
  dcn.add("mask", noise(Shape{1, 18, 5, 4}, rng, 0.05, 0.95));
  dcn.add("w", noise(Shape{3, 4, 3, 3}, rng, -1, 1));
  dcn.add("b", noise(Shape{1, 3, 1, 1}, rng, -1, 1));
  run("modulated_deform_conv", dcn, [](const B& p) {
    return sq_mean(mvgda::modulated_deform_conv(p.at("x"), p.at("base"), p.at("delta"),
                                                p.at("mask"), p.at("w"), p.at("b"), 2));
  }, full_probe);

  // Modules on the tiny config.
  const ModelConfig cfg = tiny_model_config();
  const Shape fs{1, cfg.channels, 4, 4};
  {
    ParamSet<double> ps;
    mvgda::add_params(ps, cfg, rng);
    randomize(ps, rng, 0.3);
    ps.add("prev_l", noise(fs, rng, -1, 1));
    ps.add("prev_h", noise(fs, rng, -1, 1));
    ps.add("cur", noise(fs, rng, -1, 1));
    ps.add("mv", noise(Shape{1, 2, 4, 4}, rng, 0.1, 0.9));
    run("align_dual", ps, [&](const B& p) {
      const auto a = mvgda::align_dual(p.at("prev_l"), p.at("prev_h"), p.at("cur"), p.at("mv"), p, cfg);
      return ops::add(sq_mean(a.l), ops::mean(ops::mul(a.l, a.h)));
    }, sampled);
  }
  {
    ParamSet<double> ps;
    rmgf::add_params(ps, cfg, rng);
    ps.add("res", noise(Shape{1, 1, 4, 4}, rng, 0, 1));
    ps.add("al", noise(fs, rng, -1, 1));
    ps.add("ah", noise(fs, rng, -1, 1));
    ps.add("cur", noise(fs, rng, -1, 1));
    run("gate_and_fuse", ps, [](const B& p) {
      return sq_mean(rmgf::fuse(rmgf::compute_gate(p.at("res"), p), p.at("al"), p.at("ah"),
                                p.at("cur"), p));
    }, sampled);
  }
  for (HeadKind h : {HeadKind::single_stage, HeadKind::two_stage}) {
    ModelConfig c = cfg;
    c.head = h;
    ParamSet<double> ps;
    ftar::add_params(ps, c, rng);
    randomize(ps, rng, 0.4);
    ps.add("lr", noise(Shape{1, 3, 3, 3}, rng, 0, 1));
    ps.add("h", noise(Shape{1, cfg.channels, 3, 3}, rng, -1, 1));
    run("reconstruct_" + to_string(h), ps, [c](const B& p) {
      const auto i = ftar::reconstruct(codec::FrameType::I, p.at("h"), Var<double>(), p.at("lr"), p, c);
      const auto q = ftar::reconstruct(codec::FrameType::P, Var<double>(), p.at("h"), p.at("lr"), p, c);
      return ops::add(sq_mean(i.sr), ops::mean(ops::mul(i.sr, q.sr)));
    }, sampled);
  }

  // End-to-end clip: I then P frames.
  {
    ParamSet<double> ps = init_params<double>(cfg, o.seed);
    randomize(ps, rng, 0.35);
    std::vector<Tensor<double>> lr, hr, mv, res;
    for (int t = 0; t < o.frames; ++t) {
      lr.push_back(noise(Shape{1, 3, 4, 4}, rng, 0, 1));
      hr.push_back(noise(Shape{1, 3, 8, 8}, rng, 0, 1));
      mv.push_back(noise(Shape{1, 2, 4, 4}, rng, 0.1, 0.9));
      res.push_back(noise(Shape{1, 1, 4, 4}, rng, 0, 1));
    }
    run("end_to_end_" + std::to_string(o.frames) + "_frames", ps, [&](const B& p) {
      std::optional<FeatureState<double>> st;
      Var<double> loss;
      for (int t = 0; t < o.frames; ++t) {
        StepInputs<double> in;
        in.lr = Var<double>(lr[t]);
        in.type = t == 0 ? codec::FrameType::I : codec::FrameType::P;
        if (t > 0) {
          in.dense_mv = Var<double>(mv[t]);
          in.residual = Var<double>(res[t]);
        }
        const auto step = forward_step<double>(p, cfg, st, in);
        st = step.state;
        const Var<double> l = ops::charbonnier(step.sr, Var<double>(hr[t]), 1e-3);
        loss = loss.defined() ? ops::add(loss, l) : l;
      }
      return ops::scale(loss, 1.0 / o.frames);
    }, sampled);
  }
  return out;
}

}  // namespace cdavsr
