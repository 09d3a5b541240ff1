#include "cdavsr/grad_check.hpp"
#include "cdavsr/mvgda.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cdavsr;
using namespace fixtures;

namespace {

struct DcnCase {
  Tensor<double> x, base, delta, mask, w, b;
  int groups;
};

DcnCase random_dcn(std::mt19937_64& rng, int C, int O, int G, int H, int W, double offs) {
  DcnCase d;
  d.groups = G;
  d.x = oracle::random_tensor<double>(Shape{1, C, H, W}, rng);
  d.base = oracle::random_tensor<double>(Shape{1, 2, H, W}, rng, -offs, offs);
  d.delta = oracle::random_tensor<double>(Shape{1, 18 * G, H, W}, rng, -offs, offs);
  d.mask = oracle::random_tensor<double>(Shape{1, 9 * G, H, W}, rng, 0.05, 0.95);
  d.w = oracle::random_tensor<double>(Shape{O, C, 3, 3}, rng);
  d.b = oracle::random_tensor<double>(Shape{1, O, 1, 1}, rng);
  return d;
}

}  // namespace

TEST_SUITE("mvgda") {

TEST_CASE("warp: zero motion is the identity") {
  std::mt19937_64 rng(1);
  const auto x = oracle::random_tensor<float>(Shape{2, 3, 6, 7}, rng);
  const Var<float> y = mvgda::warp(cst(x), cst(Tensor<float>(Shape{2, 2, 6, 7})));
  CHECK(y.value() == x);
}

TEST_CASE("warp: integer (2,0) shifts interior columns and replicates the border") {
  std::mt19937_64 rng(2);
  const auto x = oracle::random_tensor<float>(Shape{1, 2, 5, 8}, rng);
  Tensor<float> mv(Shape{1, 2, 5, 8});
  for (int y = 0; y < 5; ++y)
    for (int xx = 0; xx < 8; ++xx) mv.at(0, 0, y, xx) = 2.0f;
  const Tensor<float> y = mvgda::warp(cst(x), cst(mv)).value();
  for (int c = 0; c < 2; ++c)
    for (int r = 0; r < 5; ++r) {
      for (int xx = 0; xx < 6; ++xx) CHECK(y.at(0, c, r, xx) == x.at(0, c, r, xx + 2));
      CHECK(y.at(0, c, r, 6) == x.at(0, c, r, 7));
      CHECK(y.at(0, c, r, 7) == x.at(0, c, r, 7));
    }
}

TEST_CASE("warp: (0.5, 0) on a ramp gives midpoint averages") {
  Tensor<double> x(Shape{1, 1, 3, 6}), mv(Shape{1, 2, 3, 6});
  for (int y = 0; y < 3; ++y)
    for (int xx = 0; xx < 6; ++xx) {
      x.at(0, 0, y, xx) = 0.1 * xx * xx + y;
      mv.at(0, 0, y, xx) = 0.5;
    }
  const Tensor<double> w = mvgda::warp(cst(x), cst(mv)).value();
  for (int y = 0; y < 3; ++y)
    for (int xx = 0; xx < 5; ++xx)
      CHECK(w.at(0, 0, y, xx) == doctest::Approx((x.at(0, 0, y, xx) + x.at(0, 0, y, xx + 1)) / 2));
}

TEST_CASE("warp matches the per-pixel oracle on 100 random instances") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> d(1, 9);
  for (int i = 0; i < 100; ++i) {
    const Shape s{1, d(rng) % 3 + 1, d(rng), d(rng)};
    const auto x = oracle::random_tensor<float>(s, rng);
    const auto mv = oracle::random_tensor<float>(Shape{1, 2, s.h, s.w}, rng, -4, 4);
    CHECK(max_abs_diff(mvgda::warp(cst(x), cst(mv)).value(), oracle::warp(x, mv)) <= 1e-5);
  }
}

TEST_CASE("predict_offsets_mask: zero heads give zero offsets and a 0.5 mask") {
  const ModelConfig cfg = tiny_config();
  Rng rng(4);
  ParamSet<float> ps;
  mvgda::add_params(ps, cfg, rng);
  CHECK(ps.names() == std::vector<std::string>{
                          "mvgda.dcn_H.bias", "mvgda.dcn_H.weight", "mvgda.dcn_L.bias",
                          "mvgda.dcn_L.weight", "mvgda.head_m.bias", "mvgda.head_m.weight",
                          "mvgda.head_o.bias", "mvgda.head_o.weight", "mvgda.trunk.conv1.bias",
                          "mvgda.trunk.conv1.weight", "mvgda.trunk.conv2.bias",
                          "mvgda.trunk.conv2.weight"});
  std::mt19937_64 r(5);
  const Shape s{1, 4, 5, 6};
  const auto f = mvgda::predict_offsets_mask(cst(oracle::random_tensor<float>(s, r)),
                                             cst(oracle::random_tensor<float>(s, r)),
                                             cst(oracle::random_tensor<float>(s, r)),
                                             BoundParams<float>::constants(ps), cfg);
  CHECK(f.delta.shape() == Shape{1, 36, 5, 6});
  CHECK(f.mask.shape() == Shape{1, 18, 5, 6});
  for (float v : f.delta.value().data()) CHECK(v == 0.0f);
  for (float v : f.mask.value().data()) CHECK(v == 0.5f);
}

TEST_CASE("predict_offsets_mask: offsets stay within the limit and match an op composition") {
  const ModelConfig cfg = tiny_config();
  Rng rng(6);
  ParamSet<double> ps;
  mvgda::add_params(ps, cfg, rng);
  std::mt19937_64 r(7);
  randomize(ps, r, 3.0);
  const BoundParams<double> p = BoundParams<double>::constants(ps);
  const Shape s{1, 4, 4, 5};
  const Var<double> a = cst(oracle::random_tensor<double>(s, r, -50, 50));
  const Var<double> b = cst(oracle::random_tensor<double>(s, r, -50, 50));
  const Var<double> c = cst(oracle::random_tensor<double>(s, r, -50, 50));
  const auto f = mvgda::predict_offsets_mask(a, b, c, p, cfg);
  double peak = 0;
  for (double v : f.delta.value().data()) peak = std::max(peak, std::abs(v));
  CHECK(peak <= cfg.offset_limit);
  CHECK(peak > 9.0);  // the inputs are large enough to saturate

  using ops::Activation;
  auto conv = [&](const char* n, const Var<double>& x) {
    return ops::conv2d(x, p.at(std::string(n) + ".weight"), p.at(std::string(n) + ".bias"), 1, 1);
  };
  Var<double> t = ops::concat_channels<double>({a, b, c});
  t = ops::activate(conv("mvgda.trunk.conv1", t), Activation::leaky_relu);
  t = ops::activate(conv("mvgda.trunk.conv2", t), Activation::leaky_relu);
  const Tensor<double> d = ops::activate(conv("mvgda.head_o", t), Activation::tanh).value();
  const Tensor<double> m = ops::activate(conv("mvgda.head_m", t), Activation::sigmoid).value();
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(f.delta.value()[i] == doctest::Approx(10.0 * d[i]));
  CHECK(max_abs_diff(f.mask.value(), m) == 0.0);

  Tensor<double> wrong(Shape{1, 3, 4, 5});
  CHECK_THROWS_AS(mvgda::predict_offsets_mask(a, cst(wrong), c, p, cfg), ContractViolation);
}

TEST_CASE("modulated_deform_conv matches the direct-sum oracle") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 20; ++i) {
    const int G = 1 + i % 3;
    const DcnCase d = random_dcn(rng, 2 * G, 1 + i % 4, G, 3 + i % 5, 4 + i % 3, 2.5);
    const Tensor<double> got =
        mvgda::modulated_deform_conv(cst(d.x), cst(d.base), cst(d.delta), cst(d.mask), cst(d.w),
                                     cst(d.b), d.groups)
            .value();
    CHECK(max_abs_diff(got, oracle::deform_conv(d.x, d.base, d.delta, d.mask, d.w, d.b, G)) <= 1e-12);
  }
}

TEST_CASE("modulated_deform_conv with zero offsets and unit mask reduces to conv2d") {
  // Sampling replicates the border, so the reference convolves an edge-padded input.
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    const int G = 1 << (i % 3), C = G * (1 + i % 2), H = 2 + i % 6, W = 2 + (i / 6) % 6;
    const auto x = oracle::random_tensor<float>(Shape{1, C, H, W}, rng);
    const auto w = oracle::random_tensor<float>(Shape{3, C, 3, 3}, rng);
    const auto b = oracle::random_tensor<float>(Shape{1, 3, 1, 1}, rng);
    const Tensor<float> got =
        mvgda::modulated_deform_conv(cst(x), cst(Tensor<float>(Shape{1, 2, H, W})),
                                     cst(Tensor<float>(Shape{1, 18 * G, H, W})),
                                     cst(Tensor<float>(Shape{1, 9 * G, H, W}, 1.0f)), cst(w), cst(b), G)
            .value();
    const Tensor<float> ref = oracle::conv2d<float>(replicate_pad(x, 1), w, &b, 1, 0);
    CHECK(max_abs_diff(got, ref) <= 1e-5);
  }
}

TEST_CASE("modulated_deform_conv with a constant integer offset equals conv2d of the shifted map") {
  std::mt19937_64 rng(10);
  const int C = 4, H = 12, W = 14, dx = 2, dy = -1;
  const auto x = oracle::random_tensor<float>(Shape{1, C, H, W}, rng);
  const auto w = oracle::random_tensor<float>(Shape{4, C, 3, 3}, rng);
  const auto b = oracle::random_tensor<float>(Shape{1, 4, 1, 1}, rng);
  Tensor<float> base(Shape{1, 2, H, W});
  for (int y = 0; y < H; ++y)
    for (int xx = 0; xx < W; ++xx) {
      base.at(0, 0, y, xx) = dx;
      base.at(0, 1, y, xx) = dy;
    }
  const Tensor<float> got =
      mvgda::modulated_deform_conv(cst(x), cst(base), cst(Tensor<float>(Shape{1, 36, H, W})),
                                   cst(Tensor<float>(Shape{1, 18, H, W}, 1.0f)), cst(w), cst(b), 2)
          .value();
  const Tensor<float> ref = oracle::conv2d<float>(translate(x, dx, dy), w, &b, 1, 1);
  for (int o = 0; o < 4; ++o)
    for (int y = 2; y < H - 2; ++y)
      for (int xx = 1; xx < W - 3; ++xx)
        CHECK(std::abs(got.at(0, o, y, xx) - ref.at(0, o, y, xx)) <= 1e-5);
}

TEST_CASE("modulated_deform_conv: a zero mask leaves only the bias") {
  std::mt19937_64 rng(11);
  DcnCase d = random_dcn(rng, 4, 3, 2, 5, 5, 3.0);
  std::fill(d.mask.data().begin(), d.mask.data().end(), 0.0);
  const Tensor<double> got = mvgda::modulated_deform_conv(cst(d.x), cst(d.base), cst(d.delta),
                                                          cst(d.mask), cst(d.w), cst(d.b), 2)
                                 .value();
  for (int o = 0; o < 3; ++o)
    for (int y = 0; y < 5; ++y)
      for (int xx = 0; xx < 5; ++xx) CHECK(got.at(0, o, y, xx) == d.b[o]);
}

TEST_CASE("modulated_deform_conv rejects bad shapes") {
  std::mt19937_64 rng(12);
  DcnCase d = random_dcn(rng, 4, 3, 2, 5, 5, 1.0);
  CHECK_THROWS_AS(mvgda::modulated_deform_conv(cst(d.x), cst(d.base), cst(d.delta), cst(d.mask),
                                               cst(d.w), cst(d.b), 3),
                  ContractViolation);
  CHECK_THROWS_AS(mvgda::modulated_deform_conv(cst(d.x), cst(d.base), cst(d.mask), cst(d.mask),
                                               cst(d.w), cst(d.b), 2),
                  ContractViolation);
}

TEST_CASE("align_dual: zero motion, zero heads, unit mask and delta kernels give the identity") {
  for (Variant v : {Variant::full, Variant::onlydcn, Variant::onlymv}) {
    const ModelConfig cfg = tiny_config(v);
    Rng rng(13);
    ParamSet<float> ps;
    mvgda::add_params(ps, cfg, rng);
    if (cfg.uses_dcn()) {
      // Mask logits large enough that sigmoid rounds to exactly 1.
      for (auto& b : ps.mutable_at("mvgda.head_m.bias").data()) b = 40.0f;
      for (const char* n : {"mvgda.dcn_L.weight", "mvgda.dcn_H.weight"}) {
        Tensor<float>& w = ps.mutable_at(n);
        std::fill(w.data().begin(), w.data().end(), 0.0f);
        for (int c = 0; c < cfg.channels; ++c) w.at(c, c, 1, 1) = 1.0f;
      }
    }
    std::mt19937_64 r(14);
    const Shape s{1, 4, 7, 6};
    const auto hl = oracle::random_tensor<float>(s, r), hh = oracle::random_tensor<float>(s, r);
    const auto out = mvgda::align_dual(cst(hl), cst(hh), cst(oracle::random_tensor<float>(s, r)),
                                       cst(Tensor<float>(Shape{1, 2, 7, 6})),
                                       BoundParams<float>::constants(ps), cfg);
    INFO(to_string(v));
    CHECK(out.l.shape() == s);
    CHECK(out.h.shape() == s);
    CHECK(max_abs_diff(out.l.value(), hl) <= 1e-6);
    CHECK(max_abs_diff(out.h.value(), hh) <= 1e-6);
  }
}

TEST_CASE("align_dual requires a previous state of matching shape") {
  const ModelConfig cfg = tiny_config();
  Rng rng(15);
  ParamSet<float> ps;
  mvgda::add_params(ps, cfg, rng);
  const auto p = BoundParams<float>::constants(ps);
  const Var<float> h = cst(Tensor<float>(Shape{1, 4, 5, 5}));
  const Var<float> mv = cst(Tensor<float>(Shape{1, 2, 5, 5}));
  CHECK_THROWS_AS(mvgda::align_dual(Var<float>(), Var<float>(), h, mv, p, cfg), ContractViolation);
  CHECK_THROWS_AS(mvgda::align_dual(cst(Tensor<float>(Shape{1, 4, 4, 5})), h, h, mv, p, cfg),
                  ContractViolation);
}

TEST_CASE("grad_check: modulated_deform_conv w.r.t. features, offsets, mask, weights, bias") {
  std::mt19937_64 rng(16);
  const DcnCase d = random_dcn(rng, 4, 3, 2, 5, 4, 0.9);
  ParamSet<double> ps;
  ps.add("x", d.x);
  ps.add("base", d.base);
  ps.add("delta", d.delta);
  ps.add("mask", d.mask);
  ps.add("w", d.w);
  ps.add("b", d.b);
  const auto rep = grad_check(
      ps,
      [](const BoundParams<double>& p) {
        const Var<double> y = mvgda::modulated_deform_conv(p.at("x"), p.at("base"), p.at("delta"),
                                                           p.at("mask"), p.at("w"), p.at("b"), 2);
        return ops::mean(ops::mul(y, y));
      },
      1e-4);
  INFO(rep.worst);
  CHECK(rep.pass);
  CHECK(rep.entries.size() == 6);
}

TEST_CASE("grad_check: align_dual w.r.t. every alignment parameter and both states") {
  for (Variant v : {Variant::full, Variant::onlydcn}) {
    const ModelConfig cfg = tiny_config(v);
    Rng rng(17);
    ParamSet<double> ps;
    mvgda::add_params(ps, cfg, rng);
    std::mt19937_64 r(18);
    randomize(ps, r, 0.3);
    const Shape s{1, 4, 4, 4};
    ps.add("prev_l", oracle::random_tensor<double>(s, r));
    ps.add("prev_h", oracle::random_tensor<double>(s, r));
    ps.add("cur", oracle::random_tensor<double>(s, r));
    ps.add("mv", oracle::random_tensor<double>(Shape{1, 2, 4, 4}, r, 0.1, 0.9));
    GradCheckOptions o;
    o.samples_per_tensor = 24;
    const auto rep = grad_check(
        ps,
        [&](const BoundParams<double>& p) {
          const auto a = mvgda::align_dual(p.at("prev_l"), p.at("prev_h"), p.at("cur"), p.at("mv"),
                                           p, cfg);
          return ops::add(ops::mean(ops::mul(a.l, a.l)), ops::mean(ops::mul(a.h, a.l)));
        },
        1e-4, o);
    INFO(to_string(v), " worst ", rep.worst, " err ", rep.max_rel_err);
    CHECK(rep.pass);
  }
}

}  // TEST_SUITE
