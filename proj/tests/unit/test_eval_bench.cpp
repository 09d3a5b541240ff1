#include <filesystem>
#include <fstream>
#include <set>

#include "cdavsr/eval_bench.hpp"
#include "cdavsr/flow.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cdavsr;
using namespace fixtures;

namespace {

std::set<std::string> name_set(const ParamSet<float>& ps) {
  const auto n = ps.names();
  return {n.begin(), n.end()};
}

std::set<std::string> minus(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::set<std::string> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
  return out;
}

Frame smooth_frame(int w, int h, double ox, double oy) {
  Frame f(w, h, 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double u = x + ox, v = y + oy;
        f.at(c, y, x) = static_cast<float>(0.5 + 0.2 * std::sin(0.31 * u + 0.1 * c) +
                                           0.2 * std::cos(0.23 * v - 0.17 * u));
      }
  return f;
}

eval::EvalStream tiny_stream(int frames, int lr, int scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Frame> hr;
  for (int t = 0; t < frames; ++t) hr.push_back(smooth_frame(lr * scale, lr * scale, 2.0 * t, t));
  codec::EncoderConfig ec;
  ec.scale = scale;
  ec.gop = 3;
  ec.block = 4;
  ec.search = 4;
  return eval::make_eval_stream(hr, ec);
}

}  // namespace

TEST_SUITE("eval_bench") {

TEST_CASE("psnr: identical frames hit the cap, uniform 0.1 difference is 20 dB") {
  const Frame a(8, 8, 3, 0.3f), b(8, 8, 3, 0.4f);
  CHECK(eval::psnr(a, a) == 99.0);
  CHECK(eval::psnr(a, b) == doctest::Approx(20.0).epsilon(1e-6));
  CHECK_THROWS_AS(eval::psnr(a, Frame(8, 7, 3)), ContractViolation);
}

TEST_CASE("psnr and ssim match the scalar-loop oracles on 100 random pairs") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> d(11, 30);
  for (int i = 0; i < 100; ++i) {
    const int w = d(rng), h = d(rng);
    const Frame a = oracle::random_frame(w, h, 3, rng);
    Frame b = a;
    for (auto& v : b.data) v = std::clamp(v + 0.2f * (oracle::random_frame(1, 1, 1, rng).data[0] - 0.5f), 0.0f, 1.0f);
    CHECK(std::abs(eval::psnr(a, b) - oracle::psnr(a, b)) <= 1e-9);
    CHECK(std::abs(eval::ssim(a, b) - oracle::ssim(a, b)) <= 1e-6);
  }
}

TEST_CASE("ssim: identity is 1, constants follow the closed form, tiny frames are rejected") {
  std::mt19937_64 rng(2);
  const Frame a = oracle::random_frame(16, 16, 3, rng);
  CHECK(eval::ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  for (double dlt : {0.05, 0.2, -0.3}) {
    const double mb = 0.5 + dlt, c1 = 1e-4;
    const double expect = (2 * 0.5 * mb + c1) / (0.25 + mb * mb + c1);
    CHECK(eval::ssim(Frame(12, 12, 3, 0.5f), Frame(12, 12, 3, static_cast<float>(mb))) ==
          doctest::Approx(expect).epsilon(1e-6));
  }
  CHECK_THROWS_AS(eval::ssim(Frame(10, 20, 3), Frame(10, 20, 3)), ContractViolation);
}

TEST_CASE("parameter counts: one conv, one residual block, reference config") {
  Rng rng(3);
  ParamSet<float> conv, block;
  add_conv(conv, "c", 64, 64, 3, Init::kaiming, rng);
  add_residual_block(block, "b", 64, rng);
  CHECK(eval::count_params(conv) == 36928);
  CHECK(eval::count_params(block) == 73856);
  const std::size_t n = eval::count_params(init_params<float>(ModelConfig::reference(), 1));
  MESSAGE("reference config params: " << n);
  CHECK(n >= 2600000);
  CHECK(n <= 4000000);
}

TEST_CASE("count_macs: single conv value and P cheaper than I at reference depths") {
  CHECK(conv_macs(64, 64, 3, 180, 320) == 2123366400ull);
  const auto m = eval::count_macs(ModelConfig::reference(), 320, 180, 25);
  CHECK(m.p_frame.total() < m.i_frame.total());
  CHECK(m.per_frame() == doctest::Approx((m.i_frame.total() + 24.0 * m.p_frame.total()) / 25));
}

TEST_CASE("analytic MAC counts equal the instrumented forward pass for every variant and head") {
  for (Variant v : {Variant::full, Variant::onlymv, Variant::onlydcn, Variant::onlygl,
                    Variant::nogate, Variant::uniform_depth}) {
    for (HeadKind h : {HeadKind::single_stage, HeadKind::two_stage}) {
      ModelConfig cfg = tiny_config(v);
      cfg.scale = 4;
      cfg.head = h;
      if (v == Variant::uniform_depth) cfg.n_blocks = cfg.m_blocks;
      const auto ps = init_params<float>(cfg, 4);
      const auto a = eval::count_macs(cfg, 24, 16, 5);
      const auto b = eval::measure_macs(ps, cfg, 24, 16, 5);
      INFO(to_string(v), " ", to_string(h));
      CHECK(a.i_frame.extract == b.i_frame.extract);
      CHECK(a.i_frame.reconstruct == b.i_frame.reconstruct);
      CHECK(a.i_frame.total() == b.i_frame.total());
      CHECK(a.p_frame.align == b.p_frame.align);
      CHECK(a.p_frame.fuse == b.p_frame.fuse);
      CHECK(a.p_frame.total() == b.p_frame.total());
    }
  }
}

TEST_CASE("variant alignment costs: onlymv is cheapest and runs no DCN") {
  const auto cost = [](Variant v) { return eval::count_macs(tiny_config(v), 24, 16, 5).p_frame.align; };
  const std::uint64_t warp_only = 2ull * 8 * 4 * 24 * 16;
  CHECK(cost(Variant::onlymv) == warp_only);
  for (Variant v : {Variant::full, Variant::onlydcn, Variant::onlygl, Variant::nogate})
    CHECK(cost(Variant::onlymv) < cost(v));
  CHECK(cost(Variant::onlygl) == warp_only + lucas_kanade_macs(24, 16));
}

TEST_CASE("variants differ from full only in the declared parameters") {
  const auto full = name_set(init_params<float>(tiny_config(), 1));
  const std::set<std::string> dcn = {
      "mvgda.dcn_H.bias",   "mvgda.dcn_H.weight",   "mvgda.dcn_L.bias",       "mvgda.dcn_L.weight",
      "mvgda.head_m.bias",  "mvgda.head_m.weight",  "mvgda.head_o.bias",      "mvgda.head_o.weight",
      "mvgda.trunk.conv1.bias", "mvgda.trunk.conv1.weight", "mvgda.trunk.conv2.bias",
      "mvgda.trunk.conv2.weight"};
  const std::set<std::string> gate = {"rmgf.fres.conv1.bias", "rmgf.fres.conv1.weight",
                                      "rmgf.fres.conv2.bias", "rmgf.fres.conv2.weight"};
  for (Variant v : {Variant::onlymv, Variant::onlygl}) {
    const auto s = name_set(init_params<float>(tiny_config(v), 1));
    CHECK(minus(full, s) == dcn);
    CHECK(minus(s, full).empty());
  }
  CHECK(name_set(init_params<float>(tiny_config(Variant::onlydcn), 1)) == full);
  const auto ng = name_set(init_params<float>(tiny_config(Variant::nogate), 1));
  CHECK(minus(full, ng) == gate);
  CHECK(minus(ng, full).empty());
}

TEST_CASE("nogate fuses exactly as full would with a gate of ones") {
  const ModelConfig cfg = tiny_config(Variant::nogate);
  auto ps = init_params<float>(cfg, 5);
  std::mt19937_64 rng(6);
  randomize(ps, rng, 0.3);
  const auto p = BoundParams<float>::constants(ps);
  StepInputs<float> in{cst(oracle::random_tensor<float>(Shape{1, 3, 6, 6}, rng, 0, 1)),
                       codec::FrameType::I, {}, {}};
  const auto i = forward_step<float>(p, cfg, std::nullopt, in);
  in.type = codec::FrameType::P;
  in.dense_mv = cst(oracle::random_tensor<float>(Shape{1, 2, 6, 6}, rng, -1, 1));
  in.residual = cst(oracle::random_tensor<float>(Shape{1, 1, 6, 6}, rng, 0, 1));
  const auto out = forward_step<float>(p, cfg, i.state, in);
  for (float g : out.gate.value().data()) CHECK(g == 1.0f);
  const auto al = mvgda::align_dual(i.state.low, i.state.high, out.state.low, in.dense_mv, p, cfg);
  const auto fused = rmgf::fuse(rmgf::unit_gate<float>(out.state.low.shape()), al.l, al.h,
                                out.state.low, p);
  CHECK(ftar::trunk(fused, "ftar.trunk_p", cfg.n_blocks, p).value() == out.state.high.value());
}

TEST_CASE("evaluate: means equal the per-frame averages and frame types follow the priors") {
  const ModelConfig cfg = tiny_config();
  const auto ps = init_params<float>(cfg, 7);
  const auto s = tiny_stream(5, 12, 2, 8);
  std::vector<Frame> sr;
  const auto r = eval::evaluate(ps, cfg, s, &sr);
  REQUIRE(r.frames.size() == 5);
  REQUIRE(sr.size() == 5);
  double mp = 0, ms = 0;
  for (int t = 0; t < 5; ++t) {
    mp += r.frames[t].psnr;
    ms += r.frames[t].ssim;
    CHECK(r.frames[t].type == s.priors[t].frame_type);
    CHECK(r.frames[t].psnr == doctest::Approx(eval::psnr(sr[t], s.hr[t])));
  }
  CHECK(r.mean_psnr == doctest::Approx(mp / 5));
  CHECK(r.mean_ssim == doctest::Approx(ms / 5));
  CHECK(r.fps > 0);

  const auto dir = std::filesystem::temp_directory_path() / "cdavsr_eval_test";
  std::filesystem::create_directories(dir);
  eval::write_metrics_csv(r, dir / "m.csv");
  std::ifstream in(dir / "m.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "frame,psnr,ssim,ms,frame_type");
  CHECK(eval::summary(r).find("mean_psnr") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("bilinear baseline equals upsampling the decoded LR frames") {
  const auto s = tiny_stream(3, 12, 2, 9);
  const auto r = eval::evaluate_bilinear(s, 2);
  const Frame up = Frame::from_tensor(ops::upsample_bilinear(cst(s.lr[1].to_tensor<float>()), 2).value());
  CHECK(r.frames[1].psnr == doctest::Approx(eval::psnr(clamp01(up), s.hr[1])));
}

TEST_CASE("benchmark_latency: warm-up frames are untimed and repeats stack") {
  const ModelConfig cfg = tiny_config();
  const auto ps = init_params<float>(cfg, 10);
  const auto s = tiny_stream(7, 8, 2, 11);
  const auto one = eval::benchmark_latency(ps, cfg, s, 1);
  CHECK(one.ms.size() == 7 - eval::kWarmupFrames);
  const auto two = eval::benchmark_latency(ps, cfg, s, 2);
  CHECK(two.ms.size() == 2 * (7 - eval::kWarmupFrames));
  CHECK(two.median_i_ms > 0);
  CHECK(two.median_p_ms > 0);
  CHECK(eval::median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(eval::median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}

TEST_CASE("run_ablation: one row per variant, missing weights rejected") {
  const auto s = tiny_stream(4, 8, 2, 12);
  const auto full = init_params<float>(tiny_config(), 13);
  const auto mv = init_params<float>(tiny_config(Variant::onlymv), 13);
  const std::vector<eval::AblationEntry> entries{{"full", tiny_config(), &full},
                                                 {"onlymv", tiny_config(Variant::onlymv), &mv}};
  const auto rows = eval::run_ablation(entries, {s});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].name == "full");
  CHECK(rows[1].align_macs < rows[0].align_macs);
  CHECK(rows[1].params < rows[0].params);
  CHECK_THROWS_AS(eval::run_ablation({{"x", tiny_config(), nullptr}}, {s}), ContractViolation);
}

TEST_CASE("Lucas-Kanade flow recovers a smooth translation") {
  const Frame ref = smooth_frame(40, 40, 0, 0);
  const Frame cur = smooth_frame(40, 40, 1.5, -0.75);  // cur(p) = ref(p + (1.5, -0.75))
  const Tensor<float> f = lucas_kanade_flow(cur, ref);
  double ex = 0, ey = 0;
  int n = 0;
  for (int y = 8; y < 32; ++y)
    for (int x = 8; x < 32; ++x) {
      ex += std::abs(f.at(0, 0, y, x) - 1.5);
      ey += std::abs(f.at(0, 1, y, x) + 0.75);
      ++n;
    }
  CHECK(ex / n < 0.1);
  CHECK(ey / n < 0.1);
  const Tensor<float> zero = lucas_kanade_flow(ref, ref);
  for (float v : zero.data()) CHECK(std::abs(v) < 1e-6f);
}

TEST_CASE("gate_by_residual_decile: constant gate, residual-suppressing gate, nogate rejected") {
  const ModelConfig cfg = tiny_config();
  auto ps = init_params<float>(cfg, 9);
  const std::vector<eval::EvalStream> streams{tiny_stream(6, 12, 2, 10)};
  for (const char* n : {"rmgf.fres.conv1.weight", "rmgf.fres.conv1.bias", "rmgf.fres.conv2.weight",
                        "rmgf.fres.conv2.bias"})
    std::fill(ps.mutable_at(n).data().begin(), ps.mutable_at(n).data().end(), 0.0f);
  const auto flat = eval::gate_by_residual_decile(ps, cfg, streams);
  CHECK(flat.frames == 4);
  CHECK(flat.top == 0.5);
  CHECK(flat.bottom == 0.5);

  // gate = sigmoid(-20 * residual): strictly decreasing in the residual.
  ps.mutable_at("rmgf.fres.conv1.weight").at(0, 0, 1, 1) = 1.0f;
  ps.mutable_at("rmgf.fres.conv2.weight").at(0, 0, 1, 1) = -20.0f;
  const auto d = eval::gate_by_residual_decile(ps, cfg, streams);
  CHECK(d.top < d.bottom);
  CHECK(d.bottom <= 0.5);

  CHECK_THROWS_AS(eval::gate_by_residual_decile(init_params<float>(tiny_config(Variant::nogate), 1),
                                                tiny_config(Variant::nogate), streams),
                  ContractViolation);
}

}  // TEST_SUITE
