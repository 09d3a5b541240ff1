#include "cdavsr/eval_bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cdavsr/flow.hpp"
#include "cdavsr/image_io.hpp"
#include "cdavsr/mac_counter.hpp"

namespace cdavsr::eval {

double psnr(const Frame& a, const Frame& b) {
  require(a.same_dims(b), "psnr: frame dimensions differ");
  require(!a.data.empty(), "psnr: empty frames");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse == 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Frame& a, const Frame& b) {
  require(a.same_dims(b), "ssim: frame dimensions differ");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5, C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  require(a.width >= kWin && a.height >= kWin,
          "ssim: frame " + std::to_string(a.width) + "x" + std::to_string(a.height) +
              " smaller than the 11x11 window");
  double g[kWin];
  double gs = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    gs += g[i];
  }
  for (double& v : g) v /= gs;

  const int W = a.width, H = a.height;
  const std::vector<double> x = codec::luma(a), y = codec::luma(b);
  // Separable filtering of x, y, x^2, y^2, xy along rows, then columns.
  const int Wo = W - kWin + 1, Ho = H - kWin + 1;
  std::vector<double> r[5];
  for (auto& v : r) v.assign(static_cast<std::size_t>(H) * Wo, 0.0);
  for (int yy = 0; yy < H; ++yy)
    for (int xx = 0; xx < Wo; ++xx) {
      double s[5] = {0, 0, 0, 0, 0};
      for (int k = 0; k < kWin; ++k) {
        const std::size_t i = static_cast<std::size_t>(yy) * W + xx + k;
        s[0] += g[k] * x[i];
        s[1] += g[k] * y[i];
        s[2] += g[k] * x[i] * x[i];
        s[3] += g[k] * y[i] * y[i];
        s[4] += g[k] * x[i] * y[i];
      }
      for (int c = 0; c < 5; ++c) r[c][static_cast<std::size_t>(yy) * Wo + xx] = s[c];
    }
  double total = 0.0;
  for (int yy = 0; yy < Ho; ++yy)
    for (int xx = 0; xx < Wo; ++xx) {
      double s[5] = {0, 0, 0, 0, 0};
      for (int k = 0; k < kWin; ++k)
        for (int c = 0; c < 5; ++c) s[c] += g[k] * r[c][static_cast<std::size_t>(yy + k) * Wo + xx];
      const double mx = s[0], my = s[1];
      const double vx = s[2] - mx * mx, vy = s[3] - my * my, cxy = s[4] - mx * my;
      total += ((2 * mx * my + C1) * (2 * cxy + C2)) /
               ((mx * mx + my * my + C1) * (vx + vy + C2));
    }
  return total / (static_cast<double>(Wo) * Ho);
}

MacBreakdown count_macs(const ModelConfig& cfg, int width, int height, int gop) {
  cfg.validate();
  require(width >= 1 && height >= 1 && gop >= 1, "count_macs: bad resolution or GOP");
  const int C = cfg.channels, G = cfg.groups, s = cfg.scale;
  const int H = height, W = width;
  const std::uint64_t hw = static_cast<std::uint64_t>(H) * W;
  auto conv = [&](int in, int out, int scale_factor = 1) {
    return conv_macs(in, out, 3, H * scale_factor, W * scale_factor);
  };
  const std::uint64_t cc = conv(C, C);

  std::uint64_t extract = conv(3, C) + 2ull * cfg.extract_blocks * cc;
  std::uint64_t head = 0;
  if (cfg.head == HeadKind::single_stage) {
    head = conv(C, 3 * s * s);
  } else {
    head = conv(C, 4 * C);
    if (s == 4) head += conv(C, 4 * C, 2);
    head += conv(C, 3, s);
  }
  const std::uint64_t skip = 8ull * 3 * hw * s * s;

  MacBreakdown m;
  m.gop = gop;
  m.i_frame.extract = extract;
  m.i_frame.reconstruct = 2ull * cfg.m_blocks * cc + head + skip;

  const std::uint64_t warp = 8ull * C * hw;
  std::uint64_t align = 0;
  if (!cfg.uses_dcn()) {
    align = 2 * warp;
    if (cfg.variant == Variant::onlygl) align += lucas_kanade_macs(W, H);
  } else {
    if (cfg.variant != Variant::onlydcn) align += 2 * warp;
    align += conv(3 * C, C) + cc + conv(C, 2 * mvgda::kTaps * G) + conv(C, mvgda::kTaps * G);
    align += 2ull * C * mvgda::kTaps * hw * (C + 8);
  }
  std::uint64_t fuse = conv(3 * C, C);
  if (cfg.uses_gate()) fuse += conv(1, cfg.fres_width) + conv(cfg.fres_width, 1);

  m.p_frame.extract = extract;
  m.p_frame.align = align;
  m.p_frame.fuse = fuse;
  m.p_frame.reconstruct = 2ull * cfg.n_blocks * cc + head + skip;
  return m;
}

MacBreakdown measure_macs(const ParamSet<float>& params, const ModelConfig& cfg, int width,
                          int height, int gop) {
  StreamSession s(params, cfg);
  const Frame blank(width, height, 3, 0.5f);
  codec::PriorRecord i_rec;
  i_rec.residual = codec::ResidualMap::zeros(width, height);
  codec::PriorRecord p_rec = i_rec;
  p_rec.frame_type = codec::FrameType::P;
  p_rec.motion = codec::MotionField::zeros(width, height, 8);
  MacBreakdown m;
  m.gop = gop;
  s.step(blank, i_rec);
  m.i_frame = s.last().macs;
  s.step(blank, p_rec);
  m.p_frame = s.last().macs;
  return m;
}

void MetricReport::finalize() {
  mean_psnr = mean_ssim = mean_ms = 0.0;
  if (frames.empty()) return;
  for (const auto& f : frames) {
    mean_psnr += f.psnr;
    mean_ssim += f.ssim;
    mean_ms += f.ms;
  }
  const double n = static_cast<double>(frames.size());
  mean_psnr /= n;
  mean_ssim /= n;
  mean_ms /= n;
  fps = mean_ms > 0.0 ? 1000.0 / mean_ms : 0.0;
}

void write_metrics_csv(const MetricReport& r, const std::filesystem::path& path,
                       bool include_timing) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(8);
  out << (include_timing ? "frame,psnr,ssim,ms,frame_type\n" : "frame,psnr,ssim,frame_type\n");
  for (const auto& f : r.frames) {
    out << f.frame << ',' << f.psnr << ',' << f.ssim << ',';
    if (include_timing) out << f.ms << ',';
    out << (f.type == codec::FrameType::I ? 'I' : 'P') << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::string summary(const MetricReport& r) {
  std::ostringstream o;
  o.precision(6);
  std::size_t ni = 0;
  for (const auto& f : r.frames) ni += f.type == codec::FrameType::I;
  o << "frames: " << r.frames.size() << "\n"
    << "i_frames: " << ni << "\n"
    << "p_frames: " << r.frames.size() - ni << "\n"
    << "mean_psnr_db: " << r.mean_psnr << "\n"
    << "mean_ssim: " << r.mean_ssim << "\n"
    << "mean_ms: " << r.mean_ms << "\n"
    << "fps: " << r.fps << "\n";
  return o.str();
}

EvalStream make_eval_stream(std::span<const Frame> hr, const codec::EncoderConfig& enc) {
  codec::EncodedStream e = codec::encode_stream(hr, enc);
  return {std::move(e.decoded), std::move(e.sidecar.records), {hr.begin(), hr.end()}};
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

void score(FrameMetrics& m, const Frame& sr, const EvalStream& s, std::size_t t) {
  if (t < s.hr.size()) {
    m.psnr = psnr(sr, s.hr[t]);
    m.ssim = ssim(sr, s.hr[t]);
  }
}

}  // namespace

MetricReport evaluate(const ParamSet<float>& params, const ModelConfig& cfg,
                      const EvalStream& stream, std::vector<Frame>* sr_out) {
  require(stream.lr.size() == stream.priors.size(), "evaluate: frame/prior count mismatch");
  require(stream.hr.empty() || stream.hr.size() == stream.lr.size(),
          "evaluate: ground-truth count mismatch");
  StreamSession s(params, cfg);
  MetricReport r;
  for (std::size_t t = 0; t < stream.lr.size(); ++t) {
    const auto t0 = Clock::now();
    Frame sr = s.step(stream.lr[t], stream.priors[t]);
    const auto t1 = Clock::now();
    FrameMetrics m;
    m.frame = static_cast<int>(t);
    m.ms = elapsed_ms(t0, t1);
    m.type = s.last().intra_path ? codec::FrameType::I : codec::FrameType::P;
    m.macs = s.last().macs;
    score(m, sr, stream, t);
    r.frames.push_back(m);
    if (sr_out) sr_out->push_back(std::move(sr));
  }
  r.finalize();
  return r;
}

MetricReport evaluate_bilinear(const EvalStream& stream, int scale) {
  MetricReport r;
  for (std::size_t t = 0; t < stream.lr.size(); ++t) {
    const auto t0 = Clock::now();
    const Var<float> up = ops::upsample_bilinear(Var<float>(stream.lr[t].to_tensor<float>()), scale);
    const Frame sr = clamp01(Frame::from_tensor(up.value()));
    FrameMetrics m;
    m.frame = static_cast<int>(t);
    m.ms = elapsed_ms(t0, Clock::now());
    m.type = stream.priors.empty() ? codec::FrameType::I : stream.priors[t].frame_type;
    score(m, sr, stream, t);
    r.frames.push_back(m);
  }
  r.finalize();
  return r;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

LatencyReport benchmark_latency(const ParamSet<float>& params, const ModelConfig& cfg,
                                const EvalStream& stream, int repeats) {
  require(repeats >= 1, "benchmark_latency: repeats must be >= 1");
  require(stream.lr.size() == stream.priors.size(), "benchmark_latency: frame/prior mismatch");
  LatencyReport r;
  std::vector<double> ti, tp;
  for (int rep = 0; rep < repeats; ++rep) {
    StreamSession s(params, cfg);
    for (std::size_t t = 0; t < stream.lr.size(); ++t) {
      const auto t0 = Clock::now();
      s.step(stream.lr[t], stream.priors[t]);
      const double ms = elapsed_ms(t0, Clock::now());
      if (static_cast<int>(t) < kWarmupFrames) continue;
      const codec::FrameType type = s.last().intra_path ? codec::FrameType::I : codec::FrameType::P;
      r.ms.push_back(ms);
      r.types.push_back(type);
      (type == codec::FrameType::I ? ti : tp).push_back(ms);
    }
  }
  r.median_ms = median(r.ms);
  r.median_i_ms = median(ti);
  r.median_p_ms = median(tp);
  r.fps = r.median_ms > 0.0 ? 1000.0 / r.median_ms : 0.0;
  return r;
}

std::vector<AblationRow> run_ablation(const std::vector<AblationEntry>& variants,
                                      const std::vector<EvalStream>& streams) {
  require(!streams.empty(), "run_ablation: no evaluation streams");
  std::vector<AblationRow> rows;
  for (const AblationEntry& v : variants) {
    require(v.params != nullptr, "run_ablation: missing weights for variant " + v.name);
    AblationRow row;
    row.name = v.name;
    row.params = count_params(*v.params);
    double align = 0.0;
    std::size_t n = 0, np = 0;
    for (const EvalStream& s : streams) {
      const MetricReport r = evaluate(*v.params, v.cfg, s);
      for (const FrameMetrics& f : r.frames) {
        row.psnr += f.psnr;
        row.ssim += f.ssim;
        row.ms += f.ms;
        ++n;
        if (f.type == codec::FrameType::P) {
          align += static_cast<double>(f.macs.align);
          ++np;
        }
      }
    }
    row.psnr /= static_cast<double>(n);
    row.ssim /= static_cast<double>(n);
    row.ms /= static_cast<double>(n);
    row.align_macs = np ? align / static_cast<double>(np) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

GateDeciles gate_by_residual_decile(const ParamSet<float>& params, const ModelConfig& cfg,
                                    const std::vector<EvalStream>& streams) {
  require(cfg.uses_gate(), "gate_by_residual_decile: variant " + to_string(cfg.variant) +
                               " has no gate");
  GateDeciles d;
  for (const EvalStream& s : streams) {
    StreamSession session(params, cfg);
    for (std::size_t t = 0; t < s.lr.size(); ++t) {
      session.step(s.lr[t], s.priors[t]);
      if (session.last().intra_path) continue;
      const std::vector<float>& res = s.priors[t].residual.values;
      const Tensor<float>& gate = session.last().gate.value();
      require(gate.size() == res.size(), "gate_by_residual_decile: gate and residual sizes differ");
      std::vector<std::size_t> order(res.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return res[a] < res[b]; });
      const std::size_t k = std::max<std::size_t>(1, order.size() / 10);
      double lo = 0.0, hi = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        lo += gate[order[i]];
        hi += gate[order[order.size() - 1 - i]];
      }
      d.bottom += lo / static_cast<double>(k);
      d.top += hi / static_cast<double>(k);
      ++d.frames;
    }
  }
  require(d.frames > 0, "gate_by_residual_decile: no P-frames");
  d.top /= d.frames;
  d.bottom /= d.frames;
  return d;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(8);
  out << "variant,psnr,ssim,ms,align_macs,params\n";
  for (const auto& r : rows)
    out << r.name << ',' << r.psnr << ',' << r.ssim << ',' << r.ms << ',' << r.align_macs << ','
        << r.params << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

void export_map_png(const Tensor<float>& t, int channel, const std::filesystem::path& path,
                    bool normalize) {
  const Shape s = t.shape();
  require(channel >= 0 && channel < s.c, "export_map_png: channel out of range");
  const float* p = t.plane(0, channel);
  const std::size_t n = s.plane();
  float lo = 0.0f, hi = 1.0f;
  if (normalize) {
    lo = *std::min_element(p, p + n);
    hi = *std::max_element(p, p + n);
  }
  Frame f(s.w, s.h, 1);
  const float range = hi - lo;
  for (std::size_t i = 0; i < n; ++i) f.data[i] = range > 0.0f ? (p[i] - lo) / range : 0.0f;
  write_png(f, path);
}

}  // namespace cdavsr::eval
