#include "cdavsr/toy_codec.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "cdavsr/binary_io.hpp"

namespace cdavsr::codec {

namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

struct Plane8 {
  int width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> px;

  std::uint8_t at(int c, int y, int x) const {
    return px[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

Plane8 to_plane8(const Frame& f) {
  Plane8 p{f.width, f.height, f.channels, std::vector<std::uint8_t>(f.data.size())};
  for (std::size_t i = 0; i < f.data.size(); ++i) p.px[i] = to_byte(f.data[i]);
  return p;
}

Frame to_frame(const Plane8& p) {
  Frame f(p.width, p.height, p.channels);
  for (std::size_t i = 0; i < p.px.size(); ++i) f.data[i] = from_byte(p.px[i]);
  return f;
}

std::uint8_t clamp_byte(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

// Integer-pel block-copy prediction on the byte grid.
Plane8 predict8(const Plane8& ref, const MotionField& mv) {
  require(mv.subpel_shift == 0, "toy codec prediction is integer-pel only");
  Plane8 out{ref.width, ref.height, ref.channels, std::vector<std::uint8_t>(ref.px.size())};
  for (int y = 0; y < ref.height; ++y) {
    for (int x = 0; x < ref.width; ++x) {
      const MotionVector v = mv.at(y / mv.block_size, x / mv.block_size);
      const int sx = std::clamp(x + v.dx, 0, ref.width - 1);
      const int sy = std::clamp(y + v.dy, 0, ref.height - 1);
      for (int c = 0; c < ref.channels; ++c)
        out.px[(static_cast<std::size_t>(c) * ref.height + y) * ref.width + x] = ref.at(c, sy, sx);
    }
  }
  return out;
}

void check_field(const MotionField& mv, int width, int height) {
  require(mv.block_size >= 1 && mv.grid_w == ceil_div(width, mv.block_size) &&
              mv.grid_h == ceil_div(height, mv.block_size) &&
              mv.vectors.size() == static_cast<std::size_t>(mv.grid_w) * mv.grid_h,
          "motion field grid does not cover a " + std::to_string(width) + "x" +
              std::to_string(height) + " frame");
}

double cubic(double x) {
  const double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0;
  if (x < 2.0) return a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a;
  return 0.0;
}

struct Taps {
  std::vector<int> index;
  std::vector<double> weight;
  int count = 0;
};

// Per-output contributions for antialiased reduction along one axis.
Taps reduction_taps(int in_size, int factor) {
  const int out_size = in_size / factor;
  const double width = 4.0 * factor;
  const int count = static_cast<int>(std::ceil(width)) + 2;
  Taps t;
  t.count = count;
  t.index.resize(static_cast<std::size_t>(out_size) * count);
  t.weight.resize(t.index.size());
  for (int i = 0; i < out_size; ++i) {
    const double u = (i + 0.5) * factor - 0.5;
    const int left = static_cast<int>(std::floor(u - width / 2.0));
    double sum = 0.0;
    for (int k = 0; k < count; ++k) {
      const int j = left + k;
      const double w = cubic((u - j) / factor) / factor;
      t.index[static_cast<std::size_t>(i) * count + k] = std::clamp(j, 0, in_size - 1);
      t.weight[static_cast<std::size_t>(i) * count + k] = w;
      sum += w;
    }
    for (int k = 0; k < count; ++k) t.weight[static_cast<std::size_t>(i) * count + k] /= sum;
  }
  return t;
}

}  // namespace

MotionField MotionField::zeros(int width, int height, int block, int subpel_shift) {
  require(block >= 1, "block size must be >= 1");
  MotionField f;
  f.block_size = block;
  f.subpel_shift = subpel_shift;
  f.grid_w = ceil_div(width, block);
  f.grid_h = ceil_div(height, block);
  f.vectors.assign(static_cast<std::size_t>(f.grid_w) * f.grid_h, MotionVector{});
  return f;
}

ResidualMap ResidualMap::zeros(int width, int height) {
  ResidualMap m;
  m.width = width;
  m.height = height;
  m.values.assign(static_cast<std::size_t>(width) * height, 0.0f);
  return m;
}

std::vector<FrameType> assign_frame_types(int frame_count, int gop) {
  require(gop >= 1, "GOP length must be >= 1, got " + std::to_string(gop));
  require(frame_count >= 0, "frame count must be >= 0");
  std::vector<FrameType> out(static_cast<std::size_t>(frame_count));
  for (int t = 0; t < frame_count; ++t) out[t] = (t % gop == 0) ? FrameType::I : FrameType::P;
  return out;
}

std::vector<std::int32_t> luma_fixed(const Frame& f) {
  const std::size_t hw = static_cast<std::size_t>(f.width) * f.height;
  std::vector<std::int32_t> out(hw);
  if (f.channels == 1) {
    for (std::size_t i = 0; i < hw; ++i) out[i] = 1000 * to_byte(f.data[i]);
    return out;
  }
  require(f.channels == 3, "luma needs 1 or 3 channels");
  for (std::size_t i = 0; i < hw; ++i)
    out[i] = 299 * to_byte(f.data[i]) + 587 * to_byte(f.data[hw + i]) +
             114 * to_byte(f.data[2 * hw + i]);
  return out;
}

std::vector<double> luma(const Frame& f) {
  const std::size_t hw = static_cast<std::size_t>(f.width) * f.height;
  std::vector<double> out(hw);
  if (f.channels == 1) {
    for (std::size_t i = 0; i < hw; ++i) out[i] = f.data[i];
    return out;
  }
  require(f.channels == 3, "luma needs 1 or 3 channels");
  for (std::size_t i = 0; i < hw; ++i)
    out[i] = 0.299 * f.data[i] + 0.587 * f.data[hw + i] + 0.114 * f.data[2 * hw + i];
  return out;
}

MotionField estimate_motion(const Frame& cur, const Frame& ref, int block, int search) {
  require(cur.same_dims(ref), "estimate_motion: frame dimensions differ");
  require(block >= 1 && block <= cur.width && block <= cur.height,
          "estimate_motion: block " + std::to_string(block) + " exceeds frame " +
              std::to_string(cur.width) + "x" + std::to_string(cur.height));
  require(search >= 0 && search <= std::numeric_limits<std::int16_t>::max(),
          "estimate_motion: bad search range");
  const int W = cur.width, H = cur.height;
  const auto lc = luma_fixed(cur);
  const auto lr = luma_fixed(ref);

  std::vector<MotionVector> order;
  for (int dy = -search; dy <= search; ++dy)
    for (int dx = -search; dx <= search; ++dx)
      order.push_back({static_cast<std::int16_t>(dx), static_cast<std::int16_t>(dy)});
  std::stable_sort(order.begin(), order.end(), [](MotionVector a, MotionVector b) {
    const int ma = std::abs(a.dx) + std::abs(a.dy), mb = std::abs(b.dx) + std::abs(b.dy);
    if (ma != mb) return ma < mb;
    if (a.dy != b.dy) return a.dy < b.dy;
    return a.dx < b.dx;
  });

  MotionField mv = MotionField::zeros(W, H, block);
  for (int by = 0; by < mv.grid_h; ++by) {
    for (int bx = 0; bx < mv.grid_w; ++bx) {
      const int y0 = by * block, x0 = bx * block;
      const int y1 = std::min(y0 + block, H), x1 = std::min(x0 + block, W);
      std::int64_t best = std::numeric_limits<std::int64_t>::max();
      MotionVector best_v{};
      for (const MotionVector v : order) {
        std::int64_t sad = 0;
        for (int y = y0; y < y1 && sad < best; ++y) {
          const int sy = std::clamp(y + v.dy, 0, H - 1);
          const std::int32_t* rrow = lr.data() + static_cast<std::size_t>(sy) * W;
          const std::int32_t* crow = lc.data() + static_cast<std::size_t>(y) * W;
          for (int x = x0; x < x1; ++x) {
            const int sx = std::clamp(x + v.dx, 0, W - 1);
            sad += std::abs(crow[x] - rrow[sx]);
          }
        }
        if (sad < best) {
          best = sad;
          best_v = v;
        }
      }
      mv.at(by, bx) = best_v;
    }
  }
  return mv;
}

template <typename T>
Tensor<T> densify_motion(const MotionField& mv, int height, int width) {
  check_field(mv, width, height);
  Tensor<T> out(Shape{1, 2, height, width});
  const double unit = 1.0 / static_cast<double>(1 << mv.subpel_shift);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const MotionVector v = mv.at(y / mv.block_size, x / mv.block_size);
      out.at(0, 0, y, x) = static_cast<T>(v.dx * unit);
      out.at(0, 1, y, x) = static_cast<T>(v.dy * unit);
    }
  return out;
}

template Tensor<float> densify_motion(const MotionField&, int, int);
template Tensor<double> densify_motion(const MotionField&, int, int);

Frame mc_predict(const Frame& ref, const MotionField& mv) {
  check_field(mv, ref.width, ref.height);
  const int W = ref.width, H = ref.height;
  const double unit = 1.0 / static_cast<double>(1 << mv.subpel_shift);
  Frame out(W, H, ref.channels);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const MotionVector v = mv.at(y / mv.block_size, x / mv.block_size);
      const double px = std::clamp(x + v.dx * unit, 0.0, static_cast<double>(W - 1));
      const double py = std::clamp(y + v.dy * unit, 0.0, static_cast<double>(H - 1));
      const int x0 = static_cast<int>(std::floor(px)), y0 = static_cast<int>(std::floor(py));
      const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
      const double fx = px - x0, fy = py - y0;
      for (int c = 0; c < ref.channels; ++c) {
        if (fx == 0.0 && fy == 0.0) {
          out.at(c, y, x) = ref.at(c, y0, x0);
        } else {
          const double top = (1 - fx) * ref.at(c, y0, x0) + fx * ref.at(c, y0, x1);
          const double bot = (1 - fx) * ref.at(c, y1, x0) + fx * ref.at(c, y1, x1);
          out.at(c, y, x) = static_cast<float>((1 - fy) * top + fy * bot);
        }
      }
    }
  }
  return out;
}

ResidualMap compute_residual(const Frame& cur, const Frame& ref, const MotionField& mv) {
  require(cur.same_dims(ref), "compute_residual: frame dimensions differ");
  const auto lc = luma(cur);
  const auto lp = luma(mc_predict(ref, mv));
  ResidualMap m = ResidualMap::zeros(cur.width, cur.height);
  for (std::size_t i = 0; i < lc.size(); ++i)
    m.values[i] = static_cast<float>(std::clamp(std::abs(lc[i] - lp[i]), 0.0, 1.0));
  return m;
}

ResidualMap quantize_map(const ResidualMap& map, float scale) {
  require(scale > 0.0f, "residual scale must be positive");
  ResidualMap out = map;
  out.scale = scale;
  for (auto& v : out.values) {
    const float b = static_cast<float>(std::lround(std::clamp(v / scale, 0.0f, 1.0f) * 255.0f));
    v = b / 255.0f * scale;
  }
  return out;
}

std::int32_t round_half_away(double v) {
  return static_cast<std::int32_t>(v < 0 ? -std::floor(-v + 0.5) : std::floor(v + 0.5));
}

std::vector<double> quantize_residual(std::span<const double> residual, double q) {
  require(q > 0.0, "quantisation step must be positive");
  std::vector<double> out(residual.size());
  for (std::size_t i = 0; i < residual.size(); ++i)
    out[i] = round_half_away(residual[i] / q) * q;
  return out;
}

int intra_step(int q) { return std::max(1, q / 2); }

Frame downsample_bicubic(const Frame& hr, int factor) {
  require(factor >= 1, "downsample factor must be >= 1");
  require(hr.width % factor == 0 && hr.height % factor == 0,
          "HR dimensions " + std::to_string(hr.width) + "x" + std::to_string(hr.height) +
              " are not divisible by " + std::to_string(factor));
  const int W = hr.width / factor, H = hr.height / factor;
  const Taps tx = reduction_taps(hr.width, factor);
  const Taps ty = reduction_taps(hr.height, factor);
  Frame out(W, H, hr.channels);
  std::vector<double> rows(static_cast<std::size_t>(hr.height) * W);
  for (int c = 0; c < hr.channels; ++c) {
    for (int y = 0; y < hr.height; ++y)
      for (int x = 0; x < W; ++x) {
        double s = 0.0;
        for (int k = 0; k < tx.count; ++k) {
          const std::size_t i = static_cast<std::size_t>(x) * tx.count + k;
          s += tx.weight[i] * hr.at(c, y, tx.index[i]);
        }
        rows[static_cast<std::size_t>(y) * W + x] = s;
      }
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double s = 0.0;
        for (int k = 0; k < ty.count; ++k) {
          const std::size_t i = static_cast<std::size_t>(y) * ty.count + k;
          s += ty.weight[i] * rows[static_cast<std::size_t>(ty.index[i]) * W + x];
        }
        out.at(c, y, x) = static_cast<float>(s);
      }
  }
  return quantize8(out);
}

EncodedStream encode_lr(std::span<const Frame> lr_source, const EncoderConfig& cfg) {
  require(cfg.q >= 1 && cfg.q <= 255, "q must be in [1, 255] (1/255 units)");
  require(!lr_source.empty(), "encode: empty stream");
  const Frame& f0 = lr_source.front();
  require(f0.width <= 0xFFFF && f0.height <= 0xFFFF, "encode: frame too large for CDAP");
  const auto types = assign_frame_types(static_cast<int>(lr_source.size()), cfg.gop);

  EncodedStream out;
  out.sidecar.lr_width = f0.width;
  out.sidecar.lr_height = f0.height;
  out.sidecar.block_size = cfg.block;
  out.sidecar.subpel_shift = 0;
  out.payload.width = f0.width;
  out.payload.height = f0.height;
  out.payload.channels = f0.channels;

  Plane8 prev;
  for (std::size_t t = 0; t < lr_source.size(); ++t) {
    const Frame& src_f = lr_source[t];
    require(src_f.same_dims(f0), "encode: frame " + std::to_string(t) + " changes dimensions");
    const Plane8 src = to_plane8(src_f);
    Plane8 dec{src.width, src.height, src.channels, std::vector<std::uint8_t>(src.px.size())};
    std::vector<std::int16_t> levels(src.px.size());
    PriorRecord rec;
    rec.frame_type = types[t];
    int step = cfg.q;
    if (types[t] == FrameType::I) {
      step = intra_step(cfg.q);
      for (std::size_t i = 0; i < src.px.size(); ++i) {
        const int lv = round_half_away(static_cast<double>(src.px[i]) / step);
        levels[i] = static_cast<std::int16_t>(lv);
        dec.px[i] = clamp_byte(lv * step);
      }
      rec.residual = ResidualMap::zeros(src.width, src.height);
    } else {
      const Frame ref_f = to_frame(prev);
      MotionField mv = estimate_motion(src_f, ref_f, cfg.block, cfg.search);
      const Plane8 pred = predict8(prev, mv);
      for (std::size_t i = 0; i < src.px.size(); ++i) {
        const int r = static_cast<int>(src.px[i]) - static_cast<int>(pred.px[i]);
        const int lv = round_half_away(static_cast<double>(r) / step);
        levels[i] = static_cast<std::int16_t>(lv);
        dec.px[i] = clamp_byte(static_cast<int>(pred.px[i]) + lv * step);
      }
      rec.residual = quantize_map(compute_residual(to_frame(dec), ref_f, mv));
      rec.motion = std::move(mv);
    }
    out.sidecar.records.push_back(std::move(rec));
    out.payload.steps.push_back(static_cast<std::uint8_t>(step));
    out.payload.levels.push_back(std::move(levels));
    out.lr_source.push_back(quantize8(src_f));
    out.decoded.push_back(to_frame(dec));
    prev = std::move(dec);
  }
  return out;
}

EncodedStream encode_stream(std::span<const Frame> hr_frames, const EncoderConfig& cfg) {
  require(cfg.scale >= 1, "scale must be >= 1");
  std::vector<Frame> lr;
  lr.reserve(hr_frames.size());
  for (const Frame& f : hr_frames) lr.push_back(downsample_bicubic(f, cfg.scale));
  return encode_lr(lr, cfg);
}

std::vector<Frame> decode_stream(const Sidecar& sidecar, const TexturePayload& payload) {
  require(payload.levels.size() == sidecar.records.size() &&
              payload.steps.size() == sidecar.records.size(),
          "decode: sidecar and payload frame counts differ");
  require(payload.width == sidecar.lr_width && payload.height == sidecar.lr_height,
          "decode: sidecar and payload dimensions differ");
  const std::size_t n = static_cast<std::size_t>(payload.width) * payload.height * payload.channels;
  std::vector<Frame> out;
  Plane8 prev;
  for (std::size_t t = 0; t < sidecar.records.size(); ++t) {
    const PriorRecord& rec = sidecar.records[t];
    const auto& levels = payload.levels[t];
    require(levels.size() == n, "decode: payload frame " + std::to_string(t) + " has wrong size");
    const int step = payload.steps[t];
    Plane8 dec{payload.width, payload.height, payload.channels, std::vector<std::uint8_t>(n)};
    if (rec.frame_type == FrameType::I) {
      for (std::size_t i = 0; i < n; ++i) dec.px[i] = clamp_byte(levels[i] * step);
    } else {
      require(t > 0, "decode: stream starts with a P-frame");
      require(rec.motion.has_value(), "decode: P-frame without motion");
      const Plane8 pred = predict8(prev, *rec.motion);
      for (std::size_t i = 0; i < n; ++i)
        dec.px[i] = clamp_byte(static_cast<int>(pred.px[i]) + levels[i] * step);
    }
    out.push_back(to_frame(dec));
    prev = std::move(dec);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CDAP v1

namespace {
constexpr std::uint16_t kSidecarVersion = 1;
constexpr std::uint16_t kPayloadVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_sidecar(const Sidecar& s) {
  require(s.lr_width >= 1 && s.lr_width <= 0xFFFF && s.lr_height >= 1 && s.lr_height <= 0xFFFF,
          "sidecar: bad frame dimensions");
  require(s.block_size >= 1 && s.block_size <= 255, "sidecar: bad block size");
  require(s.subpel_shift >= 0 && s.subpel_shift <= 8, "sidecar: bad subpel shift");
  ByteWriter w;
  w.str("CDAP");
  w.u16(kSidecarVersion);
  w.u32(static_cast<std::uint32_t>(s.records.size()));
  w.u16(static_cast<std::uint16_t>(s.lr_width));
  w.u16(static_cast<std::uint16_t>(s.lr_height));
  w.u8(static_cast<std::uint8_t>(s.block_size));
  w.u8(static_cast<std::uint8_t>(s.subpel_shift));
  w.u16(0);
  const std::size_t hw = static_cast<std::size_t>(s.lr_width) * s.lr_height;
  for (const PriorRecord& r : s.records) {
    w.u8(static_cast<std::uint8_t>(r.frame_type));
    if (r.frame_type != FrameType::P) continue;
    require(r.motion.has_value(), "sidecar: P record without motion");
    const MotionField& mv = *r.motion;
    check_field(mv, s.lr_width, s.lr_height);
    require(mv.block_size == s.block_size && mv.subpel_shift == s.subpel_shift,
            "sidecar: motion field geometry differs from the stream header");
    for (const MotionVector v : mv.vectors) {
      w.i16(v.dx);
      w.i16(v.dy);
    }
    require(r.residual.values.size() == hw, "sidecar: residual map has wrong size");
    require(r.residual.scale > 0.0f, "sidecar: residual scale must be positive");
    for (float v : r.residual.values) {
      w.u8(static_cast<std::uint8_t>(
          std::lround(std::clamp(v / r.residual.scale, 0.0f, 1.0f) * 255.0f)));
    }
    w.f32(r.residual.scale);
  }
  return w.bytes();
}

Sidecar decode_sidecar(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || r.str(4) != "CDAP") throw ParseError("bad CDAP magic", 0);
  const std::size_t vpos = r.offset();
  const std::uint16_t version = r.u16();
  if (version != kSidecarVersion)
    throw ParseError("unsupported CDAP version " + std::to_string(version), vpos);
  Sidecar s;
  const std::uint32_t count = r.u32();
  const std::size_t dpos = r.offset();
  s.lr_width = r.u16();
  s.lr_height = r.u16();
  if (s.lr_width == 0 || s.lr_height == 0) throw ParseError("zero frame dimension", dpos);
  const std::size_t bpos = r.offset();
  s.block_size = r.u8();
  if (s.block_size == 0) throw ParseError("zero block size", bpos);
  const std::size_t spos = r.offset();
  s.subpel_shift = r.u8();
  if (s.subpel_shift > 8) throw ParseError("subpel shift out of range", spos);
  const std::size_t rpos = r.offset();
  if (r.u16() != 0) throw ParseError("reserved field must be zero", rpos);

  const int gw = ceil_div(s.lr_width, s.block_size), gh = ceil_div(s.lr_height, s.block_size);
  const std::size_t hw = static_cast<std::size_t>(s.lr_width) * s.lr_height;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::size_t tpos = r.offset();
    const std::uint8_t type = r.u8();
    if (type > 1) throw ParseError("unknown frame type " + std::to_string(type), tpos);
    PriorRecord rec;
    rec.frame_type = static_cast<FrameType>(type);
    if (rec.frame_type == FrameType::I) {
      rec.residual = ResidualMap::zeros(s.lr_width, s.lr_height);
    } else {
      MotionField mv = MotionField::zeros(s.lr_width, s.lr_height, s.block_size, s.subpel_shift);
      for (int i = 0; i < gw * gh; ++i) {
        mv.vectors[i].dx = r.i16();
        mv.vectors[i].dy = r.i16();
      }
      auto raw = r.raw(hw);
      const std::size_t fpos = r.offset();
      const float scale = r.f32();
      if (!(scale > 0.0f) || !std::isfinite(scale))
        throw ParseError("residual scale must be positive and finite", fpos);
      ResidualMap m = ResidualMap::zeros(s.lr_width, s.lr_height);
      m.scale = scale;
      for (std::size_t i = 0; i < hw; ++i) m.values[i] = static_cast<float>(raw[i]) / 255.0f * scale;
      rec.motion = std::move(mv);
      rec.residual = std::move(m);
    }
    s.records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw ParseError("trailing bytes after last frame", r.offset());
  return s;
}

void write_sidecar(const Sidecar& sidecar, const std::filesystem::path& path) {
  write_file(path, encode_sidecar(sidecar));
}

Sidecar read_sidecar(const std::filesystem::path& path) { return decode_sidecar(read_file(path)); }

// ---------------------------------------------------------------------------
// CDAB v1: "CDAB", u16 version, u32 frames, u16 width, u16 height, u8 channels,
// then per frame u8 step and C*H*W i16 levels.

std::vector<std::uint8_t> encode_payload(const TexturePayload& p) {
  require(p.levels.size() == p.steps.size(), "payload: steps/levels count mismatch");
  ByteWriter w;
  w.str("CDAB");
  w.u16(kPayloadVersion);
  w.u32(static_cast<std::uint32_t>(p.levels.size()));
  w.u16(static_cast<std::uint16_t>(p.width));
  w.u16(static_cast<std::uint16_t>(p.height));
  w.u8(static_cast<std::uint8_t>(p.channels));
  const std::size_t n = static_cast<std::size_t>(p.width) * p.height * p.channels;
  for (std::size_t t = 0; t < p.levels.size(); ++t) {
    require(p.levels[t].size() == n, "payload: frame has wrong size");
    w.u8(p.steps[t]);
    for (std::int16_t v : p.levels[t]) w.i16(v);
  }
  return w.bytes();
}

TexturePayload decode_payload(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || r.str(4) != "CDAB") throw ParseError("bad CDAB magic", 0);
  const std::size_t vpos = r.offset();
  if (r.u16() != kPayloadVersion) throw ParseError("unsupported CDAB version", vpos);
  TexturePayload p;
  const std::uint32_t count = r.u32();
  p.width = r.u16();
  p.height = r.u16();
  const std::size_t cpos = r.offset();
  p.channels = r.u8();
  if (p.channels != 1 && p.channels != 3) throw ParseError("channels must be 1 or 3", cpos);
  const std::size_t n = static_cast<std::size_t>(p.width) * p.height * p.channels;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::size_t spos = r.offset();
    const std::uint8_t step = r.u8();
    if (step == 0) throw ParseError("zero quantisation step", spos);
    std::vector<std::int16_t> lv(n);
    for (auto& v : lv) v = r.i16();
    p.steps.push_back(step);
    p.levels.push_back(std::move(lv));
  }
  if (r.remaining() != 0) throw ParseError("trailing bytes after last frame", r.offset());
  return p;
}

void write_payload(const TexturePayload& payload, const std::filesystem::path& path) {
  write_file(path, encode_payload(payload));
}

TexturePayload read_payload(const std::filesystem::path& path) {
  return decode_payload(read_file(path));
}

}  // namespace cdavsr::codec
