#include "cdavsr/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "cdavsr/binary_io.hpp"
#include "cdavsr/image_io.hpp"

namespace cdavsr::training {

void TrainConfig::validate() const {
  require(lr_init > 0 && beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1 && epsilon > 0 &&
              lr_min > 0,
          "train config: learning rates, betas and epsilon must be positive (betas < 1)");
  require(iters >= 0 && batch >= 1, "train config: iters must be >= 0 and batch >= 1");
  require(clip_len >= 2, "train config: clip_len must be >= 2");
  require(crop >= block && block >= 1 && crop % block == 0,
          "train config: crop " + std::to_string(crop) + " must be a multiple of block " +
              std::to_string(block));
  require(gop >= 1 && q >= 1 && q <= 255 && search >= 0, "train config: bad encoder settings");
}

namespace {

template <typename V>
V parse_number(const std::string& key, const std::string& value, std::size_t offset) {
  V out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ParseError("config key '" + key + "': cannot parse '" + value + "'", offset);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

void parse_train_config(const std::string& text, TrainConfig& t, ModelConfig& m) {
  std::size_t offset = 0;
  std::istringstream in(text);
  std::string raw;
  while (std::getline(in, raw)) {
    const std::size_t line_offset = offset;
    offset += raw.size() + 1;
    std::string line = raw.substr(0, raw.find('#'));
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config line has no '='", line_offset);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    auto dbl = [&] { return parse_number<double>(key, val, line_offset); };
    auto i32 = [&] { return parse_number<int>(key, val, line_offset); };
    if (key == "lr_init") t.lr_init = dbl();
    else if (key == "beta1") t.beta1 = dbl();
    else if (key == "beta2") t.beta2 = dbl();
    else if (key == "iters") t.iters = i32();
    else if (key == "batch") t.batch = i32();
    else if (key == "clip_len") t.clip_len = i32();
    else if (key == "crop") t.crop = i32();
    else if (key == "epsilon") t.epsilon = dbl();
    else if (key == "lr_min") t.lr_min = dbl();
    else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, val, line_offset);
    else if (key == "gop") t.gop = i32();
    else if (key == "q") t.q = i32();
    else if (key == "block") t.block = i32();
    else if (key == "search") t.search = i32();
    else if (key == "channels") m.channels = i32();
    else if (key == "extract_blocks") m.extract_blocks = i32();
    else if (key == "m_blocks") m.m_blocks = i32();
    else if (key == "n_blocks") m.n_blocks = i32();
    else if (key == "groups") m.groups = i32();
    else if (key == "scale") m.scale = i32();
    else if (key == "augment") {
      if (val == "true" || val == "1") t.augment = true;
      else if (val == "false" || val == "0") t.augment = false;
      else throw ParseError("config key 'augment': expected true or false, got '" + val + "'", line_offset);
    }
    else if (key == "head") {
      try {
        m.head = parse_head(val);
      } catch (const ContractViolation& e) {
        throw ParseError(e.what(), line_offset);
      }
    } else if (key == "variant") {
      try {
        m.variant = parse_variant(val);
      } catch (const ContractViolation& e) {
        throw ParseError(e.what(), line_offset);
      }
    } else {
      throw ParseError("unknown config key '" + key + "'", line_offset);
    }
  }
}

void load_train_config(const std::filesystem::path& path, TrainConfig& t, ModelConfig& m) {
  const auto bytes = read_file(path);
  parse_train_config(std::string(bytes.begin(), bytes.end()), t, m);
}

// ---------------------------------------------------------------------------
// Data

namespace {

struct Wave {
  double kx, ky, phase, amp;
  double color[3];
};

struct Blob {
  double x, y, inv_r2, amp;
  double color[3];
};

struct Background {
  std::vector<Wave> waves;
  std::vector<Blob> blobs;

  void eval(double x, double y, double out[3]) const {
    for (int c = 0; c < 3; ++c) out[c] = 0.5;
    for (const Wave& w : waves) {
      const double s = w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
      for (int c = 0; c < 3; ++c) out[c] += s * w.color[c];
    }
    for (const Blob& b : blobs) {
      const double dx = x - b.x, dy = y - b.y;
      const double g = b.amp * std::exp(-(dx * dx + dy * dy) * b.inv_r2);
      for (int c = 0; c < 3; ++c) out[c] += g * b.color[c];
    }
  }
};

struct Foreground {
  double x0, y0, vx, vy, half_w, half_h, period;
  double a[3], b[3];
};

Background random_background(Rng& rng, double extent) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Background bg;
  for (int k = 0; k < 10; ++k) {
    const double f = 0.01 + 0.11 * u(rng);  // cycles per HR pixel
    const double ang = 2.0 * std::numbers::pi * u(rng);
    Wave w{2.0 * std::numbers::pi * f * std::cos(ang), 2.0 * std::numbers::pi * f * std::sin(ang),
           2.0 * std::numbers::pi * u(rng), 0.06 + 0.06 * u(rng), {}};
    for (double& c : w.color) c = 0.4 + 0.6 * u(rng);
    bg.waves.push_back(w);
  }
  for (int k = 0; k < 24; ++k) {
    const double r = 4.0 + 14.0 * u(rng);
    Blob b{extent * (2.0 * u(rng) - 0.5), extent * (2.0 * u(rng) - 0.5), 1.0 / (2.0 * r * r),
           (u(rng) < 0.5 ? -1.0 : 1.0) * (0.15 + 0.2 * u(rng)), {}};
    for (double& c : b.color) c = 0.3 + 0.7 * u(rng);
    bg.blobs.push_back(b);
  }
  return bg;
}

}  // namespace

Dataset make_synthetic_dataset(const SyntheticOptions& o) {
  require(o.clips >= 1 && o.frames >= 1 && o.lr_size >= 8 && o.scale >= 1,
          "synthetic dataset: bad options");
  Rng rng(o.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int S = o.lr_size * o.scale;
  const double cx = 0.5 * S, cy = 0.5 * S;
  std::vector<std::vector<Frame>> clips;
  for (int ci = 0; ci < o.clips; ++ci) {
    const Background bg = random_background(rng, S);
    const double speed = o.max_speed * o.scale * (0.4 + 0.6 * u(rng));
    const double dir = 2.0 * std::numbers::pi * u(rng);
    const double vx = speed * std::cos(dir), vy = speed * std::sin(dir);
    const double omega = o.max_rotation * (2.0 * u(rng) - 1.0) * std::numbers::pi / 180.0;

    Foreground fg{};
    fg.half_w = S * (0.1 + 0.08 * u(rng));
    fg.half_h = S * (0.1 + 0.08 * u(rng));
    const double fspeed = o.max_speed * o.scale * (0.5 + 0.7 * u(rng));
    const double fdir = 2.0 * std::numbers::pi * u(rng);
    fg.vx = fspeed * std::cos(fdir);
    fg.vy = fspeed * std::sin(fdir);
    const double mid = 0.5 * (o.frames - 1);
    fg.x0 = cx + S * 0.15 * (2.0 * u(rng) - 1.0) - fg.vx * mid;
    fg.y0 = cy + S * 0.15 * (2.0 * u(rng) - 1.0) - fg.vy * mid;
    fg.period = 6.0 + 10.0 * u(rng);
    for (int c = 0; c < 3; ++c) {
      fg.a[c] = 0.1 + 0.3 * u(rng);
      fg.b[c] = 0.6 + 0.35 * u(rng);
    }

    std::vector<Frame> frames;
    for (int t = 0; t < o.frames; ++t) {
      Frame f(S, S, 3);
      const double th = omega * t, cs = std::cos(th), sn = std::sin(th);
      const double fx = fg.x0 + fg.vx * t, fy = fg.y0 + fg.vy * t;
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
          double acc[3] = {0, 0, 0};
          for (int sy = 0; sy < 2; ++sy)
            for (int sx = 0; sx < 2; ++sx) {
              const double px = x + 0.25 + 0.5 * sx, py = y + 0.25 + 0.5 * sy;
              double v[3];
              const double lx = px - fx, ly = py - fy;
              if (std::abs(lx) <= fg.half_w && std::abs(ly) <= fg.half_h) {
                const bool on = std::fmod(std::floor((lx + ly + 1000.0 * fg.period) / fg.period) +
                                              std::floor((lx - ly + 1000.0 * fg.period) / fg.period),
                                          2.0) == 0.0;
                for (int c = 0; c < 3; ++c) v[c] = on ? fg.b[c] : fg.a[c];
              } else {
                // Content moves by +v and rotates by +th about the centre.
                const double rx = px - cx - vx * t, ry = py - cy - vy * t;
                bg.eval(cx + cs * rx + sn * ry, cy - sn * rx + cs * ry, v);
              }
              for (int c = 0; c < 3; ++c) acc[c] += v[c];
            }
          for (int c = 0; c < 3; ++c) f.at(c, y, x) = std::clamp(0.25f * static_cast<float>(acc[c]), 0.0f, 1.0f);
        }
      frames.push_back(quantize8(f));
    }
    clips.push_back(std::move(frames));
  }
  return dataset_from_hr(std::move(clips), o.scale);
}

Dataset dataset_from_hr(std::vector<std::vector<Frame>> hr_clips, int scale) {
  Dataset ds;
  ds.scale = scale;
  for (auto& hr : hr_clips) {
    Clip c;
    for (const Frame& f : hr) c.lr.push_back(codec::downsample_bicubic(f, scale));
    c.hr = std::move(hr);
    ds.clips.push_back(std::move(c));
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& root, int scale) {
  if (!std::filesystem::is_directory(root)) throw IoError(root.string() + " is not a directory");
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<std::vector<Frame>> clips;
  for (const auto& d : dirs) clips.push_back(read_frame_dir(d));
  if (clips.empty()) throw IoError(root.string() + " contains no clip directories");
  return dataset_from_hr(std::move(clips), scale);
}

Frame crop_frame(const Frame& f, int x0, int y0, int w, int h) {
  require(x0 >= 0 && y0 >= 0 && w >= 1 && h >= 1 && x0 + w <= f.width && y0 + h <= f.height,
          "crop outside the frame");
  Frame out(w, h, f.channels);
  for (int c = 0; c < f.channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = f.at(c, y0 + y, x0 + x);
  return out;
}

Frame flip_horizontal(const Frame& f) {
  Frame out(f.width, f.height, f.channels);
  for (int c = 0; c < f.channels; ++c)
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x) out.at(c, y, x) = f.at(c, y, f.width - 1 - x);
  return out;
}

Frame rotate90(const Frame& f, int k) {
  k = ((k % 4) + 4) % 4;
  Frame cur = f;
  for (int i = 0; i < k; ++i) {
    Frame out(cur.height, cur.width, cur.channels);
    for (int c = 0; c < cur.channels; ++c)
      for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) out.at(c, y, x) = cur.at(c, x, cur.width - 1 - y);
    cur = std::move(out);
  }
  return cur;
}

void append_sample(ClipBatch& batch, const Dataset& ds, const TrainConfig& cfg,
                   const Augmentation& a) {
  require(a.clip >= 0 && a.clip < static_cast<int>(ds.clips.size()), "sample: bad clip index");
  const Clip& clip = ds.clips[a.clip];
  require(static_cast<int>(clip.lr.size()) >= a.start + cfg.clip_len,
          "sample: clip " + std::to_string(a.clip) + " has " + std::to_string(clip.lr.size()) +
              " frames, need " + std::to_string(a.start + cfg.clip_len));
  const int s = ds.scale;
  std::vector<Frame> lr, hr;
  for (int t = 0; t < cfg.clip_len; ++t) {
    Frame l = crop_frame(clip.lr[a.start + t], a.x, a.y, cfg.crop, cfg.crop);
    Frame h = crop_frame(clip.hr[a.start + t], a.x * s, a.y * s, cfg.crop * s, cfg.crop * s);
    if (a.hflip) {
      l = flip_horizontal(l);
      h = flip_horizontal(h);
    }
    lr.push_back(rotate90(l, a.rot));
    hr.push_back(rotate90(h, a.rot));
  }
  codec::EncoderConfig ec;
  ec.scale = s;
  ec.gop = cfg.gop;
  ec.block = cfg.block;
  ec.search = cfg.search;
  ec.q = cfg.q;
  codec::EncodedStream enc = codec::encode_lr(lr, ec);
  batch.lr.push_back(std::move(enc.decoded));
  batch.hr.push_back(std::move(hr));
  batch.priors.push_back(std::move(enc.sidecar.records));
  batch.aug.push_back(a);
}

ClipCycle::ClipCycle(int clips, Rng& rng) : order_(static_cast<std::size_t>(clips)) {
  require(clips >= 1, "ClipCycle: no clips");
  std::iota(order_.begin(), order_.end(), 0);
  std::shuffle(order_.begin(), order_.end(), rng);
}

int ClipCycle::next() {
  const int c = order_[pos_];
  pos_ = (pos_ + 1) % order_.size();
  return c;
}

ClipBatch sample_batch(const Dataset& ds, const TrainConfig& cfg, Rng& rng, ClipCycle* cycle) {
  require(!ds.clips.empty(), "sample_batch: empty dataset");
  ClipBatch b;
  for (int i = 0; i < cfg.batch; ++i) {
    Augmentation a;
    a.clip = cycle ? cycle->next()
                   : std::uniform_int_distribution<int>(0, static_cast<int>(ds.clips.size()) - 1)(rng);
    require(a.clip >= 0 && a.clip < static_cast<int>(ds.clips.size()),
            "sample_batch: clip index out of range");
    const Clip& c = ds.clips[a.clip];
    const int len = static_cast<int>(c.lr.size());
    require(len >= cfg.clip_len, "sample_batch: clip " + std::to_string(a.clip) + " has " +
                                     std::to_string(len) + " frames, clip_len is " +
                                     std::to_string(cfg.clip_len));
    require(c.lr[0].width >= cfg.crop && c.lr[0].height >= cfg.crop,
            "sample_batch: crop larger than the LR frames");
    a.start = std::uniform_int_distribution<int>(0, len - cfg.clip_len)(rng);
    a.x = std::uniform_int_distribution<int>(0, c.lr[0].width - cfg.crop)(rng);
    a.y = std::uniform_int_distribution<int>(0, c.lr[0].height - cfg.crop)(rng);
    if (cfg.augment) {
      a.hflip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
      a.rot = std::uniform_int_distribution<int>(0, 3)(rng);
    }
    append_sample(b, ds, cfg, a);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Optimisation

double cosine_lr(int iter, int total, double lr_init, double lr_min) {
  require(total >= 1 && iter >= 0 && iter <= total, "cosine_lr: iter outside [0, total]");
  return lr_min + 0.5 * (lr_init - lr_min) *
                      (1.0 + std::cos(std::numbers::pi * static_cast<double>(iter) / total));
}

template <typename T>
void adam_step(ParamSet<T>& params, const std::map<std::string, Tensor<T>>& grads,
               AdamState<T>& st, double lr, double beta1, double beta2, double eps) {
  ++st.step;
  const double c1 = 1.0 - std::pow(beta1, st.step);
  const double c2 = 1.0 - std::pow(beta2, st.step);
  for (const auto& [name, g] : grads) {
    require(params.contains(name), "adam_step: gradient for unknown parameter " + name);
    if (!params.trainable(name)) continue;
    Tensor<T>& w = params.mutable_at(name);
    require(w.shape() == g.shape(), "adam_step: gradient " + g.shape().str() +
                                        " does not match parameter " + name + " " +
                                        w.shape().str());
    auto [mit, fresh] = st.m.try_emplace(name, Tensor<T>(w.shape()));
    auto vit = st.v.try_emplace(name, Tensor<T>(w.shape())).first;
    (void)fresh;
    Tensor<T>& m = mit->second;
    Tensor<T>& v = vit->second;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = beta1 * m[i] + (1.0 - beta1) * gi;
      const double vi = beta2 * v[i] + (1.0 - beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      w[i] = static_cast<T>(w[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + eps));
    }
  }
}

template <typename T>
Var<T> clip_loss(const BoundParams<T>& p, const ModelConfig& cfg, const ClipBatch& batch,
                 T epsilon) {
  require(!batch.lr.empty(), "clip_loss: empty batch");
  const std::size_t B = batch.lr.size();
  const std::size_t frames = batch.lr[0].size();
  require(frames >= 1, "clip_loss: empty clip");
  std::optional<FeatureState<T>> state;
  Var<T> total;
  for (std::size_t t = 0; t < frames; ++t) {
    std::vector<Tensor<T>> lr, hr, mv, res;
    const codec::FrameType type = t == 0 ? codec::FrameType::I : batch.priors[0][t].frame_type;
    for (std::size_t b = 0; b < B; ++b) {
      require(batch.lr[b].size() == frames && batch.priors[b].size() == frames,
              "clip_loss: ragged batch");
      require(t == 0 || batch.priors[b][t].frame_type == type,
              "clip_loss: batch elements disagree on the frame type at t=" + std::to_string(t));
      lr.push_back(batch.lr[b][t].template to_tensor<T>());
      hr.push_back(batch.hr[b][t].template to_tensor<T>());
      if (type == codec::FrameType::P) {
        mv.push_back(motion_input<T>(cfg, batch.priors[b][t], batch.lr[b][t], batch.lr[b][t - 1]));
        res.push_back(residual_input<T>(batch.priors[b][t].residual));
      }
    }
    StepInputs<T> in;
    in.lr = Var<T>(stack_batch<T>(lr));
    in.type = type;
    if (type == codec::FrameType::P) {
      in.dense_mv = Var<T>(stack_batch<T>(mv));
      in.residual = Var<T>(stack_batch<T>(res));
    }
    StepOutputs<T> out = forward_step(p, cfg, state, in);
    state = out.state;
    Var<T> l = ops::charbonnier(out.sr, Var<T>(stack_batch<T>(hr)), epsilon);
    total = total.defined() ? ops::add(total, l) : l;
  }
  return ops::scale(total, T(1) / static_cast<T>(frames));
}

namespace {

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (const T v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

TrainResult train(const Dataset& ds, const TrainConfig& cfg, const ModelConfig& model,
                  ParamSet<float> init, const ProgressFn& progress) {
  cfg.validate();
  model.validate();
  TrainResult r;
  r.params = std::move(init);
  AdamState<float> adam;
  Rng rng(cfg.seed);
  ClipCycle cycle(static_cast<int>(ds.clips.size()), rng);
  for (int it = 0; it < cfg.iters; ++it) {
    const ClipBatch batch = sample_batch(ds, cfg, rng, &cycle);
    Tape<float> tape;
    const BoundParams<float> bound = BoundParams<float>::on_tape(tape, r.params);
    const Var<float> loss = clip_loss(bound, model, batch, static_cast<float>(cfg.epsilon));
    const double value = loss.value()[0];
    if (!std::isfinite(value)) {
      std::string culprit = "(none)";
      for (const auto& [name, e] : r.params)
        if (!all_finite(e.value)) {
          culprit = name;
          break;
        }
      throw TrainingDiverged(it, culprit,
                             "non-finite loss at iteration " + std::to_string(it) +
                                 "; first non-finite parameter: " + culprit);
    }
    tape.backward(loss);
    const auto grads = bound.grads();
    for (const auto& [name, g] : grads)
      if (!all_finite(g))
        throw TrainingDiverged(it, name,
                               "non-finite gradient at iteration " + std::to_string(it) +
                                   " in parameter " + name);
    const double lr = cosine_lr(it, cfg.iters, cfg.lr_init, cfg.lr_min);
    adam_step(r.params, grads, adam, lr, cfg.beta1, cfg.beta2);
    r.losses.push_back(value);
    r.lrs.push_back(lr);
    if (progress) progress(it, value, lr);
  }
  return r;
}

void write_loss_csv(const TrainResult& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "iter,loss,lr\n";
  out.precision(9);
  for (std::size_t i = 0; i < r.losses.size(); ++i)
    out << i << ',' << r.losses[i] << ',' << r.lrs[i] << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

template void adam_step(ParamSet<float>&, const std::map<std::string, Tensor<float>>&,
                        AdamState<float>&, double, double, double, double);
template void adam_step(ParamSet<double>&, const std::map<std::string, Tensor<double>>&,
                        AdamState<double>&, double, double, double, double);
template Var<float> clip_loss(const BoundParams<float>&, const ModelConfig&, const ClipBatch&,
                              float);
template Var<double> clip_loss(const BoundParams<double>&, const ModelConfig&, const ClipBatch&,
                               double);

}  // namespace cdavsr::training
