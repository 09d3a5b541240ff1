#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "cdavsr/eval_bench.hpp"
#include "cdavsr/grad_suite.hpp"
#include "cdavsr/image_io.hpp"
#include "cdavsr/training.hpp"

namespace cdavsr::cli {

namespace fs = std::filesystem;

namespace {

struct Resolution {
  int width = 0;
  int height = 0;
};

Resolution parse_resolution(const std::string& s) {
  Resolution r;
  char x = 0;
  std::istringstream in(s);
  if (!(in >> r.width >> x >> r.height) || (x != 'x' && x != 'X') || !in.eof() || r.width < 1 ||
      r.height < 1)
    throw ParseError("resolution '" + s + "' is not WIDTHxHEIGHT", 0);
  return r;
}

/// Model flags shared by several commands. Only flags the user actually gave
/// are applied, so they override a config file.
struct ModelFlags {
  int channels = 0, extract_blocks = 0, iblocks = 0, pblocks = 0, groups = 0, scale = 0;
  std::string head, variant;
  std::vector<CLI::Option*> opts;

  void add(CLI::App& app) {
    opts = {app.add_option("--channels", channels, "Feature channels"),
            app.add_option("--extract-blocks", extract_blocks, "Feature-extraction residual blocks"),
            app.add_option("--iblocks", iblocks, "I-frame trunk depth (m)"),
            app.add_option("--pblocks", pblocks, "P-frame trunk depth (n)"),
            app.add_option("--groups", groups, "Deformable groups"),
            app.add_option("--scale", scale, "Upscaling factor (2 or 4)"),
            app.add_option("--head", head, "Upsampling head: single or two_stage"),
            app.add_option("--variant", variant,
                           "full, onlymv, onlydcn, onlygl, nogate or uniform_depth")};
  }
  void apply(ModelConfig& c) const {
    if (opts[0]->count()) c.channels = channels;
    if (opts[1]->count()) c.extract_blocks = extract_blocks;
    if (opts[2]->count()) c.m_blocks = iblocks;
    if (opts[3]->count()) c.n_blocks = pblocks;
    if (opts[4]->count()) c.groups = groups;
    if (opts[5]->count()) c.scale = scale;
    if (opts[6]->count()) c.head = parse_head(head);
    if (opts[7]->count()) c.variant = parse_variant(variant);
  }
};

/// Training flags; same override rule as ModelFlags.
struct TrainFlags {
  int iters = 0, batch = 0, clip_len = 0, crop = 0, gop = 0, q = 0, block = 0, search = 0;
  double lr = 0;
  bool no_augment = false;
  std::vector<CLI::Option*> opts;

  void add(CLI::App& app) {
    opts = {app.add_option("--iters", iters, "Training iterations"),
            app.add_option("--batch", batch, "Clips per batch"),
            app.add_option("--clip-len", clip_len, "Frames per training clip"),
            app.add_option("--crop", crop, "LR crop size"),
            app.add_option("--train-gop", gop, "GOP used when re-encoding crops"),
            app.add_option("--train-q", q, "Residual step (1/255 units) for crops"),
            app.add_option("--train-block", block, "Block size for crops"),
            app.add_option("--train-search", search, "Search range for crops"),
            app.add_option("--lr", lr, "Initial learning rate"),
            app.add_flag("--no-augment", no_augment, "Disable random flips and rotations")};
  }
  void apply(training::TrainConfig& t) const {
    if (opts[0]->count()) t.iters = iters;
    if (opts[1]->count()) t.batch = batch;
    if (opts[2]->count()) t.clip_len = clip_len;
    if (opts[3]->count()) t.crop = crop;
    if (opts[4]->count()) t.gop = gop;
    if (opts[5]->count()) t.q = q;
    if (opts[6]->count()) t.block = block;
    if (opts[7]->count()) t.search = search;
    if (opts[8]->count()) t.lr_init = lr;
    if (opts[9]->count()) t.augment = false;
  }
};

struct SyntheticFlags {
  training::SyntheticOptions o;
  void add(CLI::App& app) {
    app.add_option("--clips", o.clips, "Synthetic clips")->capture_default_str();
    app.add_option("--frames", o.frames, "Frames per synthetic clip")->capture_default_str();
    app.add_option("--lr-size", o.lr_size, "Synthetic LR frame size")->capture_default_str();
    app.add_option("--max-speed", o.max_speed, "Peak background speed (LR px/frame)")
        ->capture_default_str();
  }
};

void print_macs(std::ostream& out, const char* label, const StageMacs& m) {
  out << label << ": total " << m.total() << " (extract " << m.extract << ", align " << m.align
      << ", fuse " << m.fuse << ", reconstruct " << m.reconstruct << ")\n";
}

codec::Sidecar load_checked_sidecar(const fs::path& path, const std::vector<Frame>& lr) {
  codec::Sidecar s = codec::read_sidecar(path);
  require(s.records.size() == lr.size(), "sidecar has " + std::to_string(s.records.size()) +
                                             " records but " + std::to_string(lr.size()) +
                                             " LR frames were found");
  require(s.lr_width == lr[0].width && s.lr_height == lr[0].height,
          "sidecar frame size " + std::to_string(s.lr_width) + "x" + std::to_string(s.lr_height) +
              " does not match the LR frames");
  return s;
}

// --------------------------------------------------------------------------

int cmd_encode(const fs::path& input, const fs::path& output, const codec::EncoderConfig& ec,
               std::ostream& out) {
  const std::vector<Frame> hr = read_frame_dir(input);
  const codec::EncodedStream e = codec::encode_stream(hr, ec);
  write_frame_dir(e.decoded, output);
  codec::write_sidecar(e.sidecar, output / "stream.cdap");
  codec::write_payload(e.payload, output / "stream.cdab");
  std::size_t ni = 0;
  for (const auto& r : e.sidecar.records) ni += r.frame_type == codec::FrameType::I;
  out << "encoded " << hr.size() << " frames (" << ni << " I, " << hr.size() - ni << " P) at "
      << e.sidecar.lr_width << "x" << e.sidecar.lr_height << " into " << output.string() << "\n";
  return 0;
}

struct InferArgs {
  fs::path lr, sidecar, weights, out, gt, csv, maps;
  std::string variant = "full";
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  const std::vector<Frame> lr = read_frame_dir(a.lr);
  const codec::Sidecar side = load_checked_sidecar(a.sidecar, lr);
  const ParamSet<float> params = load_cdwt(a.weights);
  const ModelConfig cfg = config_from_params(params, parse_variant(a.variant));
  eval::EvalStream stream{lr, side.records, {}};
  if (!a.gt.empty()) {
    stream.hr = read_frame_dir(a.gt);
    require(stream.hr.size() == lr.size(), "ground truth has " + std::to_string(stream.hr.size()) +
                                               " frames, expected " + std::to_string(lr.size()));
    require(stream.hr[0].width == lr[0].width * cfg.scale &&
                stream.hr[0].height == lr[0].height * cfg.scale,
            "ground-truth frames are not " + std::to_string(cfg.scale) + "x the LR frames");
  }
  std::vector<Frame> sr;
  eval::MetricReport report;
  if (a.maps.empty()) {
    report = eval::evaluate(params, cfg, stream, &sr);
  } else {
    // Same loop as evaluate, keeping each P-frame's gate and residual maps.
    fs::create_directories(a.maps);
    StreamSession s(params, cfg);
    for (std::size_t t = 0; t < lr.size(); ++t) {
      sr.push_back(s.step(lr[t], side.records[t]));
      eval::FrameMetrics m;
      m.frame = static_cast<int>(t);
      m.type = s.last().intra_path ? codec::FrameType::I : codec::FrameType::P;
      if (!stream.hr.empty()) {
        m.psnr = eval::psnr(sr.back(), stream.hr[t]);
        m.ssim = eval::ssim(sr.back(), stream.hr[t]);
      }
      report.frames.push_back(m);
      if (!s.last().intra_path) {
        char name[32];
        std::snprintf(name, sizeof name, "gate_%08zu.png", t);
        eval::export_map_png(s.last().gate.value(), 0, a.maps / name, false);
        std::snprintf(name, sizeof name, "residual_%08zu.png", t);
        eval::export_map_png(residual_input<float>(side.records[t].residual), 0, a.maps / name);
      }
    }
    report.finalize();
  }
  write_frame_dir(sr, a.out);
  if (!a.csv.empty()) eval::write_metrics_csv(report, a.csv, false);
  out << "wrote " << sr.size() << " SR frames to " << a.out.string() << "\n";
  if (!stream.hr.empty())
    out << "mean_psnr_db: " << report.mean_psnr << "\nmean_ssim: " << report.mean_ssim << "\n";
  return 0;
}

struct TrainArgs {
  fs::path config, data, out, log, init;
  std::uint64_t seed = 1;
  bool seed_given = false;
};

void load_configs(const fs::path& config, training::TrainConfig& t, ModelConfig& m) {
  if (!config.empty()) training::load_train_config(config, t, m);
}

int cmd_train(const TrainArgs& a, training::TrainConfig t, ModelConfig m, std::ostream& out,
              const SyntheticFlags& syn) {
  if (a.seed_given) t.seed = a.seed;
  training::SyntheticOptions so = syn.o;
  so.scale = m.scale;
  so.seed = t.seed + 2023;
  const training::Dataset ds =
      a.data.empty() ? training::make_synthetic_dataset(so) : training::load_dataset(a.data, m.scale);
  ParamSet<float> init = a.init.empty() ? init_params<float>(m, t.seed) : load_cdwt(a.init);
  const int every = std::max(1, t.iters / 20);
  const auto start = std::chrono::steady_clock::now();
  const training::TrainResult r = training::train(ds, t, m, std::move(init), [&](int it, double loss, double lr) {
    if (it % every == 0 || it + 1 == t.iters) {
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      out << "iter " << it << " loss " << loss << " lr " << lr << " (" << s << " s)\n";
    }
  });
  save_cdwt(r.params, a.out);
  if (!a.log.empty()) training::write_loss_csv(r, a.log);
  out << "saved " << eval::count_params(r.params) << " parameters to " << a.out.string() << "\n";
  return 0;
}

struct BenchArgs {
  fs::path weights, lr, sidecar, csv;
  std::string resolution = "64x64";
  int frames = 16, gop = 4, repeats = 3;
  std::uint64_t seed = 1;
};

int cmd_bench(const BenchArgs& a, ModelConfig m, const ModelFlags& mf, std::ostream& out) {
  ParamSet<float> params;
  if (!a.weights.empty()) {
    params = load_cdwt(a.weights);
    m = config_from_params(params, mf.opts[7]->count() ? parse_variant(mf.variant) : Variant::full);
  } else {
    mf.apply(m);
    params = init_params<float>(m, a.seed);
  }
  eval::EvalStream stream;
  if (!a.lr.empty()) {
    stream.lr = read_frame_dir(a.lr);
    require(!a.sidecar.empty(), "bench: --lr needs --sidecar");
    stream.priors = load_checked_sidecar(a.sidecar, stream.lr).records;
  } else {
    const Resolution r = parse_resolution(a.resolution);
    training::SyntheticOptions so;
    so.clips = 1;
    so.frames = a.frames;
    so.lr_size = std::max(r.width, r.height);
    so.scale = m.scale;
    so.seed = a.seed;
    const auto ds = training::make_synthetic_dataset(so);
    std::vector<Frame> hr;
    for (const Frame& f : ds.clips[0].hr) hr.push_back(training::crop_frame(f, 0, 0, r.width * m.scale, r.height * m.scale));
    codec::EncoderConfig ec;
    ec.scale = m.scale;
    ec.gop = a.gop;
    stream = eval::make_eval_stream(hr, ec);
  }
  const eval::LatencyReport lat = eval::benchmark_latency(params, m, stream, a.repeats);
  out << "timed_frames: " << lat.ms.size() << "\nmedian_ms: " << lat.median_ms
      << "\nmedian_i_ms: " << lat.median_i_ms << "\nmedian_p_ms: " << lat.median_p_ms
      << "\nfps: " << lat.fps << "\n";
  if (!a.csv.empty()) {
    std::ofstream f(a.csv);
    if (!f) throw IoError("cannot write " + a.csv.string());
    f << "index,ms,frame_type\n";
    for (std::size_t i = 0; i < lat.ms.size(); ++i)
      f << i << ',' << lat.ms[i] << ',' << (lat.types[i] == codec::FrameType::I ? 'I' : 'P') << '\n';
  }
  return 0;
}

struct AblateArgs {
  fs::path config, csv, weights_dir;
  std::string variants = "full,onlymv,onlydcn,onlygl,nogate";
  int heldout = 2;
  std::uint64_t seed = 1;
  bool seed_given = false;
};

int cmd_ablate(const AblateArgs& a, training::TrainConfig t, ModelConfig base,
               const SyntheticFlags& syn, std::ostream& out) {
  if (a.seed_given) t.seed = a.seed;
  training::SyntheticOptions so = syn.o;
  so.scale = base.scale;
  so.seed = t.seed + 2023;
  so.clips += a.heldout;
  training::Dataset all = training::make_synthetic_dataset(so);
  require(a.heldout >= 1 && a.heldout < static_cast<int>(all.clips.size()),
          "ablate: --heldout must leave at least one training clip");
  training::Dataset train_set{all.scale, {all.clips.begin(), all.clips.end() - a.heldout}};
  std::vector<eval::EvalStream> streams;
  codec::EncoderConfig ec;
  ec.scale = base.scale;
  ec.gop = t.gop;
  ec.q = t.q;
  ec.block = t.block;
  ec.search = t.search;
  for (auto it = all.clips.end() - a.heldout; it != all.clips.end(); ++it)
    streams.push_back(eval::make_eval_stream(it->hr, ec));

  std::vector<std::string> names;
  std::stringstream ss(a.variants);
  for (std::string v; std::getline(ss, v, ',');) names.push_back(v);
  std::vector<ParamSet<float>> trained;
  trained.reserve(names.size());
  std::vector<eval::AblationEntry> entries;
  for (const std::string& n : names) {
    ModelConfig c = base;
    c.variant = parse_variant(n);
    out << "training " << n << "\n";
    trained.push_back(training::train(train_set, t, c, init_params<float>(c, t.seed)).params);
    if (!a.weights_dir.empty()) {
      fs::create_directories(a.weights_dir);
      save_cdwt(trained.back(), a.weights_dir / (n + ".cdwt"));
    }
    entries.push_back({n, c, &trained.back()});
  }
  const auto rows = eval::run_ablation(entries, streams);
  double bl = 0;
  for (const auto& s : streams) bl += eval::evaluate_bilinear(s, base.scale).mean_psnr;
  out << "variant,psnr,ssim,ms,align_macs,params\n";
  for (const auto& r : rows)
    out << r.name << ',' << r.psnr << ',' << r.ssim << ',' << r.ms << ',' << r.align_macs << ','
        << r.params << '\n';
  out << "bilinear," << bl / static_cast<double>(streams.size()) << "\n";
  if (!a.csv.empty()) eval::write_ablation_csv(rows, a.csv);
  return 0;
}

int cmd_gradcheck(const GradSuiteOptions& o, std::ostream& out) {
  bool ok = true;
  for (const auto& e : run_grad_suite(o)) {
    out << (e.report.pass ? "PASS " : "FAIL ") << e.name << " max_rel_err " << e.report.max_rel_err;
    if (!e.report.pass) out << " worst " << e.report.worst << ' ' << e.report.diagnostic;
    out << "\n";
    ok = ok && e.report.pass;
  }
  if (!ok) throw ContractViolation("gradient check failed at tolerance " + std::to_string(o.tolerance));
  return 0;
}

int cmd_count(const std::string& resolution, int gop, bool measure, const ModelConfig& m,
              std::ostream& out) {
  const Resolution r = parse_resolution(resolution);
  const ParamSet<float> params = init_params<float>(m, 1);
  const auto macs = eval::count_macs(m, r.width, r.height, gop);
  out << "params: " << eval::count_params(params) << "\n";
  out.precision(6);
  out << "macs_per_frame: " << macs.per_frame() << " (" << macs.per_frame() / 1e9 << " G)\n";
  print_macs(out, "i_frame", macs.i_frame);
  print_macs(out, "p_frame", macs.p_frame);
  if (measure) {
    const auto got = eval::measure_macs(params, m, r.width, r.height, gop);
    const bool same = got.i_frame.total() == macs.i_frame.total() &&
                      got.p_frame.total() == macs.p_frame.total();
    out << "instrumented: " << (same ? "match" : "MISMATCH") << "\n";
    if (!same) throw ContractViolation("analytic and instrumented MAC counts differ");
  }
  return 0;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compressed-domain-aware online video super-resolution"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every command");

  // encode
  auto* enc = app.add_subcommand("encode", "Downsample HR frames, encode them, write LR PNGs and the sidecar");
  fs::path enc_in, enc_out;
  codec::EncoderConfig ec;
  std::uint64_t enc_seed = 1;
  enc->add_option("--input", enc_in, "Directory of HR %08d.png frames")->required();
  enc->add_option("--output", enc_out, "Output directory")->required();
  enc->add_option("--gop", ec.gop, "GOP length")->capture_default_str();
  enc->add_option("--block", ec.block, "Block size")->capture_default_str();
  enc->add_option("--search", ec.search, "Motion search range")->capture_default_str();
  enc->add_option("--q", ec.q, "Residual quantisation step in 1/255 units")->capture_default_str();
  enc->add_option("--scale", ec.scale, "Downsampling factor")->capture_default_str();
  enc->add_option("--seed", enc_seed, "Seed (the encoder is deterministic)");

  // infer
  auto* inf = app.add_subcommand("infer", "Super-resolve an encoded stream");
  InferArgs ia;
  inf->add_option("--lr", ia.lr, "Directory of decoded LR frames")->required();
  inf->add_option("--sidecar", ia.sidecar, "CDAP sidecar")->required();
  inf->add_option("--weights", ia.weights, "CDWT weights")->required();
  inf->add_option("--out", ia.out, "Output directory for SR frames")->required();
  auto* gt_opt = inf->add_option("--gt", ia.gt, "Ground-truth HR frames for metrics");
  inf->add_option("--csv", ia.csv, "Per-frame metric CSV")->needs(gt_opt);
  inf->add_option("--maps", ia.maps, "Export gate and residual maps of P-frames here");
  inf->add_option("--variant", ia.variant, "Variant the weights were trained as")->capture_default_str();
  std::uint64_t inf_seed = 1;
  inf->add_option("--seed", inf_seed, "Seed (inference is deterministic)");

  // train
  auto* tr = app.add_subcommand("train", "Train on HR clips or a synthetic set");
  TrainArgs ta;
  ModelFlags tr_model;
  TrainFlags tr_flags;
  SyntheticFlags tr_syn;
  tr->add_option("--config", ta.config, "key=value config file (flags override it)");
  tr->add_option("--data", ta.data, "Directory of HR clip directories (default: synthetic)");
  tr->add_option("--out", ta.out, "Output weights (CDWT)")->required();
  tr->add_option("--log", ta.log, "Loss CSV");
  tr->add_option("--init", ta.init, "Initial weights");
  auto* tr_seed = tr->add_option("--seed", ta.seed, "Seed for initialisation and sampling");
  tr_model.add(*tr);
  tr_flags.add(*tr);
  tr_syn.add(*tr);

  // bench
  auto* be = app.add_subcommand("bench", "Per-frame latency of I and P paths");
  BenchArgs ba;
  ModelFlags be_model;
  be->add_option("--weights", ba.weights, "CDWT weights (default: random init at the model flags)");
  be->add_option("--lr", ba.lr, "Decoded LR frames (default: synthetic stream)");
  be->add_option("--sidecar", ba.sidecar, "CDAP sidecar for --lr");
  be->add_option("--resolution", ba.resolution, "Synthetic LR resolution WxH")->capture_default_str();
  be->add_option("--frames", ba.frames, "Synthetic stream length")->capture_default_str();
  be->add_option("--gop", ba.gop, "Synthetic stream GOP")->capture_default_str();
  be->add_option("--repeats", ba.repeats, "Passes over the stream")->capture_default_str();
  be->add_option("--csv", ba.csv, "Per-frame timing CSV");
  be->add_option("--seed", ba.seed, "Seed for random weights and the synthetic stream");
  be_model.add(*be);

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train and compare model variants on a synthetic set");
  AblateArgs aa;
  ModelFlags ab_model;
  TrainFlags ab_flags;
  SyntheticFlags ab_syn;
  ab->add_option("--config", aa.config, "key=value config file (flags override it)");
  ab->add_option("--variants", aa.variants, "Comma-separated variants")->capture_default_str();
  ab->add_option("--heldout", aa.heldout, "Held-out evaluation clips")->capture_default_str();
  ab->add_option("--csv", aa.csv, "Ablation CSV");
  ab->add_option("--weights-dir", aa.weights_dir, "Save each variant's weights here");
  auto* ab_seed = ab->add_option("--seed", aa.seed, "Seed shared by every variant");
  ab_model.add(*ab);
  ab_flags.add(*ab);
  ab_syn.add(*ab);

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks in 64-bit");
  GradSuiteOptions go;
  gc->add_option("--tolerance", go.tolerance, "Relative error bound")->capture_default_str();
  gc->add_option("--samples", go.samples, "Probes per tensor for model-level checks (0 = all)")
      ->capture_default_str();
  gc->add_option("--frames", go.frames, "End-to-end clip length")->capture_default_str();
  gc->add_option("--seed", go.seed, "Seed")->capture_default_str();

  // count
  auto* co = app.add_subcommand("count", "Parameter and MAC counts");
  std::string co_res = "320x180";
  int co_gop = 25;
  bool co_measure = false;
  ModelFlags co_model;
  co->add_option("--resolution", co_res, "LR resolution WxH")->capture_default_str();
  co->add_option("--gop", co_gop, "GOP length")->capture_default_str();
  co->add_flag("--measure", co_measure, "Also count with an instrumented forward pass");
  co_model.add(*co);

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*enc) return cmd_encode(enc_in, enc_out, ec, out);
    if (*inf) return cmd_infer(ia, out);
    if (*tr) {
      training::TrainConfig t;
      ModelConfig m = ModelConfig::desk();
      load_configs(ta.config, t, m);
      tr_model.apply(m);
      tr_flags.apply(t);
      ta.seed_given = tr_seed->count() > 0;
      return cmd_train(ta, t, m, out, tr_syn);
    }
    if (*be) return cmd_bench(ba, ModelConfig::reference(), be_model, out);
    if (*ab) {
      training::TrainConfig t;
      ModelConfig m = ModelConfig::desk();
      load_configs(aa.config, t, m);
      ab_model.apply(m);
      ab_flags.apply(t);
      aa.seed_given = ab_seed->count() > 0;
      return cmd_ablate(aa, t, m, ab_syn, out);
    }
    if (*gc) return cmd_gradcheck(go, out);
    if (*co) {
      ModelConfig m = ModelConfig::reference();
      co_model.apply(m);
      return cmd_count(co_res, co_gop, co_measure, m, out);
    }
  } catch (const ParseError& e) {
    err << "parse error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "I/O error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const ContractViolation& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 1;
}

}  // namespace cdavsr::cli
