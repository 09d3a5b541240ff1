#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cdavsr/pipeline.hpp"

namespace cdavsr::training {

struct TrainConfig {
  double lr_init = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  int iters = 2000;
  int batch = 2;
  int clip_len = 7;
  int crop = 32;  // LR pixels
  double epsilon = 1e-3;
  double lr_min = 1e-7;
  std::uint64_t seed = 1;
  // Encoder settings used when re-encoding augmented crops.
  int gop = 5;
  int q = 4;
  int block = 8;
  int search = 16;
  /// Random flips and rotations of each sampled crop.
  bool augment = true;

  void validate() const;
};

/// `key = value` lines; `#` starts a comment. Keys are TrainConfig field names
/// plus the model keys channels, extract_blocks, m_blocks, n_blocks, groups,
/// scale, head and variant. Values overwrite the fields already in `train`/`model`.
/// Unknown keys and malformed values raise ParseError at the line's byte offset.
void parse_train_config(const std::string& text, TrainConfig& train, ModelConfig& model);
void load_train_config(const std::filesystem::path& path, TrainConfig& train, ModelConfig& model);

struct Clip {
  std::vector<Frame> hr;
  std::vector<Frame> lr;  // bicubic source, not yet encoded
};

struct Dataset {
  int scale = 4;
  std::vector<Clip> clips;
};

struct SyntheticOptions {
  int clips = 10;
  int frames = 15;
  int lr_size = 48;
  int scale = 4;
  /// Peak background translation in LR pixels per frame.
  double max_speed = 2.5;
  /// Peak background rotation in degrees per frame.
  double max_rotation = 2.0;
  std::uint64_t seed = 2024;
};

/// Procedural clips: a rotating and translating multi-frequency texture with an
/// independently moving textured foreground object.
Dataset make_synthetic_dataset(const SyntheticOptions& opts);
/// Every `%08d.png` sub-directory of `root` is one HR clip.
Dataset load_dataset(const std::filesystem::path& root, int scale);
Dataset dataset_from_hr(std::vector<std::vector<Frame>> hr_clips, int scale);

Frame crop_frame(const Frame& f, int x0, int y0, int w, int h);
Frame flip_horizontal(const Frame& f);
/// Counter-clockwise rotation by k * 90 degrees.
Frame rotate90(const Frame& f, int k);

struct Augmentation {
  int clip = 0;
  int start = 0;
  int x = 0, y = 0;  // LR crop origin
  bool hflip = false;
  int rot = 0;
};

struct ClipBatch {
  std::vector<std::vector<Frame>> lr;  // [batch][time], decoded
  std::vector<std::vector<Frame>> hr;  // [batch][time]
  std::vector<std::vector<codec::PriorRecord>> priors;
  std::vector<Augmentation> aug;
};

/// Applies `aug` with the given crop size and re-encodes the LR crop.
void append_sample(ClipBatch& batch, const Dataset& ds, const TrainConfig& cfg,
                   const Augmentation& aug);
/// Hands out clip indices in one seeded shuffle of [0, clips), repeated. Any
/// `clips` consecutive draws then cover every clip once.
class ClipCycle {
 public:
  ClipCycle(int clips, Rng& rng);
  int next();

 private:
  std::vector<int> order_;
  std::size_t pos_ = 0;
};

/// Clips come from `cycle` when given, otherwise uniformly at random.
ClipBatch sample_batch(const Dataset& ds, const TrainConfig& cfg, Rng& rng,
                       ClipCycle* cycle = nullptr);

double cosine_lr(int iter, int total, double lr_init, double lr_min);

template <typename T>
struct AdamState {
  std::map<std::string, Tensor<T>> m, v;
  int step = 0;
};

/// Bias-corrected Adam over every trainable entry that has a gradient.
template <typename T>
void adam_step(ParamSet<T>& params, const std::map<std::string, Tensor<T>>& grads,
               AdamState<T>& state, double lr, double beta1, double beta2, double eps = 1e-8);

/// Mean over frames of the per-frame Charbonnier loss, each averaged over the batch.
template <typename T>
Var<T> clip_loss(const BoundParams<T>& p, const ModelConfig& cfg, const ClipBatch& batch,
                 T epsilon);

class TrainingDiverged : public ContractViolation {
 public:
  TrainingDiverged(int iter, const std::string& param, const std::string& what)
      : ContractViolation(what), iter_(iter), param_(param) {}
  int iteration() const noexcept { return iter_; }
  const std::string& parameter() const noexcept { return param_; }

 private:
  int iter_;
  std::string param_;
};

struct TrainResult {
  ParamSet<float> params;
  std::vector<double> losses;
  std::vector<double> lrs;
};

using ProgressFn = std::function<void(int iter, double loss, double lr)>;

TrainResult train(const Dataset& ds, const TrainConfig& cfg, const ModelConfig& model,
                  ParamSet<float> init, const ProgressFn& progress = {});

void write_loss_csv(const TrainResult& r, const std::filesystem::path& path);

}  // namespace cdavsr::training
