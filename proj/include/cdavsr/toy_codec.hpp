#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "cdavsr/frame.hpp"

namespace cdavsr::codec {

enum class FrameType : std::uint8_t { I = 0, P = 1 };

struct MotionVector {
  std::int16_t dx = 0;
  std::int16_t dy = 0;
  bool operator==(const MotionVector&) const = default;
};

/// One vector per block, row-major over the block grid. Components are in
/// units of 1/2^subpel_shift pixels; each vector points from the current
/// block into the reference frame.
struct MotionField {
  int block_size = 8;
  int subpel_shift = 0;
  int grid_w = 0;
  int grid_h = 0;
  std::vector<MotionVector> vectors;

  static MotionField zeros(int width, int height, int block, int subpel_shift = 0);
  MotionVector& at(int by, int bx) { return vectors[static_cast<std::size_t>(by) * grid_w + bx]; }
  const MotionVector& at(int by, int bx) const {
    return vectors[static_cast<std::size_t>(by) * grid_w + bx];
  }
  bool operator==(const MotionField&) const = default;
};

/// Single-channel |luma residual| map in [0, 1]. Maps carried in a PriorRecord
/// hold values of the form byte / 255 * scale so they survive the sidecar.
struct ResidualMap {
  int width = 0;
  int height = 0;
  float scale = 1.0f;
  std::vector<float> values;

  static ResidualMap zeros(int width, int height);
  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const ResidualMap&) const = default;
};

struct PriorRecord {
  FrameType frame_type = FrameType::I;
  std::optional<MotionField> motion;  // present iff P
  ResidualMap residual;               // all zero for I
  bool operator==(const PriorRecord&) const = default;
};

/// Stream-level header plus per-frame priors: the content of a CDAP file.
struct Sidecar {
  int lr_width = 0;
  int lr_height = 0;
  int block_size = 8;
  int subpel_shift = 0;
  std::vector<PriorRecord> records;
  bool operator==(const Sidecar&) const = default;
};

std::vector<FrameType> assign_frame_types(int frame_count, int gop);

/// 1000 * (0.299 R + 0.587 G + 0.114 B) on the 8-bit grid; exact integers, so
/// block matching has no floating-point ties. Single-channel frames use 1000 * Y.
std::vector<std::int32_t> luma_fixed(const Frame& f);
/// 0.299 R + 0.587 G + 0.114 B in reals.
std::vector<double> luma(const Frame& f);

/// Full-search integer block matching, SAD on 8-bit luma, border-clamped
/// reference reads. Ties: smallest |dx|+|dy|, then dy, then dx.
MotionField estimate_motion(const Frame& cur, const Frame& ref, int block, int search);

/// Nearest-block replication to a per-pixel (dx, dy) field in LR pixels.
template <typename T>
Tensor<T> densify_motion(const MotionField& mv, int height, int width);

/// Moves each block of `ref` by its vector (border clamp; bilinear for
/// fractional vectors).
Frame mc_predict(const Frame& ref, const MotionField& mv);

/// |luma(cur) - luma(mc_predict(ref, mv))|, clamped to [0, 1].
ResidualMap compute_residual(const Frame& cur, const Frame& ref, const MotionField& mv);

/// Snap a residual map onto the byte/255*scale grid used by the sidecar.
ResidualMap quantize_map(const ResidualMap& map, float scale = 1.0f);

/// round-half-away-from-zero(r / q) * q.
std::vector<double> quantize_residual(std::span<const double> residual, double q);
std::int32_t round_half_away(double v);

struct EncoderConfig {
  int scale = 4;
  int gop = 25;
  int block = 8;
  int search = 16;
  /// Residual quantisation step in 1/255 units (emulates CRF 18/23/28 as 4/8/16).
  int q = 8;
};

/// Intra step: half the residual step (at least one code value), which keeps
/// static P residuals strictly inside the zero bin.
int intra_step(int q);

/// Codec texture data: quantised I-frame samples and P-frame residual levels.
/// Together with the sidecar this is everything the decoder reads.
struct TexturePayload {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> steps;               // per frame, in 1/255 units
  std::vector<std::vector<std::int16_t>> levels;  // per frame, C*H*W
  bool operator==(const TexturePayload&) const = default;
};

struct EncodedStream {
  std::vector<Frame> lr_source;  // bicubic downsample of the HR input, on the 8-bit grid
  std::vector<Frame> decoded;    // what a client reconstructs
  Sidecar sidecar;
  TexturePayload payload;
};

/// MATLAB-style antialiased bicubic (a = -0.5) reduction by an integer factor,
/// snapped to the 8-bit grid.
Frame downsample_bicubic(const Frame& hr, int factor);

EncodedStream encode_stream(std::span<const Frame> hr_frames, const EncoderConfig& cfg);
/// Encodes LR source frames directly (no downsampling).
EncodedStream encode_lr(std::span<const Frame> lr_source, const EncoderConfig& cfg);

/// Re-runs the decoder from the sidecar and texture payload alone.
std::vector<Frame> decode_stream(const Sidecar& sidecar, const TexturePayload& payload);

// CDAP v1 sidecar and CDAB v1 texture payload (little-endian).
std::vector<std::uint8_t> encode_sidecar(const Sidecar& sidecar);
Sidecar decode_sidecar(std::span<const std::uint8_t> bytes);
void write_sidecar(const Sidecar& sidecar, const std::filesystem::path& path);
Sidecar read_sidecar(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_payload(const TexturePayload& payload);
TexturePayload decode_payload(std::span<const std::uint8_t> bytes);
void write_payload(const TexturePayload& payload, const std::filesystem::path& path);
TexturePayload read_payload(const std::filesystem::path& path);

}  // namespace cdavsr::codec
