#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "cdavsr/frame.hpp"

namespace cdavsr {

/// 8-bit PNG. Grey, palette and alpha inputs are converted to RGB.
Frame read_png(const std::filesystem::path& path);
/// Writes 8-bit RGB (3 channels) or grey (1 channel), clamping to [0, 1].
void write_png(const Frame& frame, const std::filesystem::path& path);

/// Frame sequences are directories of `%08d.png` files numbered from 0.
std::vector<Frame> read_frame_dir(const std::filesystem::path& dir);
void write_frame_dir(std::span<const Frame> frames, const std::filesystem::path& dir);
std::filesystem::path frame_path(const std::filesystem::path& dir, std::size_t index);

}  // namespace cdavsr
