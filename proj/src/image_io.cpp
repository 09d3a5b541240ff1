#include "cdavsr/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <string>

namespace cdavsr {

Frame read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw IoError(path.string() + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError(path.string() + ": " + msg);
  }
  const int w = static_cast<int>(img.width), h = static_cast<int>(img.height);
  Frame frame(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        frame.at(c, y, x) = from_byte(buf[(static_cast<std::size_t>(y) * w + x) * 3 + c]);
  return frame;
}

void write_png(const Frame& frame, const std::filesystem::path& path) {
  require(frame.channels == 1 || frame.channels == 3, "write_png: need 1 or 3 channels");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(frame.width);
  img.height = static_cast<png_uint_32>(frame.height);
  img.format = frame.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(static_cast<std::size_t>(frame.width) * frame.height * frame.channels);
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x)
      for (int c = 0; c < frame.channels; ++c)
        buf[(static_cast<std::size_t>(y) * frame.width + x) * frame.channels + c] =
            to_byte(frame.at(c, y, x));
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
    throw IoError(path.string() + ": " + img.message);
}

std::filesystem::path frame_path(const std::filesystem::path& dir, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof name, "%08zu.png", index);
  return dir / name;
}

std::vector<Frame> read_frame_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  std::vector<Frame> frames;
  for (std::size_t i = 0;; ++i) {
    const auto p = frame_path(dir, i);
    if (!std::filesystem::exists(p)) break;
    frames.push_back(read_png(p));
    if (!frames.back().same_dims(frames.front()))
      throw IoError(p.string() + " has different dimensions from frame 0");
  }
  if (frames.empty()) throw IoError(dir.string() + " contains no 00000000.png");
  return frames;
}

void write_frame_dir(std::span<const Frame> frames, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < frames.size(); ++i) write_png(frames[i], frame_path(dir, i));
}

}  // namespace cdavsr
