#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace posekit {

/// Row-major interleaved image. Pixel (u, v) is column u, row v.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c = 1, T fill = T{})
      : width(w), height(h), channels(c),
        data(static_cast<size_t>(w) * h * c, fill) {}

  T& at(int u, int v, int c = 0) {
    return data[(static_cast<size_t>(v) * width + u) * channels + c];
  }
  const T& at(int u, int v, int c = 0) const {
    return data[(static_cast<size_t>(v) * width + u) * channels + c];
  }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
  bool same_size(int w, int h) const { return width == w && height == h; }

  bool operator==(const Image&) const = default;
};

/// Depth in millimeters; 0 means no measurement.
using DepthImage = Image<uint16_t>;
/// Foreground flags in {0, 1}. Stored on disk as {0, 255}.
using BinaryMask = Image<uint8_t>;
/// Three-channel 8-bit color.
using RgbImage = Image<uint8_t>;
/// Per-pixel occupancy probability in [0, 1].
using SoftMask = Image<double>;

size_t count_on(const BinaryMask& mask);

// PNG IO. Depth is 16-bit gray, masks 8-bit gray, rgb 8-bit RGB. Readers
// reject a file whose bit depth or channel count does not match.
DepthImage read_depth_png(const std::filesystem::path& path);
BinaryMask read_mask_png(const std::filesystem::path& path);
RgbImage read_rgb_png(const std::filesystem::path& path);

void write_depth_png(const std::filesystem::path& path, const DepthImage& depth);
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);
void write_rgb_png(const std::filesystem::path& path, const RgbImage& rgb);

struct PngInfo {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
};
PngInfo read_png_info(const std::filesystem::path& path);

}  // namespace posekit
