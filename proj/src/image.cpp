#include "posekit/image.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "posekit/error.hpp"

namespace posekit {
namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) fail(ErrorCode::kIo, "cannot open " + path.string());
  return f;
}

struct RawPng {
  PngInfo info;
  std::vector<uint16_t> samples;
};

[[noreturn]] void png_error_handler(png_structp, png_const_charp msg) {
  throw Error(ErrorCode::kFormat, msg);
}
void png_warning_handler(png_structp, png_const_charp) {}

RawPng read_png(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    fail(ErrorCode::kFormat, path.string() + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           png_error_handler, png_warning_handler);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  RawPng out;
  out.info.width = static_cast<int>(png_get_image_width(png, info));
  out.info.height = static_cast<int>(png_get_image_height(png, info));
  out.info.bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  switch (color) {
    case PNG_COLOR_TYPE_GRAY: out.info.channels = 1; break;
    case PNG_COLOR_TYPE_GRAY_ALPHA: out.info.channels = 2; break;
    case PNG_COLOR_TYPE_RGB: out.info.channels = 3; break;
    case PNG_COLOR_TYPE_RGB_ALPHA: out.info.channels = 4; break;
    default:
      fail(ErrorCode::kFormat, path.string() + ": palette PNGs are not supported");
  }
  if (out.info.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (out.info.bit_depth == 16) png_set_swap(png);  // host little endian
  png_read_update_info(png, info);

  const size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<png_byte> buffer(row_bytes * out.info.height);
  std::vector<png_bytep> rows(out.info.height);
  for (int v = 0; v < out.info.height; ++v) rows[v] = buffer.data() + v * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);

  const size_t n = static_cast<size_t>(out.info.width) * out.info.height * out.info.channels;
  out.samples.resize(n);
  if (out.info.bit_depth == 16) {
    for (size_t i = 0; i < n; ++i) {
      out.samples[i] = static_cast<uint16_t>(buffer[2 * i] | (buffer[2 * i + 1] << 8));
    }
  } else {
    for (size_t i = 0; i < n; ++i) out.samples[i] = buffer[i];
  }
  if (out.info.bit_depth < 8) out.info.bit_depth = 8;
  return out;
}

void write_png(const std::filesystem::path& path, int width, int height, int channels,
               int bit_depth, const void* data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            png_error_handler, png_warning_handler);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  png_init_io(png, f.get());
  const int color = channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, width, height, bit_depth, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);
  const size_t row_bytes = static_cast<size_t>(width) * channels * (bit_depth / 8);
  const auto* bytes = static_cast<const png_byte*>(data);
  for (int v = 0; v < height; ++v) {
    png_write_row(png, const_cast<png_bytep>(bytes + v * row_bytes));
  }
  png_write_end(png, nullptr);
}

void expect_format(const RawPng& raw, int channels, int bit_depth,
                   const std::filesystem::path& path, const char* what) {
  if (raw.info.channels != channels || raw.info.bit_depth != bit_depth) {
    fail(ErrorCode::kFormat,
         path.string() + ": expected " + what + " (" + std::to_string(channels) +
             " channel, " + std::to_string(bit_depth) + "-bit), found " +
             std::to_string(raw.info.channels) + " channel, " +
             std::to_string(raw.info.bit_depth) + "-bit");
  }
}

}  // namespace

size_t count_on(const BinaryMask& mask) {
  size_t n = 0;
  for (uint8_t m : mask.data) n += m != 0;
  return n;
}

PngInfo read_png_info(const std::filesystem::path& path) { return read_png(path).info; }

DepthImage read_depth_png(const std::filesystem::path& path) {
  RawPng raw = read_png(path);
  expect_format(raw, 1, 16, path, "16-bit depth");
  DepthImage img(raw.info.width, raw.info.height);
  img.data = std::move(raw.samples);
  return img;
}

BinaryMask read_mask_png(const std::filesystem::path& path) {
  RawPng raw = read_png(path);
  expect_format(raw, 1, 8, path, "8-bit mask");
  BinaryMask img(raw.info.width, raw.info.height);
  for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = raw.samples[i] > 127 ? 1 : 0;
  return img;
}

RgbImage read_rgb_png(const std::filesystem::path& path) {
  RawPng raw = read_png(path);
  expect_format(raw, 3, 8, path, "8-bit rgb");
  RgbImage img(raw.info.width, raw.info.height, 3);
  for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<uint8_t>(raw.samples[i]);
  return img;
}

void write_depth_png(const std::filesystem::path& path, const DepthImage& depth) {
  write_png(path, depth.width, depth.height, 1, 16, depth.data.data());
}

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<uint8_t> bytes(mask.data.size());
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.data[i] ? 255 : 0;
  write_png(path, mask.width, mask.height, 1, 8, bytes.data());
}

void write_rgb_png(const std::filesystem::path& path, const RgbImage& rgb) {
  if (rgb.channels != 3) fail(ErrorCode::kInvalidInput, "rgb image must have 3 channels");
  write_png(path, rgb.width, rgb.height, 3, 8, rgb.data.data());
}

}  // namespace posekit
