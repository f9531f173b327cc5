#pragma once

#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <png.h>

#include "texgen/error.hpp"

namespace texgen {

/// Decoded/encodable PNG raster. Samples are stored unscaled: 0..1 for
/// bit_depth 1, 0..255 for 8, 0..65535 for 16.
struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 gray, 2 gray+alpha, 3 rgb, 4 rgba
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;

  std::uint16_t max_value() const {
    return static_cast<std::uint16_t>((1u << bit_depth) - 1u);
  }
  std::uint16_t sample(int x, int y, int c) const {
    return samples[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

namespace detail {

inline int png_color_type(int channels) {
  switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 2: return PNG_COLOR_TYPE_GRAY_ALPHA;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGB_ALPHA;
  }
  return -1;
}

inline void png_write_to_vector(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

inline void png_silent_warning(png_structp, png_const_charp) {}

struct PngReadCursor {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t offset;
};

inline void png_read_from_span(png_structp png, png_bytep out, png_size_t len) {
  auto* cur = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + len > cur->size) png_error(png, "unexpected end of PNG data");
  std::memcpy(out, cur->data + cur->offset, len);
  cur->offset += len;
}

// No C++ objects with destructors are created between setjmp and the end of
// these functions; all buffers are owned by the caller.
inline bool encode_rows(const PngImage& img, std::vector<png_bytep>& rows,
                        std::vector<std::uint8_t>& out) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, png_silent_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, &out, png_write_to_vector, nullptr);
  png_set_IHDR(png, info, img.width, img.height, img.bit_depth,
               png_color_type(img.channels), PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // Fast deflate: intermediate maps are large and written on every run.
  png_set_compression_level(png, 1);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

struct PngHeader {
  png_uint_32 width = 0, height = 0;
  int channels = 0, bit_depth = 0;
};

inline bool decode_rows(PngReadCursor& cursor, std::vector<std::uint8_t>& pixels,
                        std::vector<png_bytep>& rows, PngHeader& header) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, png_silent_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, &cursor, png_read_from_span);
  png_read_info(png, info);
  const int source_depth = png_get_bit_depth(png, info);
  const bool low_bit_gray = png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY && source_depth < 8;
  if (low_bit_gray)
    png_set_packing(png);  // one unscaled sample per byte
  else
    png_set_expand(png);  // palette -> rgb, tRNS -> alpha
  png_read_update_info(png, info);
  header.width = png_get_image_width(png, info);
  header.height = png_get_image_height(png, info);
  header.channels = png_get_channels(png, info);
  header.bit_depth = low_bit_gray ? source_depth : png_get_bit_depth(png, info);
  png_size_t stride = png_get_rowbytes(png, info);
  pixels.resize(stride * header.height);
  rows.resize(header.height);
  for (png_uint_32 y = 0; y < header.height; ++y) rows[y] = pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_png(const PngImage& img) {
  require(img.width > 0 && img.height > 0, "PNG must be non-empty");
  require(img.channels >= 1 && img.channels <= 4, "PNG channel count must be 1..4");
  require(img.bit_depth == 8 || img.bit_depth == 16 ||
              (img.bit_depth == 1 && img.channels == 1),
          "unsupported PNG bit depth");
  require(img.samples.size() ==
              static_cast<std::size_t>(img.width) * img.height * img.channels,
          "PNG sample buffer size mismatch");

  const std::size_t per_row = static_cast<std::size_t>(img.width) * img.channels;
  const std::size_t stride =
      img.bit_depth == 1 ? (per_row + 7) / 8 : per_row * (img.bit_depth / 8);
  std::vector<std::uint8_t> packed(stride * img.height, 0);
  for (int y = 0; y < img.height; ++y) {
    std::uint8_t* row = packed.data() + stride * y;
    const std::uint16_t* src = img.samples.data() + per_row * y;
    for (std::size_t i = 0; i < per_row; ++i) {
      if (img.bit_depth == 1) {
        if (src[i]) row[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
      } else if (img.bit_depth == 8) {
        row[i] = static_cast<std::uint8_t>(src[i]);
      } else {
        row[2 * i] = static_cast<std::uint8_t>(src[i] >> 8);
        row[2 * i + 1] = static_cast<std::uint8_t>(src[i] & 0xff);
      }
    }
  }
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = packed.data() + stride * y;
  std::vector<std::uint8_t> out;
  if (!detail::encode_rows(img, rows, out)) fail(ErrorCode::Io, "PNG encoding failed");
  return out;
}

inline PngImage decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
    fail(ErrorCode::Parse, "data is not a PNG stream");
  detail::PngReadCursor cursor{bytes.data(), bytes.size(), 0};
  std::vector<std::uint8_t> pixels;
  std::vector<png_bytep> rows;
  detail::PngHeader h;
  if (!detail::decode_rows(cursor, pixels, rows, h))
    fail(ErrorCode::Parse, "corrupt PNG stream");

  PngImage img;
  img.width = static_cast<int>(h.width);
  img.height = static_cast<int>(h.height);
  img.channels = h.channels;
  img.bit_depth = h.bit_depth;
  const std::size_t per_row = static_cast<std::size_t>(img.width) * img.channels;
  img.samples.resize(per_row * img.height);
  for (int y = 0; y < img.height; ++y) {
    const std::uint8_t* row = rows[y];
    std::uint16_t* dst = img.samples.data() + per_row * y;
    for (std::size_t i = 0; i < per_row; ++i)
      dst[i] = img.bit_depth == 16
                   ? static_cast<std::uint16_t>((row[2 * i] << 8) | row[2 * i + 1])
                   : row[i];
  }
  return img;
}

inline void write_file_bytes(const std::filesystem::path& path,
                             std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::Io, "cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorCode::Io, "write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::Io, "cannot open: " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_png(const std::filesystem::path& path, const PngImage& img) {
  write_file_bytes(path, encode_png(img));
}

inline PngImage read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    fail(ErrorCode::Io, "file not found: " + path.string());
  return decode_png(read_file_bytes(path));
}

}  // namespace texgen
