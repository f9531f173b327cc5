#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "texgen/error.hpp"

namespace texgen {

/// Interleaved multi-channel raster, row 0 at the top.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c, T fill = T{})
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  bool empty() const { return data.empty(); }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }

  T* pixel(int x, int y) { return data.data() + index(x, y) * channels; }
  const T* pixel(int x, int y) const {
    return data.data() + index(x, y) * channels;
  }
  T& at(int x, int y, int c) { return pixel(x, y)[c]; }
  const T& at(int x, int y, int c) const { return pixel(x, y)[c]; }

  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  friend bool operator==(const Image&, const Image&) = default;
};

using ImageF = Image<float>;
using ImageD = Image<double>;

/// Per-pixel boolean plane (0/1), same indexing as Image.
using Mask = std::vector<std::uint8_t>;

template <typename To, typename From>
Image<To> convert_image(const Image<From>& src) {
  Image<To> out;
  out.width = src.width;
  out.height = src.height;
  out.channels = src.channels;
  out.data.resize(src.data.size());
  std::transform(src.data.begin(), src.data.end(), out.data.begin(),
                 [](From v) { return static_cast<To>(v); });
  return out;
}

/// Copies a rectangle into `out`, reusing its storage when the size matches.
template <typename T>
void crop_into(const Image<T>& src, int x0, int y0, int w, int h, Image<T>& out) {
  require(x0 >= 0 && y0 >= 0 && x0 + w <= src.width && y0 + h <= src.height,
          "crop rectangle outside image");
  out.width = w;
  out.height = h;
  out.channels = src.channels;
  out.data.resize(static_cast<std::size_t>(w) * h * src.channels);
  for (int y = 0; y < h; ++y) {
    const T* row = src.pixel(x0, y0 + y);
    std::copy(row, row + static_cast<std::size_t>(w) * src.channels,
              out.pixel(0, y));
  }
}

template <typename T>
Image<T> crop(const Image<T>& src, int x0, int y0, int w, int h) {
  Image<T> out;
  crop_into(src, x0, y0, w, h, out);
  return out;
}

template <typename T>
void paste(Image<T>& dst, const Image<T>& src, int x0, int y0) {
  require(dst.channels == src.channels, "paste channel mismatch");
  require(x0 >= 0 && y0 >= 0 && x0 + src.width <= dst.width &&
              y0 + src.height <= dst.height,
          "paste rectangle outside image");
  for (int y = 0; y < src.height; ++y) {
    const T* row = src.pixel(0, y);
    std::copy(row, row + static_cast<std::size_t>(src.width) * src.channels,
              dst.pixel(x0, y0 + y));
  }
}

// ---------------------------------------------------------------------------
// UV <-> texel convention
//
// Texel (x, y) of a res x res UV image has its center at
//   u = (x + 0.5) / res,  v = 1 - (y + 0.5) / res
// so row 0 is the top of the image (v near 1), matching PNG row order and
// OBJ's bottom-left UV origin. Every module goes through these helpers.
// ---------------------------------------------------------------------------

inline Eigen::Vector2d texel_center_uv(int x, int y, int res) {
  return {(x + 0.5) / res, 1.0 - (y + 0.5) / res};
}

/// Continuous pixel coordinates of a UV point (texel centers at k + 0.5).
inline Eigen::Vector2d uv_to_pixel(const Eigen::Vector2d& uv, int res) {
  return {uv.x() * res, (1.0 - uv.y()) * res};
}

/// Texel whose square contains uv, clamped to the image.
inline std::pair<int, int> nearest_texel(const Eigen::Vector2d& uv, int res) {
  Eigen::Vector2d p = uv_to_pixel(uv, res);
  int x = std::clamp(static_cast<int>(std::floor(p.x())), 0, res - 1);
  int y = std::clamp(static_cast<int>(std::floor(p.y())), 0, res - 1);
  return {x, y};
}

/// Bilinear sample at continuous pixel coordinates (centers at k + 0.5),
/// clamp-to-edge addressing.
template <typename T>
void sample_bilinear(const Image<T>& img, double px, double py, double* out) {
  double fx = px - 0.5, fy = py - 0.5;
  double x0f = std::floor(fx), y0f = std::floor(fy);
  double tx = fx - x0f, ty = fy - y0f;
  int x0 = static_cast<int>(x0f), y0 = static_cast<int>(y0f);
  auto cx = [&](int x) { return std::clamp(x, 0, img.width - 1); };
  auto cy = [&](int y) { return std::clamp(y, 0, img.height - 1); };
  const T* p00 = img.pixel(cx(x0), cy(y0));
  const T* p10 = img.pixel(cx(x0 + 1), cy(y0));
  const T* p01 = img.pixel(cx(x0), cy(y0 + 1));
  const T* p11 = img.pixel(cx(x0 + 1), cy(y0 + 1));
  for (int c = 0; c < img.channels; ++c) {
    double top = (1 - tx) * p00[c] + tx * p10[c];
    double bottom = (1 - tx) * p01[c] + tx * p11[c];
    out[c] = (1 - ty) * top + ty * bottom;
  }
}

/// Bilinear texture lookup at a UV coordinate.
template <typename T>
void sample_uv(const Image<T>& tex, const Eigen::Vector2d& uv, double* out) {
  Eigen::Vector2d p{uv.x() * tex.width, (1.0 - uv.y()) * tex.height};
  sample_bilinear(tex, p.x(), p.y(), out);
}

namespace detail {
// Keys cubic convolution kernel, a = -0.5 (Catmull-Rom).
inline double cubic_weight(double t) {
  t = std::abs(t);
  constexpr double a = -0.5;
  if (t <= 1.0) return ((a + 2) * t - (a + 3)) * t * t + 1;
  if (t < 2.0) return ((a * t - 5 * a) * t + 8 * a) * t - 4 * a;
  return 0.0;
}
}  // namespace detail

/// Separable bicubic resample to (w, h), pixel-center aligned, results clamped
/// to [lo, hi]. Same-size input is returned unchanged.
template <typename T>
Image<T> resize_bicubic(const Image<T>& src, int w, int h, double lo = 0.0,
                        double hi = 1.0) {
  require(w > 0 && h > 0, "resize target must be positive");
  if (w == src.width && h == src.height) return src;

  struct Tap {
    int index[4];
    double weight[4];
  };
  auto make_taps = [](int src_n, int dst_n) {
    std::vector<Tap> taps(dst_n);
    double scale = static_cast<double>(src_n) / dst_n;
    for (int i = 0; i < dst_n; ++i) {
      double s = (i + 0.5) * scale - 0.5;
      double base = std::floor(s);
      double sum = 0;
      for (int k = 0; k < 4; ++k) {
        int idx = static_cast<int>(base) - 1 + k;
        taps[i].index[k] = std::clamp(idx, 0, src_n - 1);
        taps[i].weight[k] = detail::cubic_weight(s - (base - 1 + k));
        sum += taps[i].weight[k];
      }
      for (double& wgt : taps[i].weight) wgt /= sum;
    }
    return taps;
  };
  const auto xt = make_taps(src.width, w);
  const auto yt = make_taps(src.height, h);
  const int ch = src.channels;

  // Horizontal pass into double, then vertical.
  std::vector<double> tmp(static_cast<std::size_t>(w) * src.height * ch);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0;
        for (int k = 0; k < 4; ++k)
          acc += xt[x].weight[k] * src.at(xt[x].index[k], y, c);
        tmp[(static_cast<std::size_t>(y) * w + x) * ch + c] = acc;
      }
  Image<T> out(w, h, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0;
        for (int k = 0; k < 4; ++k)
          acc += yt[y].weight[k] *
                 tmp[(static_cast<std::size_t>(yt[y].index[k]) * w + x) * ch + c];
        out.at(x, y, c) = static_cast<T>(std::clamp(acc, lo, hi));
      }
  return out;
}

/// Nearest-neighbour resample of a mask plane.
inline Mask resize_mask_nearest(const Mask& src, int sw, int sh, int w, int h) {
  Mask out(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    int sy = std::min(sh - 1, static_cast<int>((y + 0.5) * sh / h));
    for (int x = 0; x < w; ++x) {
      int sx = std::min(sw - 1, static_cast<int>((x + 0.5) * sw / w));
      out[static_cast<std::size_t>(y) * w + x] =
          src[static_cast<std::size_t>(sy) * sw + sx];
    }
  }
  return out;
}

/// PSNR in dB over pixels where mask is set (all pixels if mask is empty).
template <typename A, typename B>
double psnr(const Image<A>& a, const Image<B>& b, std::span<const std::uint8_t> mask = {},
            double peak = 1.0) {
  require(a.width == b.width && a.height == b.height && a.channels == b.channels,
          "psnr shape mismatch");
  double se = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.pixel_count(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    for (int c = 0; c < a.channels; ++c) {
      double d = static_cast<double>(a.data[i * a.channels + c]) -
                 static_cast<double>(b.data[i * b.channels + c]);
      se += d * d;
    }
    n += a.channels;
  }
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  double mse = se / n;
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(peak) - 10.0 * std::log10(mse);
}

inline double mask_fraction(const Mask& m) {
  if (m.empty()) return 0.0;
  std::size_t n = 0;
  for (auto v : m) n += v ? 1 : 0;
  return static_cast<double>(n) / m.size();
}

}  // namespace texgen
