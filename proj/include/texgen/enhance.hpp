#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "texgen/error.hpp"
#include "texgen/genstage.hpp"
#include "texgen/image.hpp"
#include "texgen/parallel.hpp"
#include "texgen/uvbake.hpp"

namespace texgen {

/// Overlapping square patches over a square image. Origins are the same
/// along both axes; patches are enumerated row-major.
struct PatchSchedule {
  int image_size = 0;
  int patch_size = 0;
  int stride = 0;
  std::vector<int> axis_origins;
  std::vector<std::pair<int, int>> patches;  // (x0, y0)

  int per_axis() const { return static_cast<int>(axis_origins.size()); }
};

/// Origins 0, stride, 2*stride, ... with the last one clamped so the final
/// patch ends exactly at the image edge.
inline PatchSchedule plan_patches(int image_size, int patch_size, int overlap) {
  require(patch_size > 0 && patch_size <= image_size, "patch size must be in [1, image size]");
  require(overlap >= 0 && overlap < patch_size, "overlap must be in [0, patch size)");
  PatchSchedule s;
  s.image_size = image_size;
  s.patch_size = patch_size;
  s.stride = patch_size - overlap;
  for (int o = 0;; o += s.stride) {
    if (o + patch_size >= image_size) {
      s.axis_origins.push_back(image_size - patch_size);
      break;
    }
    s.axis_origins.push_back(o);
  }
  for (int y : s.axis_origins)
    for (int x : s.axis_origins) s.patches.emplace_back(x, y);
  return s;
}

/// Per-pixel Gaussian weights of one patch, peak at the patch center.
struct WeightMap {
  int patch_size = 0;
  double sigma = 0;
  std::vector<double> weights;

  double at(int x, int y) const { return weights[static_cast<std::size_t>(y) * patch_size + x]; }
};

/// w(x, y) = exp(-d^2 / (2 sigma^2)), d measured from pixel centers to the
/// patch center.
inline WeightMap gaussian_weight_map(int patch_size, double sigma) {
  require(patch_size > 0, "patch size must be positive");
  require(sigma > 0, "sigma must be positive");
  WeightMap m;
  m.patch_size = patch_size;
  m.sigma = sigma;
  m.weights.resize(static_cast<std::size_t>(patch_size) * patch_size);
  const double c = 0.5 * patch_size;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int y = 0; y < patch_size; ++y)
    for (int x = 0; x < patch_size; ++x) {
      const double dx = x + 0.5 - c, dy = y + 0.5 - c;
      m.weights[static_cast<std::size_t>(y) * patch_size + x] = std::exp(-(dx * dx + dy * dy) * inv);
    }
  return m;
}

namespace detail {

// For each coordinate along an axis, the ascending list of axis-patch indices
// whose span contains it.
inline std::vector<std::vector<int>> axis_cover(const PatchSchedule& s) {
  std::vector<std::vector<int>> cover(s.image_size);
  for (int k = 0; k < s.per_axis(); ++k)
    for (int i = s.axis_origins[k]; i < s.axis_origins[k] + s.patch_size; ++i) cover[i].push_back(k);
  return cover;
}

}  // namespace detail

/// Sum of patch weights covering pixel (x, y); the normalizer of the
/// aggregation.
inline double coverage_weight(const PatchSchedule& s, const WeightMap& w, int x, int y) {
  double total = 0;
  for (const auto& [ox, oy] : s.patches)
    if (x >= ox && x < ox + s.patch_size && y >= oy && y < oy + s.patch_size)
      total += w.at(x - ox, y - oy);
  return total;
}

/// Per-pixel convex combination of overlapping patch predictions:
///   out(p) = sum_k w(p - o_k) pred_k(p - o_k) / sum_k w(p - o_k).
/// Evaluated as ref + sum_k w_k (v_k - ref) / W with ref the first
/// contributing value, in patch-index order, so agreeing predictions
/// reproduce their common value exactly.
template <typename T>
void aggregate_patches_into(std::span<const Image<T>> predictions, const PatchSchedule& s,
                            const WeightMap& w, Image<T>& out) {
  require(predictions.size() == s.patches.size(),
          "expected " + std::to_string(s.patches.size()) + " patch predictions, got " +
              std::to_string(predictions.size()));
  require(w.patch_size == s.patch_size, "weight map size differs from patch size");
  const int ch = predictions.empty() ? 0 : predictions[0].channels;
  for (const auto& p : predictions)
    require(p.width == s.patch_size && p.height == s.patch_size && p.channels == ch,
            "patch prediction has wrong size");

  const auto cover = detail::axis_cover(s);
  const int n_axis = s.per_axis();
  const int n = s.image_size, ps = s.patch_size;
  out.width = out.height = n;
  out.channels = ch;
  out.data.resize(static_cast<std::size_t>(n) * n * ch);  // every pixel is overwritten
  parallel_bands(n, [&](int row_begin, int row_end) {
    std::vector<double> acc(ch);
    std::vector<const T*> src;
    std::vector<const double*> wrow;
    for (int y = row_begin; y < row_end; ++y) {
      T* o = out.pixel(0, y);
      int x = 0;
      while (x < n) {
        // Columns [x, x_end) share one set of covering patches.
        int x_end = x + 1;
        while (x_end < n && cover[x_end] == cover[x]) ++x_end;
        src.clear();
        wrow.clear();
        for (int ky : cover[y]) {
          const int ly = y - s.axis_origins[ky];
          for (int kx : cover[x]) {
            const int lx = x - s.axis_origins[kx];
            src.push_back(predictions[static_cast<std::size_t>(ky) * n_axis + kx].pixel(lx, ly));
            wrow.push_back(&w.weights[static_cast<std::size_t>(ly) * ps + lx]);
          }
        }
        const int len = x_end - x;
        if (src.size() == 1) {
          // One contributor: ref + 0 / W is ref itself.
          std::copy(src[0], src[0] + static_cast<std::size_t>(len) * ch, o + static_cast<std::size_t>(x) * ch);
        } else {
          for (int i = 0; i < len; ++i) {
            const T* ref = src[0] + static_cast<std::size_t>(i) * ch;
            double wsum = 0;
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::size_t k = 0; k < src.size(); ++k) {
              const T* v = src[k] + static_cast<std::size_t>(i) * ch;
              const double wk = wrow[k][i];
              wsum += wk;
              for (int c = 0; c < ch; ++c)
                acc[c] += wk * (static_cast<double>(v[c]) - static_cast<double>(ref[c]));
            }
            T* op = o + static_cast<std::size_t>(x + i) * ch;
            for (int c = 0; c < ch; ++c)
              op[c] = static_cast<T>(static_cast<double>(ref[c]) + acc[c] / wsum);
          }
        }
        x = x_end;
      }
    }
  });
}

template <typename T>
Image<T> aggregate_patches(std::span<const Image<T>> predictions, const PatchSchedule& s,
                           const WeightMap& w) {
  Image<T> out;
  aggregate_patches_into(predictions, s, w, out);
  return out;
}

/// One denoising step of a patch backend: (patch, step index, patch index).
template <typename T>
using PatchStep = std::function<Image<T>(const Image<T>&, int, int)>;

/// Runs `steps` rounds of crop -> per-patch step -> aggregate. Patch steps
/// within a round run in patch order; the aggregation is the deterministic
/// reduction above.
template <typename T>
Image<T> multidiffusion_run(const Image<T>& initial, int steps, const PatchStep<T>& step,
                            const PatchSchedule& s, const WeightMap& w) {
  require(steps >= 1, "multidiffusion needs at least one step");
  require(initial.width == s.image_size && initial.height == s.image_size,
          "image size differs from patch schedule");
  Image<T> current = initial, next;
  std::vector<Image<T>> preds(s.patches.size());
  Image<T> patch;
  for (int t = 0; t < steps; ++t) {
    for (std::size_t k = 0; k < s.patches.size(); ++k) {
      const auto [x0, y0] = s.patches[k];
      crop_into(current, x0, y0, s.patch_size, s.patch_size, patch);
      try {
        preds[k] = step(patch, t, static_cast<int>(k));
      } catch (const Error& e) {
        Error wrapped(e.code(), "diffusion step " + std::to_string(t) + ", patch " +
                                    std::to_string(k) + ": " + e.what());
        throw wrapped;
      }
    }
    aggregate_patches_into<T>(preds, s, w, next);
    std::swap(current, next);
  }
  return current;
}

template <typename T>
using Codec = std::function<Image<T>(const Image<T>&)>;

/// Applies `codec` to overlapping square tiles and blends the outputs with
/// Gaussian aggregation at the codec's output scale. sigma <= 0 selects a
/// quarter of the output tile size.
template <typename T>
Image<T> tiled_apply(const Image<T>& image, const Codec<T>& codec, int tile, int overlap,
                     double sigma = 0.0) {
  require(image.width == image.height, "tiled codec expects a square image");
  require(tile <= image.width, "tile larger than image");
  const PatchSchedule in = plan_patches(image.width, tile, overlap);
  std::vector<Image<T>> outs;
  outs.reserve(in.patches.size());
  int out_tile = -1;
  for (const auto& [x0, y0] : in.patches) {
    outs.push_back(codec(crop(image, x0, y0, tile, tile)));
    const auto& o = outs.back();
    if (out_tile < 0) out_tile = o.width;
    if (o.width != out_tile || o.height != out_tile || o.channels != outs.front().channels)
      fail(ErrorCode::InvalidInput, "codec output scale is inconsistent across tiles");
  }
  const long long num = out_tile, den = tile;
  if ((static_cast<long long>(image.width) * num) % den != 0)
    fail(ErrorCode::InvalidInput, "codec scale does not map the image onto whole pixels");

  PatchSchedule out;
  out.image_size = static_cast<int>(image.width * num / den);
  out.patch_size = out_tile;
  for (int o : in.axis_origins) {
    if ((o * num) % den != 0)
      fail(ErrorCode::InvalidInput, "codec scale does not map tile origins onto whole pixels");
    out.axis_origins.push_back(static_cast<int>(o * num / den));
  }
  for (int y : out.axis_origins)
    for (int x : out.axis_origins) out.patches.emplace_back(x, y);
  out.stride = out.per_axis() > 1 ? out.axis_origins[1] - out.axis_origins[0] : out_tile;
  const WeightMap w = gaussian_weight_map(out_tile, sigma > 0 ? sigma : out_tile / 4.0);
  return aggregate_patches<T>(outs, out, w);
}

// ---------------------------------------------------------------------------
// Texture enhancement
// ---------------------------------------------------------------------------

struct EnhanceParams {
  int patch_size = 512;
  int overlap = 128;
  double sigma = 0.0;  // <= 0: patch_size / 4
  int steps = 50;
  int max_size = 8192;
  std::string prompt;
  std::uint64_t seed = 0;
};

/// Per-patch enhancer. The mock is the identity; the remote enhancer sends
/// each patch with kind "enhance" and replaces it with the response.
inline PatchStep<float> make_enhancer(const BackendDescriptor& backend, const EnhanceParams& params) {
  backend.validate();
  switch (backend.kind) {
    case BackendKind::Mock:
    case BackendKind::PullPush:
      return [](const ImageF& patch, int, int) { return patch; };
    case BackendKind::Remote:
      return [backend, params](const ImageF& patch, int step, int) {
        PngImage png = color_to_png(convert_image<double>(patch), {}, 16);
        nlohmann::json body = {{"kind", "enhance"},
                               {"prompt", params.prompt},
                               {"seed", params.seed},
                               {"step", step},
                               {"total_steps", params.steps},
                               {"images", {{"image", base64_encode(encode_png(png))}}}};
        PngImage reply = remote_call(backend, body);
        if (reply.width != patch.width || reply.height != patch.height)
          fail(ErrorCode::Backend, "enhancer returned a patch of the wrong size");
        return convert_image<float>(png_to_color(reply).first);
      };
  }
  fail(ErrorCode::InvalidInput, "unknown enhancer backend");
}

/// Resamples to round(resolution * ratio) with bicubic filtering, then runs
/// the enhancer over overlapping patches with Gaussian aggregation.
inline UVImage enhance_texture(const UVImage& texture, double ratio, const PatchStep<float>& enhancer,
                               const EnhanceParams& params = {}) {
  require(ratio > 0 && std::isfinite(ratio), "enhancement ratio must be positive");
  const long long target = std::llround(texture.resolution * ratio);
  require(target >= 1, "enhanced texture would be empty");
  if (target > params.max_size)
    fail(ErrorCode::InvalidInput, "target size " + std::to_string(target) + " exceeds maximum " +
                                      std::to_string(params.max_size));
  const int size = static_cast<int>(target);
  ImageF work = resize_bicubic(convert_image<float>(texture.color), size, size);

  const int patch = std::min(params.patch_size, size);
  const int overlap = std::clamp(params.overlap, 0, patch - 1);
  const PatchSchedule sched = plan_patches(size, patch, overlap);
  const WeightMap w = gaussian_weight_map(patch, params.sigma > 0 ? params.sigma : patch / 4.0);
  work = multidiffusion_run<float>(work, params.steps, enhancer, sched, w);

  UVImage out;
  out.resolution = size;
  out.kind = UVKind::Color;
  out.color = convert_image<double>(work);
  out.mapped = texture.mapped.empty()
                   ? Mask(static_cast<std::size_t>(size) * size, 1)
                   : resize_mask_nearest(texture.mapped, texture.resolution, texture.resolution, size, size);
  return out;
}

}  // namespace texgen
