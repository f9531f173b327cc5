#pragma once

#include <atomic>
#include <cmath>
#include <string>
#include <vector>

#include "texgen/error.hpp"
#include "texgen/image.hpp"
#include "texgen/log.hpp"
#include "texgen/mesh.hpp"
#include "texgen/parallel.hpp"
#include "texgen/raster.hpp"

namespace texgen {

enum class UVKind { Position, Normal, Color };

/// Square UV-space image with a per-texel "mapped" flag. Unmapped texels
/// hold 0 in every channel unless a later step (dilation) fills them.
struct UVImage {
  int resolution = 0;
  UVKind kind = UVKind::Color;
  ImageD color;  // 3 channels
  Mask mapped;
  int degenerate_faces = 0;
};

namespace detail {

struct BakeTargets {
  ImageD* color = nullptr;
  Mask* mapped = nullptr;
};

// Rasterizes every UV triangle; fails on texels claimed by two islands.
inline int bake_uv(const Mesh& mesh, int res, PassKind kind, BakeTargets out, int bands) {
  require(res > 0, "bake resolution must be positive");
  require(mesh.has_uvs(), "baking requires UVs", ErrorCode::Layout);
  const Mesh labeled_storage = mesh.has_islands() ? Mesh{} : detect_islands(mesh);
  const Mesh& labeled = mesh.has_islands() ? mesh : labeled_storage;

  std::vector<int> claim(static_cast<std::size_t>(res) * res, -1);
  std::atomic<bool> overlap{false};
  std::atomic<int> degenerate{0};
  parallel_bands(
      res,
      [&](int row_begin, int row_end) {
        int deg = rasterize_uv_faces(
            labeled, res, row_begin, row_end, [&](int x, int y, int fi, const Barycentric& b) {
              const std::size_t i = static_cast<std::size_t>(y) * res + x;
              const int island = labeled.island_ids[fi];
              if (claim[i] >= 0 && claim[i] != island) overlap = true;
              claim[i] = island;
              if (out.mapped) (*out.mapped)[i] = 1;
              if (!out.color) return;
              const Face& f = labeled.faces[fi];
              Eigen::Vector3d v = kind == PassKind::Position
                                      ? interpolate_position(labeled, f, b)
                                      : encode_normal(interpolate_normal(labeled, f, b));
              for (int c = 0; c < 3; ++c) out.color->data[i * 3 + c] = v[c];
            });
        // Each band visits every face; count degenerates once.
        if (row_begin == 0) degenerate = deg;
      },
      bands);
  if (overlap) fail(ErrorCode::Layout, "UV layout has overlapping islands; repack before baking");
  if (degenerate > 0)
    log_warning(std::to_string(degenerate.load()) + " zero-area UV triangle(s) skipped while baking");
  return degenerate;
}

}  // namespace detail

/// Bakes world position (already normalized) or encoded normals into UV
/// space. Rejects layouts where two islands claim the same texel.
inline UVImage bake_pass(const Mesh& mesh, PassKind kind, int resolution, int bands = 0) {
  require(kind == PassKind::Position || kind == PassKind::Normal,
          "only position and normal channels can be baked");
  UVImage img;
  img.resolution = resolution;
  img.kind = kind == PassKind::Position ? UVKind::Position : UVKind::Normal;
  img.color = ImageD(resolution, resolution, 3, 0.0);
  img.mapped.assign(static_cast<std::size_t>(resolution) * resolution, 0);
  img.degenerate_faces = detail::bake_uv(mesh, resolution, kind, {&img.color, &img.mapped}, bands);
  return img;
}

/// Texels covered by some UV triangle; identical to bake_pass(...).mapped.
inline Mask compute_coverage_mask(const Mesh& mesh, int resolution, int bands = 0) {
  Mask mapped(static_cast<std::size_t>(resolution) * resolution, 0);
  detail::bake_uv(mesh, resolution, PassKind::Position, {nullptr, &mapped}, bands);
  return mapped;
}

inline UVImage make_color_uv_image(ImageD color, Mask mapped) {
  require(color.width == color.height && color.channels == 3, "UV images are square RGB");
  require(mapped.size() == color.pixel_count(), "mapped mask size mismatch");
  UVImage img;
  img.resolution = color.width;
  img.kind = UVKind::Color;
  img.color = std::move(color);
  img.mapped = std::move(mapped);
  return img;
}

/// 16-bit RGBA for position/normal, 8-bit for color; alpha = mapped.
inline PngImage uv_image_to_png(const UVImage& img) {
  return color_to_png(img.color, img.mapped, img.kind == UVKind::Color ? 8 : 16);
}

}  // namespace texgen
