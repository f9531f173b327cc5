#pragma once

#include <cmath>
#include <exception>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "texgen/error.hpp"
#include "texgen/image.hpp"
#include "texgen/log.hpp"
#include "texgen/mesh.hpp"
#include "texgen/parallel.hpp"
#include "texgen/raster.hpp"
#include "texgen/uvbake.hpp"

namespace texgen {

/// Incidence-weighted blending parameters. weight = incidence^alpha,
/// resolved = sum(weight * color) / (sum(weight) + epsilon).
struct BlendParams {
  double alpha = 6.0;
  double epsilon = 1e-8;
  int n_views = 4;
  double weight_floor = 1e-6;  // texels below this count as unpainted

  void validate() const {
    require(alpha >= 0.0, "blend alpha must be >= 0");
    require(epsilon > 0.0, "blend epsilon must be > 0");
    require(n_views >= 1, "blend needs at least one view");
  }
};

/// Per-texel accumulators of weighted color and weight, plus the blended
/// result once blend_views has run.
struct PartialTexture {
  int resolution = 0;
  std::vector<double> color_accum;   // 3 per texel
  std::vector<double> weight_accum;  // 1 per texel
  ImageD resolved;                   // empty until blended

  static PartialTexture empty(int res) {
    require(res > 0, "partial texture resolution must be positive");
    PartialTexture t;
    t.resolution = res;
    t.color_accum.assign(static_cast<std::size_t>(res) * res * 3, 0.0);
    t.weight_accum.assign(static_cast<std::size_t>(res) * res, 0.0);
    return t;
  }

  bool blended() const { return !resolved.empty(); }

  /// Adds another accumulator texel-wise.
  void add(const PartialTexture& other) {
    require(other.resolution == resolution, "accumulator resolution mismatch");
    for (std::size_t i = 0; i < color_accum.size(); ++i) color_accum[i] += other.color_accum[i];
    for (std::size_t i = 0; i < weight_accum.size(); ++i) weight_accum[i] += other.weight_accum[i];
  }
};

/// Texels needing completion (true = inpaint).
struct InpaintMask {
  int resolution = 0;
  Mask flags;

  std::size_t count() const {
    std::size_t n = 0;
    for (auto f : flags) n += f ? 1 : 0;
    return n;
  }
};

/// Clamped cosine between the surface-to-camera direction and the outward
/// normal. Back-facing and grazing configurations give 0.
inline double incidence_unchecked(const Eigen::Vector3d& view_dir, const Eigen::Vector3d& normal) {
  return std::max(0.0, view_dir.dot(normal));
}

inline double incidence(const Eigen::Vector3d& view_dir, const Eigen::Vector3d& normal) {
  constexpr double tol = 1e-6;
  require(std::abs(view_dir.norm() - 1.0) <= tol && std::abs(normal.norm() - 1.0) <= tol,
          "incidence expects unit vectors");
  return incidence_unchecked(view_dir, normal);
}

/// phi^alpha with the convention that a zero incidence never contributes,
/// including at alpha = 0.
inline double incidence_weight(double phi, double alpha) {
  if (!(phi > 0.0)) return 0.0;
  return alpha == 0.0 ? 1.0 : std::pow(phi, alpha);
}

/// Splats one view into `accum`. Visibility comes from re-rasterizing the
/// mesh with the same rasterizer that produced the conditioning passes, so a
/// covered pixel maps to exactly the face it showed. Each covered pixel adds
/// weight * color to the texel containing its interpolated UV.
///
/// The view's contribution is summed in a scratch buffer first and then added
/// to `accum`, so processing views concurrently into separate accumulators
/// and summing them in view order gives bit-identical results.
inline PartialTexture backproject_view(const Mesh& mesh, const Camera& cam, const PassImage& view,
                                       PartialTexture accum, const BlendParams& params) {
  params.validate();
  require(mesh.has_uvs(), "backprojection requires UVs");
  require(view.width() == cam.image_size && view.height() == cam.image_size,
          "view resolution " + std::to_string(view.width()) + " does not match rig size " +
              std::to_string(cam.image_size));
  const Visibility vis = rasterize_view(mesh, cam);
  const Eigen::Vector3d eye = cam.eye();
  const int res = accum.resolution;
  PartialTexture local = PartialTexture::empty(res);

  std::size_t mismatched = 0;
  for (std::size_t i = 0; i < vis.face.size(); ++i) {
    const bool geom = vis.face[i] >= 0;
    if (geom != static_cast<bool>(view.coverage[i])) ++mismatched;
    if (!geom || !view.coverage[i]) continue;
    const Face& f = mesh.faces[vis.face[i]];
    const Barycentric& b = vis.bary[i];
    const Eigen::Vector3d p = interpolate_position(mesh, f, b);
    const Eigen::Vector3d n = interpolate_normal(mesh, f, b);
    const Eigen::Vector3d to_cam = (eye - p).normalized();
    const double w = incidence_weight(incidence_unchecked(to_cam, n), params.alpha);
    if (w == 0.0) continue;
    auto [tx, ty] = nearest_texel(interpolate_uv(mesh, f, b), res);
    const std::size_t t = static_cast<std::size_t>(ty) * res + tx;
    for (int c = 0; c < 3; ++c) local.color_accum[t * 3 + c] += w * view.color.data[i * 3 + c];
    local.weight_accum[t] += w;
  }
  if (mismatched > 0)
    log_warning("view " + std::to_string(cam.index) + ": " + std::to_string(mismatched) +
                " pixel(s) where view coverage differs from geometry");
  accum.add(local);
  return accum;
}

/// Backprojects all views. Views run concurrently into separate accumulators
/// that are summed in view order.
inline PartialTexture backproject_views(const Mesh& mesh, std::span<const Camera> cams,
                                        std::span<const PassImage> views, int resolution,
                                        const BlendParams& params, bool concurrent = true) {
  require(cams.size() == views.size(), "camera/view count mismatch");
  const std::size_t n = cams.size();
  std::vector<PartialTexture> parts(n);
  auto one = [&](std::size_t k) {
    parts[k] = backproject_view(mesh, cams[k], views[k], PartialTexture::empty(resolution), params);
  };
  if (concurrent && thread_count() > 1 && n > 1) {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(n);
    for (std::size_t k = 0; k < n; ++k)
      workers.emplace_back([&, k] {
        try {
          one(k);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    for (auto& w : workers) w.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (std::size_t k = 0; k < n; ++k) one(k);
  }
  PartialTexture total = PartialTexture::empty(resolution);
  for (const auto& p : parts) total.add(p);
  return total;
}

/// resolved = color_accum / (weight_accum + epsilon); texels with no weight
/// resolve to 0.
inline PartialTexture blend_views(PartialTexture accum, const BlendParams& params) {
  params.validate();
  const int res = accum.resolution;
  accum.resolved = ImageD(res, res, 3, 0.0);
  for (std::size_t t = 0; t < accum.weight_accum.size(); ++t) {
    const double w = accum.weight_accum[t];
    if (w == 0.0) continue;
    for (int c = 0; c < 3; ++c)
      accum.resolved.data[t * 3 + c] = accum.color_accum[t * 3 + c] / (w + params.epsilon);
  }
  return accum;
}

/// mask = mapped AND weight < weight_floor.
inline InpaintMask compute_inpaint_mask(const PartialTexture& blended, const Mask& mapped,
                                        double weight_floor = 1e-6) {
  require(blended.blended(), "partial texture must be blended before masking");
  require(mapped.size() == blended.weight_accum.size(),
          "coverage mask resolution does not match partial texture");
  InpaintMask m;
  m.resolution = blended.resolution;
  m.flags.resize(mapped.size());
  for (std::size_t t = 0; t < mapped.size(); ++t)
    m.flags[t] = mapped[t] && blended.weight_accum[t] < weight_floor ? 1 : 0;
  return m;
}

/// Texel partition counts: painted = mapped and not masked.
struct TexelStats {
  std::size_t total = 0, mapped = 0, painted = 0, masked = 0;

  double mapped_fraction() const { return total ? double(mapped) / total : 0.0; }
  double painted_fraction() const { return total ? double(painted) / total : 0.0; }
  double masked_fraction() const { return total ? double(masked) / total : 0.0; }
  double masked_of_mapped() const { return mapped ? double(masked) / mapped : 0.0; }
};

inline TexelStats texel_stats(const Mask& mapped, const InpaintMask& mask) {
  require(mapped.size() == mask.flags.size(), "texel stats size mismatch");
  TexelStats s;
  s.total = mapped.size();
  for (std::size_t t = 0; t < mapped.size(); ++t) {
    if (!mapped[t]) continue;
    ++s.mapped;
    if (mask.flags[t]) ++s.masked;
    else ++s.painted;
  }
  return s;
}

/// 16-bit gray weights scaled by the maximum weight.
inline PngImage weights_to_png(const PartialTexture& t) {
  PngImage png;
  png.width = png.height = t.resolution;
  png.channels = 1;
  png.bit_depth = 16;
  double maxw = 0;
  for (double w : t.weight_accum) maxw = std::max(maxw, w);
  png.samples.resize(t.weight_accum.size());
  for (std::size_t i = 0; i < t.weight_accum.size(); ++i)
    png.samples[i] = maxw > 0 ? static_cast<std::uint16_t>(std::lround(t.weight_accum[i] / maxw * 65535.0)) : 0;
  return png;
}

inline PngImage mask_to_png(const Mask& flags, int res) {
  PngImage png;
  png.width = png.height = res;
  png.channels = 1;
  png.bit_depth = 1;
  png.samples.assign(flags.begin(), flags.end());
  for (auto& s : png.samples) s = s ? 1 : 0;
  return png;
}

}  // namespace texgen
