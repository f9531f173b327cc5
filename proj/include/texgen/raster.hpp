#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "texgen/error.hpp"
#include "texgen/image.hpp"
#include "texgen/mesh.hpp"
#include "texgen/parallel.hpp"
#include "texgen/png_io.hpp"
#include "texgen/triangle_raster.hpp"

namespace texgen {

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

/// Perspective camera orbiting `look_at`; world up is +Y and azimuth 0 looks
/// down -Z from the +Z side.
struct Camera {
  double azimuth = 0.0;    // degrees
  double elevation = 0.0;  // degrees
  double distance = 1.0;   // from look_at, model units
  double fov_y = 40.0;     // degrees
  Eigen::Vector3d look_at{0.5, 0.5, 0.5};
  int image_size = 512;
  int index = 0;

  Eigen::Vector3d eye() const {
    double az = deg2rad(azimuth), el = deg2rad(elevation);
    return look_at + distance * Eigen::Vector3d(std::cos(el) * std::sin(az), std::sin(el),
                                                std::cos(el) * std::cos(az));
  }

  struct Frame {
    Eigen::Vector3d right, up, forward;
  };

  Frame frame() const {
    Eigen::Vector3d forward = (look_at - eye()).normalized();
    Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitY()).normalized();
    Eigen::Vector3d up = right.cross(forward);
    return {right, up, forward};
  }

  void validate() const {
    require(fov_y > 0.0 && fov_y < 180.0, "camera fov_y must be in (0, 180)");
    require(distance > 0.0, "camera distance must be positive");
    require(std::abs(elevation) < 90.0, "camera elevation must be in (-90, 90)");
    require(image_size > 0, "camera image size must be positive");
  }
};

/// Screen position (continuous pixel coordinates, y down) and view depth.
struct ScreenPoint {
  Eigen::Vector2d pixel;
  double depth;
};

/// Precomputed projection for one camera.
class Projector {
 public:
  explicit Projector(const Camera& cam) : eye_(cam.eye()), frame_(cam.frame()) {
    cam.validate();
    half_ = 0.5 * cam.image_size;
    focal_ = 1.0 / std::tan(0.5 * deg2rad(cam.fov_y));
  }

  ScreenPoint project(const Eigen::Vector3d& p) const {
    Eigen::Vector3d d = p - eye_;
    double z = d.dot(frame_.forward);
    double x = d.dot(frame_.right), y = d.dot(frame_.up);
    return {{half_ * (1.0 + focal_ * x / z), half_ * (1.0 - focal_ * y / z)}, z};
  }

  const Eigen::Vector3d& eye() const { return eye_; }

 private:
  Eigen::Vector3d eye_;
  Camera::Frame frame_;
  double half_ = 0, focal_ = 1;
};

struct ViewSetConfig {
  int image_size = 512;
  double elevation = 20.0;
  double fov_y = 40.0;
  double fill = 0.9;  // fraction of frame height taken by the bounding sphere
  double bounding_radius = 0.5 * std::numbers::sqrt3;  // circumsphere of [0,1]^3
  Eigen::Vector3d look_at{0.5, 0.5, 0.5};
};

/// Distance at which a sphere of `radius` spans `fill` of the frame height.
inline double framing_distance(double radius, double fov_y, double fill) {
  require(radius > 0 && fill > 0, "framing needs positive radius and fill");
  return (radius / fill) / std::sin(0.5 * deg2rad(fov_y));
}

/// `count` cameras evenly spaced in azimuth starting at 0.
inline std::vector<Camera> make_orbit(const ViewSetConfig& cfg, int count) {
  require(count >= 1, "view count must be at least 1");
  const double dist = framing_distance(cfg.bounding_radius, cfg.fov_y, cfg.fill);
  std::vector<Camera> cams;
  for (int k = 0; k < count; ++k) {
    Camera c;
    c.azimuth = 360.0 * k / count;
    c.elevation = cfg.elevation;
    c.distance = dist;
    c.fov_y = cfg.fov_y;
    c.look_at = cfg.look_at;
    c.image_size = cfg.image_size;
    c.index = k;
    c.validate();
    cams.push_back(c);
  }
  return cams;
}

/// The four-view conditioning rig: azimuths 0/90/180/270 at a shared
/// elevation and distance.
inline std::vector<Camera> make_view_set(const ViewSetConfig& cfg = {}) { return make_orbit(cfg, 4); }

// ---------------------------------------------------------------------------
// Visibility
// ---------------------------------------------------------------------------

/// Nearest-surface solution of one view: face id, view depth and
/// perspective-correct barycentrics per pixel.
struct Visibility {
  int size = 0;
  std::vector<int> face;      // -1 = background
  std::vector<double> depth;  // +inf = background
  std::vector<Barycentric> bary;

  bool covered(std::size_t i) const { return face[i] >= 0; }
};

inline Visibility rasterize_view(const Mesh& mesh, const Camera& cam, int bands = 0) {
  const Projector proj(cam);
  const int n = cam.image_size;
  std::vector<ScreenPoint> screen(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) screen[i] = proj.project(mesh.vertices[i]);

  Visibility vis;
  vis.size = n;
  const std::size_t count = static_cast<std::size_t>(n) * n;
  vis.face.assign(count, -1);
  vis.depth.assign(count, std::numeric_limits<double>::infinity());
  vis.bary.assign(count, Barycentric{});

  constexpr double near_plane = 1e-6;
  parallel_bands(
      n,
      [&](int row_begin, int row_end) {
        for (std::size_t fi = 0; fi < mesh.faces.size(); ++fi) {
          const Face& f = mesh.faces[fi];
          const ScreenPoint& s0 = screen[f.v[0]];
          const ScreenPoint& s1 = screen[f.v[1]];
          const ScreenPoint& s2 = screen[f.v[2]];
          // No clipping: triangles reaching behind the near plane are skipped.
          if (s0.depth <= near_plane || s1.depth <= near_plane || s2.depth <= near_plane) continue;
          const double iz[3] = {1.0 / s0.depth, 1.0 / s1.depth, 1.0 / s2.depth};
          rasterize_triangle(s0.pixel, s1.pixel, s2.pixel, n, row_begin, row_end,
                             [&](int x, int y, const Barycentric& l) {
                               const double inv_z = l[0] * iz[0] + l[1] * iz[1] + l[2] * iz[2];
                               const double z = 1.0 / inv_z;
                               const std::size_t i = static_cast<std::size_t>(y) * n + x;
                               if (!(z < vis.depth[i])) return;
                               vis.depth[i] = z;
                               vis.face[i] = static_cast<int>(fi);
                               vis.bary[i] = {l[0] * iz[0] * z, l[1] * iz[1] * z, l[2] * iz[2] * z};
                             });
        }
      },
      bands);
  return vis;
}

// ---------------------------------------------------------------------------
// Passes
// ---------------------------------------------------------------------------

enum class PassKind { Position, Normal, Combined };

inline const char* to_string(PassKind k) {
  switch (k) {
    case PassKind::Position: return "position";
    case PassKind::Normal: return "normal";
    case PassKind::Combined: return "combined";
  }
  return "?";
}

/// One rendered view. Coverage is authoritative; background pixels hold 0
/// in every channel and +inf depth.
struct PassImage {
  PassKind kind = PassKind::Position;
  int camera_index = 0;
  ImageD color;  // 3 channels in [0,1]
  Mask coverage;
  std::vector<double> depth;

  int width() const { return color.width; }
  int height() const { return color.height; }

  static PassImage blank(int w, int h, PassKind kind, int camera_index) {
    PassImage p;
    p.kind = kind;
    p.camera_index = camera_index;
    p.color = ImageD(w, h, 3, 0.0);
    p.coverage.assign(static_cast<std::size_t>(w) * h, 0);
    p.depth.assign(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::infinity());
    return p;
  }
};

inline Eigen::Vector3d interpolate_position(const Mesh& m, const Face& f, const Barycentric& b) {
  return interpolate(b, m.vertices[f.v[0]], m.vertices[f.v[1]], m.vertices[f.v[2]]);
}

inline Eigen::Vector2d interpolate_uv(const Mesh& m, const Face& f, const Barycentric& b) {
  return interpolate(b, m.uvs[f.t[0]], m.uvs[f.t[1]], m.uvs[f.t[2]]);
}

/// Interpolated then renormalized shading normal; falls back to the face
/// normal when the interpolated vector vanishes.
inline Eigen::Vector3d interpolate_normal(const Mesh& m, const Face& f, const Barycentric& b) {
  Eigen::Vector3d n = interpolate(b, m.normals[f.n[0]], m.normals[f.n[1]], m.normals[f.n[2]]);
  double len = n.norm();
  if (len > 1e-12) return n / len;
  Eigen::Vector3d g = (m.vertices[f.v[1]] - m.vertices[f.v[0]])
                          .cross(m.vertices[f.v[2]] - m.vertices[f.v[0]]);
  return g.norm() > 0 ? Eigen::Vector3d(g.normalized()) : Eigen::Vector3d::UnitZ();
}

inline Eigen::Vector3d encode_normal(const Eigen::Vector3d& n) {
  return 0.5 * (n + Eigen::Vector3d::Ones());
}
inline Eigen::Vector3d decode_normal(const Eigen::Vector3d& c) {
  return 2.0 * c - Eigen::Vector3d::Ones();
}

/// Shades a visibility solution into a pass.
inline PassImage shade_pass(const Mesh& mesh, const Visibility& vis, PassKind kind,
                            const ImageD* texture, int camera_index) {
  if (kind == PassKind::Combined) {
    require(texture != nullptr && !texture->empty(), "combined pass requires a texture");
    require(mesh.has_uvs(), "combined pass requires UVs");
  }
  PassImage out = PassImage::blank(vis.size, vis.size, kind, camera_index);
  const std::size_t count = vis.face.size();
  for (std::size_t i = 0; i < count; ++i) {
    if (vis.face[i] < 0) continue;
    const Face& f = mesh.faces[vis.face[i]];
    const Barycentric& b = vis.bary[i];
    double* px = out.color.data.data() + i * 3;
    switch (kind) {
      case PassKind::Position: {
        Eigen::Vector3d p = interpolate_position(mesh, f, b);
        for (int c = 0; c < 3; ++c) px[c] = p[c];
        break;
      }
      case PassKind::Normal: {
        Eigen::Vector3d e = encode_normal(interpolate_normal(mesh, f, b));
        for (int c = 0; c < 3; ++c) px[c] = e[c];
        break;
      }
      case PassKind::Combined: {
        double rgb[4];
        sample_uv(*texture, interpolate_uv(mesh, f, b), rgb);
        for (int c = 0; c < 3; ++c) px[c] = rgb[c];
        break;
      }
    }
    out.coverage[i] = 1;
    out.depth[i] = vis.depth[i];
  }
  return out;
}

/// Unlit render of one pass: perspective projection, nearest-depth wins,
/// barycentric attribute interpolation.
inline PassImage render_pass(const Mesh& mesh, const Camera& cam, PassKind kind,
                             const ImageD* texture = nullptr, int bands = 0) {
  if (kind == PassKind::Combined)
    require(texture != nullptr && !texture->empty(), "combined pass requires a texture");
  return shade_pass(mesh, rasterize_view(mesh, cam, bands), kind, texture, cam.index);
}

/// Combined renders at azimuths k * 360 / n_views.
inline std::vector<PassImage> render_turntable(const Mesh& mesh, const ImageD& texture,
                                               int n_views, double elevation,
                                               ViewSetConfig cfg = {}) {
  require(n_views >= 1, "turntable needs at least one view");
  cfg.elevation = elevation;
  std::vector<PassImage> frames;
  for (const Camera& cam : make_orbit(cfg, n_views))
    frames.push_back(render_pass(mesh, cam, PassKind::Combined, &texture));
  return frames;
}

// ---------------------------------------------------------------------------
// 2x2 grids
// ---------------------------------------------------------------------------

/// Four same-size views stitched row-major: (0,0) view 0, (0,1) view 1,
/// (1,0) view 2, (1,1) view 3.
struct GridImage {
  PassImage image;
  std::array<int, 4> camera_index{0, 1, 2, 3};

  int quadrant_size() const { return image.width() / 2; }
};

inline std::pair<int, int> quadrant_origin(int q, int size) {
  return {(q % 2) * size, (q / 2) * size};
}

inline GridImage stitch_grid(std::span<const PassImage> views) {
  require(views.size() == 4, "grid needs exactly four views");
  const int w = views[0].width(), h = views[0].height();
  for (const auto& v : views)
    require(v.width() == w && v.height() == h && v.kind == views[0].kind,
            "grid views must share size and pass kind");
  require(w == h, "grid views must be square");
  GridImage grid;
  grid.image = PassImage::blank(2 * w, 2 * h, views[0].kind, views[0].camera_index);
  for (int q = 0; q < 4; ++q) {
    auto [ox, oy] = quadrant_origin(q, w);
    grid.camera_index[q] = views[q].camera_index;
    paste(grid.image.color, views[q].color, ox, oy);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        std::size_t src = static_cast<std::size_t>(y) * w + x;
        std::size_t dst = static_cast<std::size_t>(oy + y) * (2 * w) + (ox + x);
        grid.image.coverage[dst] = views[q].coverage[src];
        grid.image.depth[dst] = views[q].depth[src];
      }
  }
  return grid;
}

inline std::array<PassImage, 4> split_grid(const GridImage& grid) {
  const int W = grid.image.width(), H = grid.image.height();
  require(W % 2 == 0 && H % 2 == 0, "grid dimensions must be even");
  require(W == H, "grid must be square");
  const int s = W / 2;
  std::array<PassImage, 4> views;
  for (int q = 0; q < 4; ++q) {
    auto [ox, oy] = quadrant_origin(q, s);
    PassImage v;
    v.kind = grid.image.kind;
    v.camera_index = grid.camera_index[q];
    v.color = crop(grid.image.color, ox, oy, s, s);
    v.coverage.resize(static_cast<std::size_t>(s) * s);
    v.depth.resize(static_cast<std::size_t>(s) * s);
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        std::size_t src = static_cast<std::size_t>(oy + y) * W + (ox + x);
        std::size_t dst = static_cast<std::size_t>(y) * s + x;
        v.coverage[dst] = grid.image.coverage[src];
        v.depth[dst] = grid.image.depth[src];
      }
    views[q] = std::move(v);
  }
  return views;
}

// ---------------------------------------------------------------------------
// PNG conversion: 16-bit for geometry passes, 8-bit for color; alpha carries
// coverage (max = covered, 0 = background).
// ---------------------------------------------------------------------------

inline PngImage color_to_png(const ImageD& color, const Mask& coverage, int bit_depth) {
  PngImage png;
  png.width = color.width;
  png.height = color.height;
  png.bit_depth = bit_depth;
  const bool alpha = !coverage.empty();
  png.channels = alpha ? 4 : 3;
  const double maxv = png.max_value();
  png.samples.resize(color.pixel_count() * png.channels);
  for (std::size_t i = 0; i < color.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) {
      double v = std::clamp(color.data[i * color.channels + c], 0.0, 1.0);
      png.samples[i * png.channels + c] = static_cast<std::uint16_t>(std::lround(v * maxv));
    }
    if (alpha) png.samples[i * 4 + 3] = coverage[i] ? static_cast<std::uint16_t>(maxv) : 0;
  }
  return png;
}

/// Color channels scaled to [0,1]; coverage from alpha (all set if absent).
inline std::pair<ImageD, Mask> png_to_color(const PngImage& png) {
  require(png.channels >= 1, "empty PNG");
  ImageD color(png.width, png.height, 3);
  Mask coverage(color.pixel_count(), 1);
  const double maxv = png.max_value();
  const bool gray = png.channels <= 2;
  const bool alpha = png.channels == 2 || png.channels == 4;
  for (std::size_t i = 0; i < color.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c)
      color.data[i * 3 + c] = png.samples[i * png.channels + (gray ? 0 : c)] / maxv;
    if (alpha) coverage[i] = png.samples[i * png.channels + png.channels - 1] > 0 ? 1 : 0;
  }
  return {std::move(color), std::move(coverage)};
}

inline PngImage pass_to_png(const PassImage& pass) {
  return color_to_png(pass.color, pass.coverage, pass.kind == PassKind::Combined ? 8 : 16);
}

/// Depth is not serialized: covered pixels of a decoded pass carry NaN depth.
inline PassImage pass_from_png(const PngImage& png, PassKind kind, int camera_index = 0) {
  auto [color, coverage] = png_to_color(png);
  PassImage p = PassImage::blank(color.width, color.height, kind, camera_index);
  p.color = std::move(color);
  p.coverage = std::move(coverage);
  for (std::size_t i = 0; i < p.coverage.size(); ++i) {
    if (p.coverage[i]) {
      p.depth[i] = std::numeric_limits<double>::quiet_NaN();
    } else {
      for (int c = 0; c < 3; ++c) p.color.data[i * 3 + c] = 0.0;
    }
  }
  return p;
}

}  // namespace texgen
