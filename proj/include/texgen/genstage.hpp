#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <httplib.h>
#include <json.hpp>

#include "texgen/backproject.hpp"
#include "texgen/base64.hpp"
#include "texgen/error.hpp"
#include "texgen/image.hpp"
#include "texgen/png_io.hpp"
#include "texgen/raster.hpp"
#include "texgen/uvbake.hpp"

namespace texgen {

enum class BackendKind { Mock, PullPush, Remote };

inline const char* to_string(BackendKind k) {
  switch (k) {
    case BackendKind::Mock: return "mock";
    case BackendKind::PullPush: return "pullpush";
    case BackendKind::Remote: return "remote";
  }
  return "?";
}

inline BackendKind parse_backend_kind(const std::string& s) {
  if (s == "mock") return BackendKind::Mock;
  if (s == "pullpush") return BackendKind::PullPush;
  if (s == "remote") return BackendKind::Remote;
  fail(ErrorCode::InvalidInput, "unknown backend '" + s + "' (expected mock, pullpush or remote)");
}

struct BackendDescriptor {
  BackendKind kind = BackendKind::Mock;
  std::string endpoint;  // http://host:port/path, remote only
  double timeout = 300.0;

  void validate() const {
    if (kind == BackendKind::Remote) require(!endpoint.empty(), "remote backend requires an endpoint");
    require(timeout > 0, "backend timeout must be positive");
  }
};

/// Stage-one request: text prompt, noise seed and the geometry grids.
struct GeneratorRequest {
  std::string prompt;
  std::uint64_t seed = 0;
  GridImage position_grid;
  GridImage normal_grid;
};

/// Stage-two request. References must outlive the call.
struct InpaintRequest {
  std::string prompt;
  std::uint64_t seed = 0;
  const PartialTexture& partial;
  const InpaintMask& mask;
  const UVImage& p_uv;
  const UVImage& n_uv;
};

// ---------------------------------------------------------------------------
// Mock generator
// ---------------------------------------------------------------------------

/// Smooth procedural color of a surface point: each channel is
/// 0.5 + 0.5 sin(2 pi (a_k . pos + b_k . nrm + phase_k(seed))).
/// Depends only on world-space values, so every view agrees.
inline Eigen::Vector3d mock_color(const Eigen::Vector3d& pos, const Eigen::Vector3d& nrm,
                                  std::uint64_t seed) {
  static const std::array<Eigen::Vector3d, 3> a{Eigen::Vector3d(1.3, 0.4, -0.7),
                                                Eigen::Vector3d(-0.5, 1.1, 0.6),
                                                Eigen::Vector3d(0.8, -0.9, 1.2)};
  static const std::array<Eigen::Vector3d, 3> b{Eigen::Vector3d(0.15, 0.0, 0.1),
                                                Eigen::Vector3d(0.0, 0.2, -0.1),
                                                Eigen::Vector3d(-0.1, 0.1, 0.15)};
  // Weyl-sequence phases: frac(seed * odd constant / 2^64).
  static constexpr std::array<std::uint64_t, 3> k{0x9E3779B97F4A7C15ull, 0xC2B2AE3D27D4EB4Full,
                                                  0x165667B19E3779F9ull};
  Eigen::Vector3d out;
  for (int c = 0; c < 3; ++c) {
    const double phase = static_cast<double>((seed * k[c]) >> 11) * 0x1.0p-53;
    out[c] = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (a[c].dot(pos) + b[c].dot(nrm) + phase));
  }
  return out;
}

inline void validate_grids(const GeneratorRequest& req) {
  const auto& p = req.position_grid.image;
  const auto& n = req.normal_grid.image;
  require(p.width() > 0 && p.width() == p.height(), "position grid must be square and non-empty");
  require(p.width() == n.width() && p.height() == n.height(), "conditioning grids differ in size");
  require(p.coverage == n.coverage, "conditioning grids differ in coverage");
  require(req.position_grid.camera_index == req.normal_grid.camera_index,
          "conditioning grids come from different rigs");
}

inline GridImage mock_generate(const GeneratorRequest& req) {
  const auto& pos = req.position_grid.image;
  const auto& nrm = req.normal_grid.image;
  GridImage out;
  out.camera_index = req.position_grid.camera_index;
  out.image = PassImage::blank(pos.width(), pos.height(), PassKind::Combined, pos.camera_index);
  out.image.depth = pos.depth;
  for (std::size_t i = 0; i < pos.coverage.size(); ++i) {
    if (!pos.coverage[i]) continue;
    Eigen::Vector3d p(pos.color.data[i * 3], pos.color.data[i * 3 + 1], pos.color.data[i * 3 + 2]);
    Eigen::Vector3d c(nrm.color.data[i * 3], nrm.color.data[i * 3 + 1], nrm.color.data[i * 3 + 2]);
    Eigen::Vector3d rgb = mock_color(p, decode_normal(c), req.seed);
    for (int k = 0; k < 3; ++k) out.image.color.data[i * 3 + k] = rgb[k];
    out.image.coverage[i] = 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Remote client
// ---------------------------------------------------------------------------

namespace detail {

inline std::pair<std::string, std::string> split_endpoint(const std::string& url) {
  auto scheme = url.find("://");
  auto path_start = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

inline std::string png_b64(const PngImage& png) { return base64_encode(encode_png(png)); }

}  // namespace detail

/// POSTs a JSON request and returns the decoded response image. Transport,
/// status and payload problems raise ErrorCode::Backend.
inline PngImage remote_call(const BackendDescriptor& backend, const nlohmann::json& body) {
  backend.validate();
  auto [host, path] = detail::split_endpoint(backend.endpoint);
  httplib::Client client(host);
  const auto secs = static_cast<time_t>(backend.timeout);
  const auto usecs = static_cast<time_t>((backend.timeout - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  auto res = client.Post(path, body.dump(), "application/json");
  if (!res)
    fail(ErrorCode::Backend, "remote backend unreachable at " + backend.endpoint + ": " +
                                 httplib::to_string(res.error()));
  if (res->status != 200)
    fail(ErrorCode::Backend, "remote backend returned HTTP " + std::to_string(res->status));
  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Backend, std::string("malformed backend response: ") + e.what());
  }
  if (!reply.is_object() || !reply.contains("image") || !reply["image"].is_string())
    fail(ErrorCode::Backend, "backend response lacks an 'image' string");
  try {
    return decode_png(base64_decode(reply["image"].get<std::string>()));
  } catch (const Error& e) {
    fail(ErrorCode::Backend, std::string("backend image undecodable: ") + e.what());
  }
}

inline nlohmann::json stage1_body(const GeneratorRequest& req) {
  return {{"kind", "stage1"},
          {"prompt", req.prompt},
          {"seed", req.seed},
          {"images",
           {{"position_grid", detail::png_b64(pass_to_png(req.position_grid.image))},
            {"normal_grid", detail::png_b64(pass_to_png(req.normal_grid.image))}}}};
}

inline nlohmann::json stage2_body(const InpaintRequest& req) {
  Mask painted(req.partial.weight_accum.size());
  for (std::size_t i = 0; i < painted.size(); ++i) painted[i] = req.partial.weight_accum[i] > 0 ? 1 : 0;
  return {{"kind", "stage2"},
          {"prompt", req.prompt},
          {"seed", req.seed},
          {"images",
           {{"partial", detail::png_b64(color_to_png(req.partial.resolved, painted, 8))},
            {"mask", detail::png_b64(mask_to_png(req.mask.flags, req.mask.resolution))},
            {"p_uv", detail::png_b64(uv_image_to_png(req.p_uv))},
            {"n_uv", detail::png_b64(uv_image_to_png(req.n_uv))}}}};
}

/// Converts a stage-one response and enforces the coverage contract:
/// background exactly where the conditioning has background.
inline GridImage accept_generated_grid(const PngImage& png, const GeneratorRequest& req) {
  const auto& cond = req.position_grid.image;
  if (png.width != cond.width() || png.height != cond.height())
    fail(ErrorCode::Backend, "backend returned " + std::to_string(png.width) + "x" +
                                 std::to_string(png.height) + ", expected " +
                                 std::to_string(cond.width()) + "x" + std::to_string(cond.height()));
  const bool alpha = png.channels == 2 || png.channels == 4;
  const int color_channels = png.channels <= 2 ? 1 : 3;
  std::size_t painted_background = 0, missing = 0;
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x) {
      const bool covered = cond.coverage[static_cast<std::size_t>(y) * png.width + x] != 0;
      bool nonzero = false;
      for (int c = 0; c < color_channels; ++c) nonzero |= png.sample(x, y, c) != 0;
      const bool a = alpha ? png.sample(x, y, png.channels - 1) != 0 : covered;
      if (!covered && (nonzero || a)) ++painted_background;
      if (covered && !a) ++missing;
    }
  if (painted_background > 0)
    fail(ErrorCode::Contract, "backend painted " + std::to_string(painted_background) +
                                  " background pixel(s)");
  if (missing > 0)
    fail(ErrorCode::Contract, "backend dropped " + std::to_string(missing) + " covered pixel(s)");
  GridImage out;
  out.camera_index = req.position_grid.camera_index;
  out.image = pass_from_png(png, PassKind::Combined, cond.camera_index);
  out.image.coverage = cond.coverage;
  out.image.depth = cond.depth;
  return out;
}

inline void check_coverage_contract(const GridImage& generated, const GeneratorRequest& req) {
  const auto& cond = req.position_grid.image;
  require(generated.image.width() == cond.width() && generated.image.height() == cond.height(),
          "generated grid size differs from conditioning", ErrorCode::Backend);
  for (std::size_t i = 0; i < cond.coverage.size(); ++i) {
    if (static_cast<bool>(generated.image.coverage[i]) != static_cast<bool>(cond.coverage[i]))
      fail(ErrorCode::Contract, "generated grid coverage differs from conditioning");
    if (!cond.coverage[i])
      for (int c = 0; c < 3; ++c)
        if (generated.image.color.data[i * 3 + c] != 0.0)
          fail(ErrorCode::Contract, "generated grid paints background pixels");
  }
}

/// Stage one: text + geometry grids -> 2x2 color grid.
inline GridImage generate_views(const BackendDescriptor& backend, const GeneratorRequest& req) {
  backend.validate();
  validate_grids(req);
  GridImage out;
  switch (backend.kind) {
    case BackendKind::Mock: out = mock_generate(req); break;
    case BackendKind::Remote: out = accept_generated_grid(remote_call(backend, stage1_body(req)), req); break;
    case BackendKind::PullPush:
      fail(ErrorCode::InvalidInput, "the pullpush backend cannot generate views");
  }
  check_coverage_contract(out, req);
  return out;
}

// ---------------------------------------------------------------------------
// Completion
// ---------------------------------------------------------------------------

/// Pull-push hole filling. Sources are texels outside the mask that received
/// any weight; masked texels are filled from a weighted pyramid (pull: 2x2
/// weighted means with weights saturating at 1; push: bilinear upsampling
/// blended by 1 - weight). Every other texel keeps its resolved color.
inline UVImage pullpush_inpaint(const PartialTexture& partial, const InpaintMask& mask) {
  require(partial.blended(), "pull-push needs a blended partial texture");
  require(mask.resolution == partial.resolution && mask.flags.size() == partial.weight_accum.size(),
          "mask resolution does not match partial texture");
  const int res = partial.resolution;
  UVImage out;
  out.resolution = res;
  out.kind = UVKind::Color;
  out.color = partial.resolved;
  // Without a coverage mask, treat painted and masked texels as mapped.
  out.mapped.resize(mask.flags.size());
  for (std::size_t t = 0; t < out.mapped.size(); ++t)
    out.mapped[t] = mask.flags[t] || partial.weight_accum[t] > 0.0 ? 1 : 0;
  if (mask.count() == 0) return out;

  struct Level {
    int w = 0, h = 0;
    std::vector<double> color;  // 3 per texel, weighted mean
    std::vector<double> weight;
  };
  std::vector<Level> levels(1);
  Level& base = levels[0];
  base.w = base.h = res;
  base.color.assign(static_cast<std::size_t>(res) * res * 3, 0.0);
  base.weight.assign(static_cast<std::size_t>(res) * res, 0.0);
  std::size_t sources = 0;
  for (std::size_t t = 0; t < base.weight.size(); ++t) {
    if (mask.flags[t] || !(partial.weight_accum[t] > 0.0)) continue;
    base.weight[t] = 1.0;
    for (int c = 0; c < 3; ++c) base.color[t * 3 + c] = partial.resolved.data[t * 3 + c];
    ++sources;
  }
  if (sources == 0) fail(ErrorCode::InvalidInput, "nothing painted: no information to propagate");

  // Pull.
  while (levels.back().w > 1 || levels.back().h > 1) {
    const Level& fine = levels.back();
    Level coarse;
    coarse.w = (fine.w + 1) / 2;
    coarse.h = (fine.h + 1) / 2;
    coarse.color.assign(static_cast<std::size_t>(coarse.w) * coarse.h * 3, 0.0);
    coarse.weight.assign(static_cast<std::size_t>(coarse.w) * coarse.h, 0.0);
    for (int y = 0; y < coarse.h; ++y)
      for (int x = 0; x < coarse.w; ++x) {
        double wsum = 0, csum[3] = {0, 0, 0};
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            int fx = 2 * x + dx, fy = 2 * y + dy;
            if (fx >= fine.w || fy >= fine.h) continue;
            std::size_t f = static_cast<std::size_t>(fy) * fine.w + fx;
            double w = fine.weight[f];
            if (w == 0.0) continue;
            wsum += w;
            for (int c = 0; c < 3; ++c) csum[c] += w * fine.color[f * 3 + c];
          }
        std::size_t o = static_cast<std::size_t>(y) * coarse.w + x;
        if (wsum > 0) {
          coarse.weight[o] = std::min(1.0, wsum);
          for (int c = 0; c < 3; ++c) coarse.color[o * 3 + c] = csum[c] / wsum;
        }
      }
    levels.push_back(std::move(coarse));
  }

  // Push: complete each level from the (already complete) level above.
  for (int l = static_cast<int>(levels.size()) - 2; l >= 0; --l) {
    Level& fine = levels[l];
    const Level& coarse = levels[l + 1];
    for (int y = 0; y < fine.h; ++y)
      for (int x = 0; x < fine.w; ++x) {
        std::size_t f = static_cast<std::size_t>(y) * fine.w + x;
        const double w = fine.weight[f];
        if (w >= 1.0) continue;
        // Bilinear lookup in the coarse level at this texel's center.
        double cx = (x + 0.5) / 2.0 - 0.5, cy = (y + 0.5) / 2.0 - 0.5;
        int x0 = static_cast<int>(std::floor(cx)), y0 = static_cast<int>(std::floor(cy));
        double tx = cx - x0, ty = cy - y0;
        double up[3] = {0, 0, 0};
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            int sx = std::clamp(x0 + dx, 0, coarse.w - 1), sy = std::clamp(y0 + dy, 0, coarse.h - 1);
            double k = (dx ? tx : 1 - tx) * (dy ? ty : 1 - ty);
            std::size_t s = static_cast<std::size_t>(sy) * coarse.w + sx;
            for (int c = 0; c < 3; ++c) up[c] += k * coarse.color[s * 3 + c];
          }
        for (int c = 0; c < 3; ++c) fine.color[f * 3 + c] = w * fine.color[f * 3 + c] + (1 - w) * up[c];
        fine.weight[f] = 1.0;
      }
  }

  for (std::size_t t = 0; t < mask.flags.size(); ++t)
    if (mask.flags[t])
      for (int c = 0; c < 3; ++c) out.color.data[t * 3 + c] = levels[0].color[t * 3 + c];
  return out;
}

/// Mock completion: masked texels take the mock generator's color of the
/// baked surface point, matching what the mock stage one would have painted.
inline UVImage mock_inpaint(const InpaintRequest& req) {
  UVImage out;
  out.resolution = req.partial.resolution;
  out.kind = UVKind::Color;
  out.color = req.partial.resolved;
  for (std::size_t t = 0; t < req.mask.flags.size(); ++t) {
    if (!req.mask.flags[t]) continue;
    Eigen::Vector3d p(req.p_uv.color.data[t * 3], req.p_uv.color.data[t * 3 + 1], req.p_uv.color.data[t * 3 + 2]);
    Eigen::Vector3d n(req.n_uv.color.data[t * 3], req.n_uv.color.data[t * 3 + 1], req.n_uv.color.data[t * 3 + 2]);
    Eigen::Vector3d c = mock_color(p, decode_normal(n), req.seed);
    for (int k = 0; k < 3; ++k) out.color.data[t * 3 + k] = c[k];
  }
  return out;
}

/// Stage two: partial texture + mask + baked geometry -> complete texture.
/// Classical backends preserve unmasked texels exactly; that is checked.
inline UVImage inpaint_texture(const BackendDescriptor& backend, const InpaintRequest& req) {
  backend.validate();
  const int res = req.partial.resolution;
  require(req.partial.blended(), "partial texture must be blended");
  require(req.mask.resolution == res && req.p_uv.resolution == res && req.n_uv.resolution == res,
          "inpaint request resolutions disagree");
  UVImage out;
  switch (backend.kind) {
    case BackendKind::Mock: out = mock_inpaint(req); break;
    case BackendKind::PullPush: out = pullpush_inpaint(req.partial, req.mask); break;
    case BackendKind::Remote: {
      PngImage png = remote_call(backend, stage2_body(req));
      if (png.width != res || png.height != res)
        fail(ErrorCode::Backend, "backend texture is " + std::to_string(png.width) + "x" +
                                     std::to_string(png.height) + ", expected " + std::to_string(res));
      out.resolution = res;
      out.kind = UVKind::Color;
      out.color = png_to_color(png).first;
      break;
    }
  }
  out.mapped = req.p_uv.mapped;
  for (std::size_t t = 0; t < req.mask.flags.size(); ++t) {
    for (int c = 0; c < 3; ++c) {
      const double v = out.color.data[t * 3 + c];
      if (req.mask.flags[t] && !std::isfinite(v))
        fail(ErrorCode::Contract, "inpainting left masked texels unfilled");
      if (backend.kind != BackendKind::Remote && !req.mask.flags[t] &&
          std::abs(v - req.partial.resolved.data[t * 3 + c]) > 1e-6)
        fail(ErrorCode::Contract, "inpainting modified texels outside the mask");
    }
  }
  return out;
}

/// Grows every island outward by `gutter` texels: each unmapped texel within
/// that many 8-connected steps of a mapped texel takes the color of the
/// nearest (Euclidean) mapped texel reached by the front. Mapped texels are
/// untouched.
inline UVImage dilate_margins(UVImage texture, const Mask& mapped, int gutter) {
  require(gutter >= 0, "gutter must be non-negative");
  const int res = texture.resolution;
  require(mapped.size() == static_cast<std::size_t>(res) * res, "mapped mask size mismatch");
  if (gutter == 0) return texture;

  // Source texel index per texel, -1 = none yet.
  std::vector<int> source(mapped.size(), -1);
  std::vector<int> front;
  for (std::size_t t = 0; t < mapped.size(); ++t)
    if (mapped[t]) {
      source[t] = static_cast<int>(t);
      front.push_back(static_cast<int>(t));
    }
  auto dist2 = [res](int a, int b) {
    long dx = a % res - b % res, dy = a / res - b / res;
    return dx * dx + dy * dy;
  };
  for (int ring = 0; ring < gutter && !front.empty(); ++ring) {
    std::vector<int> next;
    std::vector<int> candidate(mapped.size(), -1);
    for (int t : front) {
      const int x = t % res, y = t / res;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= res || ny >= res) continue;
          const int n = ny * res + nx;
          if (source[n] >= 0) continue;
          int& cand = candidate[n];
          if (cand < 0) next.push_back(n);
          const int s = source[t];
          if (cand < 0 || dist2(n, s) < dist2(n, cand) || (dist2(n, s) == dist2(n, cand) && s < cand))
            cand = s;
        }
    }
    for (int n : next) {
      source[n] = candidate[n];
      for (int c = 0; c < 3; ++c)
        texture.color.data[static_cast<std::size_t>(n) * 3 + c] =
            texture.color.data[static_cast<std::size_t>(candidate[n]) * 3 + c];
    }
    std::sort(next.begin(), next.end());
    front = std::move(next);
  }
  return texture;
}

}  // namespace texgen
