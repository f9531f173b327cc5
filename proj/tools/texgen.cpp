// texgen command line: full texturing runs and the individual stages.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "texgen/backproject.hpp"
#include "texgen/enhance.hpp"
#include "texgen/error.hpp"
#include "texgen/genstage.hpp"
#include "texgen/mesh.hpp"
#include "texgen/parallel.hpp"
#include "texgen/pipeline.hpp"
#include "texgen/png_io.hpp"
#include "texgen/raster.hpp"
#include "texgen/uvbake.hpp"

namespace fs = std::filesystem;
using namespace texgen;

namespace {

constexpr int kUsageExit = 2;
constexpr int kInternalExit = 1;

struct BackendFlags {
  std::string all = "mock";
  std::string stage1, stage2, enhancer;
  std::string endpoint;
  std::string stage1_endpoint, stage2_endpoint, enhancer_endpoint;
  double timeout = 300;

  BackendDescriptor make(const std::string& kind, const std::string& ep) const {
    BackendDescriptor d;
    d.kind = parse_backend_kind(kind.empty() ? all : kind);
    d.endpoint = ep.empty() ? endpoint : ep;
    d.timeout = timeout;
    return d;
  }
  BackendDescriptor stage1_backend() const { return make(stage1, stage1_endpoint); }
  BackendDescriptor stage2_backend() const { return make(stage2, stage2_endpoint); }
  BackendDescriptor enhancer_backend() const { return make(enhancer, enhancer_endpoint); }
};

void add_backend_flags(CLI::App* cmd, BackendFlags& b, bool generation) {
  const auto kinds = CLI::IsMember({"mock", "pullpush", "remote"});
  cmd->add_option("--backend", b.all, "Backend for every stage (mock, pullpush, remote)")
      ->check(kinds)
      ->capture_default_str();
  if (generation) {
    cmd->add_option("--stage1-backend", b.stage1, "View generator backend")->check(kinds);
    cmd->add_option("--stage2-backend", b.stage2, "UV completion backend")->check(kinds);
    cmd->add_option("--stage1-endpoint", b.stage1_endpoint, "View generator URL");
    cmd->add_option("--stage2-endpoint", b.stage2_endpoint, "UV completion URL");
  }
  cmd->add_option("--enhancer-backend", b.enhancer, "Enhancer backend")->check(kinds);
  cmd->add_option("--enhancer-endpoint", b.enhancer_endpoint, "Enhancer URL");
  cmd->add_option("--endpoint", b.endpoint, "Remote URL for every stage");
  cmd->add_option("--timeout", b.timeout, "Remote request timeout in seconds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

void add_enhance_flags(CLI::App* cmd, EnhanceParams& p) {
  cmd->add_option("--enhance-patch", p.patch_size, "Enhancement patch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--enhance-overlap", p.overlap, "Overlap between patches")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--enhance-sigma", p.sigma, "Gaussian sigma, 0 for patch/4")->capture_default_str();
  cmd->add_option("--enhance-steps", p.steps, "Enhancement steps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

// Mesh ready for rendering: normalized and laid out like a texture run.
Mesh prepare_mesh(const fs::path& path, bool keep_uvs) {
  Mesh m = normalize_mesh(load_mesh(path));
  if (!m.has_uvs()) return fallback_unwrap(std::move(m));
  m = detect_islands(std::move(m));
  return keep_uvs ? m : repack_uv_islands(std::move(m));
}

std::string frame_name(int i) {
  std::ostringstream s;
  s << "frame_" << std::setw(3) << std::setfill('0') << i << ".png";
  return s.str();
}

int run_texture(const PipelineConfig& cfg) {
  RunReport report = run_pipeline(cfg);
  write_summary(std::cout, report);
  return 0;
}

int run_render(const fs::path& mesh_path, const fs::path& texture_path, int turntable, int view_size,
               double elevation, const fs::path& out) {
  ensure_directory(out);
  const bool textured = !texture_path.empty();
  Mesh mesh = prepare_mesh(mesh_path, textured);
  if (turntable > 0) {
    ViewSetConfig rig;
    rig.image_size = view_size;
    rig.bounding_radius = bounding_radius(mesh, rig.look_at);
    std::ofstream index(out / "frames.txt");
    std::vector<Camera> cams = make_orbit([&] {
      ViewSetConfig c = rig;
      c.elevation = elevation;
      return c;
    }(), turntable);
    std::optional<ImageD> texture;
    if (textured) texture = png_to_color(read_png(texture_path)).first;
    for (const Camera& cam : cams) {
      PassImage frame = textured ? render_pass(mesh, cam, PassKind::Combined, &*texture)
                                 : render_pass(mesh, cam, PassKind::Normal);
      write_png(out / frame_name(cam.index), pass_to_png(frame));
      index << frame_name(cam.index) << " azimuth " << cam.azimuth << " elevation " << cam.elevation
            << '\n';
    }
    std::cout << "wrote " << cams.size() << " frames to " << out.string() << '\n';
    return 0;
  }
  const auto cams = pipeline_rig(mesh, view_size, elevation);
  std::vector<PassImage> pos, nrm;
  for (const Camera& c : cams) {
    const Visibility vis = rasterize_view(mesh, c);
    pos.push_back(shade_pass(mesh, vis, PassKind::Position, nullptr, c.index));
    nrm.push_back(shade_pass(mesh, vis, PassKind::Normal, nullptr, c.index));
  }
  write_png(out / "position_grid.png", pass_to_png(stitch_grid(pos).image));
  write_png(out / "normal_grid.png", pass_to_png(stitch_grid(nrm).image));
  std::cout << "wrote position_grid.png and normal_grid.png to " << out.string() << '\n';
  return 0;
}

int run_bake(const fs::path& mesh_path, int resolution, const fs::path& out) {
  ensure_directory(out);
  Mesh mesh = prepare_mesh(mesh_path, false);
  UVImage p = bake_pass(mesh, PassKind::Position, resolution);
  UVImage n = bake_pass(mesh, PassKind::Normal, resolution);
  write_png(out / "p_uv.png", uv_image_to_png(p));
  write_png(out / "n_uv.png", uv_image_to_png(n));
  write_png(out / "mapped.png", mask_to_png(p.mapped, resolution));
  std::ofstream obj(out / "mesh.obj");
  if (!obj) fail(ErrorCode::Io, "cannot write " + (out / "mesh.obj").string());
  write_obj(obj, mesh);
  std::cout << "baked " << resolution << "x" << resolution << ", mapped fraction "
            << mask_fraction(p.mapped) << '\n';
  return 0;
}

int run_blend(const fs::path& mesh_path, const fs::path& grid_path, int resolution,
              const BlendParams& params, double elevation, const fs::path& out) {
  ensure_directory(out);
  Mesh mesh = prepare_mesh(mesh_path, true);
  GridImage grid;
  grid.image = pass_from_png(read_png(grid_path), PassKind::Combined);
  const auto views = split_grid(grid);
  const auto cams = pipeline_rig(mesh, views[0].width(), elevation);
  PartialTexture partial = blend_views(backproject_views(mesh, cams, views, resolution, params), params);
  const Mask mapped = compute_coverage_mask(mesh, resolution);
  const InpaintMask mask = compute_inpaint_mask(partial, mapped, params.weight_floor);
  Mask painted(partial.weight_accum.size());
  for (std::size_t i = 0; i < painted.size(); ++i) painted[i] = partial.weight_accum[i] > 0;
  write_png(out / "partial.png", color_to_png(partial.resolved, painted, 8));
  write_png(out / "weights.png", weights_to_png(partial));
  write_png(out / "mask.png", mask_to_png(mask.flags, resolution));
  const TexelStats s = texel_stats(mapped, mask);
  std::cout << "painted " << s.painted << " of " << s.mapped << " mapped texels, " << s.masked
            << " need completion\n";
  return 0;
}

int run_enhance(const fs::path& in, const fs::path& out, double ratio, const BackendDescriptor& backend,
                EnhanceParams params) {
  PngImage png = read_png(in);
  require(png.width == png.height, "texture must be square");
  auto [color, coverage] = png_to_color(png);
  UVImage tex = make_color_uv_image(std::move(color), std::move(coverage));
  UVImage big = enhance_texture(tex, ratio, make_enhancer(backend, params), params);
  if (out.has_parent_path()) ensure_directory(out.parent_path());
  write_png(out, color_to_png(big.color, {}, 8));
  std::cout << "wrote " << big.resolution << "x" << big.resolution << " texture to " << out.string()
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometry-conditioned mesh texturing"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Key-value config file; flags override it")
      ->envname("TEXGEN_CONFIG");
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  PipelineConfig cfg;
  BackendFlags backends;
  std::string mesh_path, out_dir = "out";

  auto* texture = app.add_subcommand("texture", "Full run: mesh in, textured mesh out");
  texture->add_option("--mesh", mesh_path, "Input OBJ")->required()->check(CLI::ExistingFile);
  texture->add_option("--prompt", cfg.prompt, "Text prompt");
  texture->add_option("--seed", cfg.seed, "Generator seed")->capture_default_str();
  texture->add_option("--resolution", cfg.resolution, "Texture size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  texture->add_option("--view-size", cfg.view_size, "Size of each grid quadrant")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  texture->add_option("--alpha", cfg.blend.alpha, "Incidence exponent")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  texture->add_option("--epsilon", cfg.blend.epsilon, "Blend denominator epsilon")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  texture->add_option("--gutter", cfg.gutter, "Margin dilation in texels")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  texture->add_option("--enhance-ratio", cfg.enhance_ratio, "Upscale factor, 1 disables")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  texture->add_option("--elevation", cfg.elevation, "Rig elevation in degrees")->capture_default_str();
  add_enhance_flags(texture, cfg.enhance);
  add_backend_flags(texture, backends, true);
  texture->add_option("--out", out_dir, "Output directory")->capture_default_str();
  texture->add_flag("--debug", cfg.debug, "Also write every intermediate image");

  fs::path texture_path;
  int turntable = 0, view_size = 512, resolution = 1024;
  double elevation = 20.0;
  auto* render = app.add_subcommand("render", "Position/normal grids or a turntable");
  render->add_option("--mesh", mesh_path, "Input OBJ")->required()->check(CLI::ExistingFile);
  render->add_option("--texture", texture_path, "Texture for combined passes (mesh UVs kept)")
      ->check(CLI::ExistingFile);
  render->add_option("--turntable", turntable, "Number of evenly spaced frames, 0 for the 4-view rig")
      ->check(CLI::NonNegativeNumber);
  render->add_option("--view-size", view_size, "Frame size")->check(CLI::PositiveNumber)->capture_default_str();
  render->add_option("--elevation", elevation, "Elevation in degrees")->capture_default_str();
  render->add_option("--out", out_dir, "Output directory")->capture_default_str();

  auto* bake = app.add_subcommand("bake", "Bake position and normal maps into UV space");
  bake->add_option("--mesh", mesh_path, "Input OBJ")->required()->check(CLI::ExistingFile);
  bake->add_option("--resolution", resolution, "Texture size")->check(CLI::PositiveNumber)->capture_default_str();
  bake->add_option("--out", out_dir, "Output directory")->capture_default_str();

  fs::path grid_path;
  BlendParams blend;
  auto* blend_cmd = app.add_subcommand("blend", "Backproject a generated 2x2 view grid into UV space");
  blend_cmd->add_option("--mesh", mesh_path, "OBJ with the UV layout to fill")->required()->check(CLI::ExistingFile);
  blend_cmd->add_option("--grid", grid_path, "Generated grid PNG")->required()->check(CLI::ExistingFile);
  blend_cmd->add_option("--resolution", resolution, "Texture size")->check(CLI::PositiveNumber)->capture_default_str();
  blend_cmd->add_option("--alpha", blend.alpha, "Incidence exponent")->check(CLI::NonNegativeNumber)->capture_default_str();
  blend_cmd->add_option("--epsilon", blend.epsilon, "Blend denominator epsilon")->check(CLI::PositiveNumber)->capture_default_str();
  blend_cmd->add_option("--elevation", elevation, "Rig elevation in degrees")->capture_default_str();
  blend_cmd->add_option("--out", out_dir, "Output directory")->capture_default_str();

  fs::path enhance_in, enhance_out = "enhanced.png";
  double ratio = 4.0;
  EnhanceParams eparams;
  BackendFlags enhance_backends;
  auto* enhance = app.add_subcommand("enhance", "Upscale and refine a texture with overlapping patches");
  enhance->add_option("--texture", enhance_in, "Input texture PNG")->required()->check(CLI::ExistingFile);
  enhance->add_option("--ratio", ratio, "Upscale factor")->check(CLI::PositiveNumber)->capture_default_str();
  enhance->add_option("--prompt", eparams.prompt, "Text prompt");
  enhance->add_option("--seed", eparams.seed, "Seed")->capture_default_str();
  add_enhance_flags(enhance, eparams);
  add_backend_flags(enhance, enhance_backends, false);
  enhance->add_option("--out", enhance_out, "Output PNG")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageExit;
  }

  try {
    set_thread_count(threads);
    if (*texture) {
      cfg.mesh_path = mesh_path;
      cfg.output_dir = out_dir;
      cfg.stage1_backend = backends.stage1_backend();
      cfg.stage2_backend = backends.stage2_backend();
      cfg.enhancer_backend = backends.enhancer_backend();
      return run_texture(cfg);
    }
    if (*render) return run_render(mesh_path, texture_path, turntable, view_size, elevation, out_dir);
    if (*bake) return run_bake(mesh_path, resolution, out_dir);
    if (*blend_cmd) return run_blend(mesh_path, grid_path, resolution, blend, elevation, out_dir);
    if (*enhance)
      return run_enhance(enhance_in, enhance_out, ratio, enhance_backends.enhancer_backend(), eparams);
  } catch (const Error& e) {
    std::cerr << "error";
    if (!e.stage().empty()) std::cerr << " in stage " << e.stage();
    std::cerr << " (" << to_string(e.code()) << "): " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternalExit;
  }
  return kUsageExit;
}
