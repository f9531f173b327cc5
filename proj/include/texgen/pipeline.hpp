#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "texgen/backproject.hpp"
#include "texgen/enhance.hpp"
#include "texgen/error.hpp"
#include "texgen/genstage.hpp"
#include "texgen/log.hpp"
#include "texgen/mesh.hpp"
#include "texgen/png_io.hpp"
#include "texgen/raster.hpp"
#include "texgen/uvbake.hpp"

namespace texgen {

struct PipelineConfig {
  std::filesystem::path mesh_path;
  std::string prompt;
  std::uint64_t seed = 0;
  int resolution = 1024;  // texture size
  int view_size = 512;    // per grid quadrant
  BlendParams blend{};
  BackendDescriptor stage1_backend{BackendKind::Mock};
  BackendDescriptor stage2_backend{BackendKind::Mock};
  BackendDescriptor enhancer_backend{BackendKind::Mock};
  double enhance_ratio = 1.0;  // 1 = off
  EnhanceParams enhance{};
  int gutter = 4;
  double uv_margin = 4.0;  // texels at 1024
  double elevation = 20.0;
  double fov_y = 40.0;
  std::filesystem::path output_dir = "out";
  bool debug = false;

  void validate() const {
    require(!mesh_path.empty(), "mesh path is required");
    require(resolution > 0, "resolution must be positive");
    require(view_size > 0, "view size must be positive");
    require(gutter >= 0, "gutter must be non-negative");
    require(enhance_ratio > 0, "enhance ratio must be positive");
    blend.validate();
    stage1_backend.validate();
    stage2_backend.validate();
    enhancer_backend.validate();
  }
};

struct StageTiming {
  std::string stage;
  double seconds = 0;
  bool backend = false;  // time spent inside a generator backend
};

struct RunReport {
  std::vector<StageTiming> timings;
  TexelStats texels;
  int texture_size = 0;
  std::map<std::string, std::filesystem::path> outputs;
  std::vector<std::string> warnings;
  std::string failed_stage;  // empty on success

  double geometry_seconds() const {
    double s = 0;
    for (const auto& t : timings)
      if (!t.backend) s += t.seconds;
    return s;
  }
  double backend_seconds() const {
    double s = 0;
    for (const auto& t : timings)
      if (t.backend) s += t.seconds;
    return s;
  }
};

/// Structured `key: value` lines.
inline void write_report(std::ostream& out, const RunReport& r) {
  out << "status: " << (r.failed_stage.empty() ? "ok" : "failed") << '\n';
  if (!r.failed_stage.empty()) out << "failed_stage: " << r.failed_stage << '\n';
  for (const auto& t : r.timings)
    out << "time." << t.stage << ": " << t.seconds << '\n';
  out << "time.geometry_total: " << r.geometry_seconds() << '\n';
  out << "time.backend_total: " << r.backend_seconds() << '\n';
  out << "texels.total: " << r.texels.total << '\n';
  out << "texels.mapped_fraction: " << r.texels.mapped_fraction() << '\n';
  out << "texels.painted_fraction: " << r.texels.painted_fraction() << '\n';
  out << "texels.masked_fraction: " << r.texels.masked_fraction() << '\n';
  out << "texels.masked_of_mapped: " << r.texels.masked_of_mapped() << '\n';
  out << "texture.size: " << r.texture_size << '\n';
  for (const auto& [name, path] : r.outputs) out << "output." << name << ": " << path.string() << '\n';
  for (const auto& w : r.warnings) out << "warning: " << w << '\n';
}

inline void write_summary(std::ostream& out, const RunReport& r) {
  out << (r.failed_stage.empty() ? "texture run complete" : "texture run FAILED in " + r.failed_stage)
      << '\n';
  out << "  mapped " << r.texels.mapped << " texels, painted "
      << 100.0 * (r.texels.mapped ? double(r.texels.painted) / r.texels.mapped : 0.0)
      << "%, inpainted " << 100.0 * r.texels.masked_of_mapped() << "%\n";
  out << "  geometry stages " << r.geometry_seconds() << " s, backends " << r.backend_seconds()
      << " s\n";
  if (r.outputs.count("texture")) out << "  texture: " << r.outputs.at("texture").string() << '\n';
  if (!r.warnings.empty()) out << "  " << r.warnings.size() << " warning(s), see report\n";
}

struct ExportPaths {
  std::filesystem::path obj, mtl, texture, note;
};

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    fail(ErrorCode::Io, "cannot create output directory " + dir.string());
}

/// Final texture as 8-bit RGB PNG.
inline PngImage texture_to_png(const UVImage& texture) {
  return color_to_png(texture.color, {}, 8);
}

/// Writes OBJ (with the packed UVs), MTL (map_Kd -> texture PNG), the PNG
/// itself and a short note on the texel convention.
inline ExportPaths export_textured_mesh(const Mesh& mesh, const UVImage& texture,
                                        const std::filesystem::path& dir,
                                        const std::string& basename = "mesh",
                                        const std::string& texture_file = "texture.png") {
  require(mesh.has_uvs(), "export requires UVs");
  ensure_directory(dir);
  ExportPaths p{dir / (basename + ".obj"), dir / (basename + ".mtl"), dir / texture_file,
                dir / "texture_convention.txt"};
  write_png(p.texture, texture_to_png(texture));
  {
    std::ofstream mtl(p.mtl);
    if (!mtl) fail(ErrorCode::Io, "cannot write " + p.mtl.string());
    mtl << "newmtl textured\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nillum 1\nmap_Kd " << texture_file << '\n';
  }
  {
    std::ofstream obj(p.obj);
    if (!obj) fail(ErrorCode::Io, "cannot write " + p.obj.string());
    write_obj(obj, mesh, p.mtl.filename().string(), "textured");
  }
  {
    std::ofstream note(p.note);
    if (!note) fail(ErrorCode::Io, "cannot write " + p.note.string());
    note << "Texture " << texture_file << " is " << texture.resolution << "x" << texture.resolution
         << ", row 0 at the top.\n"
         << "Texel (x, y) is centered at u = (x + 0.5) / N, v = 1 - (y + 0.5) / N.\n"
         << "UV islands are separated by gutters filled with the nearest island color.\n";
  }
  return p;
}

/// The 4-view rig framed on the mesh's bounding sphere about the cube center.
inline std::vector<Camera> pipeline_rig(const Mesh& mesh, int view_size, double elevation = 20.0,
                                        double fov_y = 40.0) {
  ViewSetConfig rig;
  rig.image_size = view_size;
  rig.elevation = elevation;
  rig.fov_y = fov_y;
  rig.bounding_radius = bounding_radius(mesh, rig.look_at);
  return make_view_set(rig);
}

/// Intermediate products of one run, kept for callers that need more than
/// the written files.
struct PipelineArtifacts {
  Mesh mesh;  // normalized, with packed UVs
  UVImage p_uv, n_uv;
  GridImage position_grid, normal_grid, generated_grid;
  PartialTexture partial;
  InpaintMask mask;
  UVImage texture;
};

namespace detail {

class StageClock {
 public:
  explicit StageClock(RunReport& r) : report_(r) {}

  template <typename Fn>
  auto run(const std::string& stage, bool backend, Fn&& fn) -> decltype(fn()) {
    report_.failed_stage = stage;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        record(stage, backend, t0);
      } else {
        auto result = fn();
        record(stage, backend, t0);
        return result;
      }
    } catch (Error& e) {
      if (e.stage().empty()) e.set_stage(stage);
      throw;
    }
  }

 private:
  void record(const std::string& stage, bool backend,
              std::chrono::steady_clock::time_point t0) {
    const double s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report_.timings.push_back({stage, s, backend});
    report_.failed_stage.clear();
  }
  RunReport& report_;
};

}  // namespace detail

/// Full run: load, normalize, unwrap or repack, bake, render the 4-view
/// grids, generate, backproject and blend, mask, complete, dilate, optional
/// enhancement, export. A failing stage aborts the run; the report and any
/// outputs written so far stay on disk.
inline RunReport run_pipeline(const PipelineConfig& cfg, PipelineArtifacts* artifacts_out = nullptr) {
  RunReport report;
  PipelineArtifacts a;
  const auto& out = cfg.output_dir;
  auto previous_sink = set_log_sink([&](const std::string& msg) { report.warnings.push_back(msg); });
  auto flush_report = [&] {
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    std::ofstream f(out / "report.txt");
    if (f) write_report(f, report);
  };
  detail::StageClock clock(report);

  try {
    clock.run("config", false, [&] {
      cfg.validate();
      ensure_directory(out);
    });
    a.mesh = clock.run("load", false, [&] { return load_mesh(cfg.mesh_path); });
    a.mesh = clock.run("normalize", false, [&] {
      Mesh m = normalize_mesh(std::move(a.mesh));
      if (normal_orientation(m) < 0)
        log_warning("normals point inward on the whole; views see back faces and paint little");
      return m;
    });
    a.mesh = clock.run("uv_layout", false, [&] {
      if (!a.mesh.has_uvs()) {
        log_warning("mesh has no usable UVs; using the planar fallback unwrap");
        return fallback_unwrap(std::move(a.mesh), cfg.uv_margin);
      }
      return repack_uv_islands(detect_islands(std::move(a.mesh)), cfg.uv_margin);
    });
    clock.run("bake", false, [&] {
      a.p_uv = bake_pass(a.mesh, PassKind::Position, cfg.resolution);
      a.n_uv = bake_pass(a.mesh, PassKind::Normal, cfg.resolution);
    });

    const std::vector<Camera> cams = pipeline_rig(a.mesh, cfg.view_size, cfg.elevation, cfg.fov_y);

    clock.run("render", false, [&] {
      std::vector<PassImage> pos, nrm;
      for (const Camera& c : cams) {
        const Visibility vis = rasterize_view(a.mesh, c);
        pos.push_back(shade_pass(a.mesh, vis, PassKind::Position, nullptr, c.index));
        nrm.push_back(shade_pass(a.mesh, vis, PassKind::Normal, nullptr, c.index));
      }
      a.position_grid = stitch_grid(pos);
      a.normal_grid = stitch_grid(nrm);
      report.outputs["position_grid"] = out / "position_grid.png";
      report.outputs["normal_grid"] = out / "normal_grid.png";
      write_png(out / "position_grid.png", pass_to_png(a.position_grid.image));
      write_png(out / "normal_grid.png", pass_to_png(a.normal_grid.image));
    });

    a.generated_grid = clock.run("generate_views", true, [&] {
      GeneratorRequest req{cfg.prompt, cfg.seed, a.position_grid, a.normal_grid};
      return generate_views(cfg.stage1_backend, req);
    });
    if (cfg.debug) {
      report.outputs["generated_grid"] = out / "generated_grid.png";
      write_png(out / "generated_grid.png", pass_to_png(a.generated_grid.image));
    }

    clock.run("backproject", false, [&] {
      const auto views = split_grid(a.generated_grid);
      a.partial = backproject_views(a.mesh, cams, views, cfg.resolution, cfg.blend);
      a.partial = blend_views(std::move(a.partial), cfg.blend);
      a.mask = compute_inpaint_mask(a.partial, a.p_uv.mapped, cfg.blend.weight_floor);
      report.texels = texel_stats(a.p_uv.mapped, a.mask);
    });
    if (cfg.debug) {
      Mask painted(a.partial.weight_accum.size());
      for (std::size_t i = 0; i < painted.size(); ++i) painted[i] = a.partial.weight_accum[i] > 0;
      report.outputs["partial"] = out / "partial.png";
      report.outputs["weights"] = out / "weights.png";
      report.outputs["mask"] = out / "mask.png";
      report.outputs["p_uv"] = out / "p_uv.png";
      report.outputs["n_uv"] = out / "n_uv.png";
      write_png(out / "partial.png", color_to_png(a.partial.resolved, painted, 8));
      write_png(out / "weights.png", weights_to_png(a.partial));
      write_png(out / "mask.png", mask_to_png(a.mask.flags, a.mask.resolution));
      write_png(out / "p_uv.png", uv_image_to_png(a.p_uv));
      write_png(out / "n_uv.png", uv_image_to_png(a.n_uv));
    }

    a.texture = clock.run("inpaint", true, [&] {
      InpaintRequest req{cfg.prompt, cfg.seed, a.partial, a.mask, a.p_uv, a.n_uv};
      return inpaint_texture(cfg.stage2_backend, req);
    });
    a.texture = clock.run("dilate", false,
                          [&] { return dilate_margins(std::move(a.texture), a.p_uv.mapped, cfg.gutter); });
    if (cfg.enhance_ratio != 1.0) {
      a.texture = clock.run("enhance", true, [&] {
        EnhanceParams ep = cfg.enhance;
        ep.prompt = cfg.prompt;
        ep.seed = cfg.seed;
        return enhance_texture(a.texture, cfg.enhance_ratio, make_enhancer(cfg.enhancer_backend, ep), ep);
      });
    }
    report.texture_size = a.texture.resolution;

    clock.run("export", false, [&] {
      ExportPaths p = export_textured_mesh(a.mesh, a.texture, out);
      report.outputs["texture"] = p.texture;
      report.outputs["obj"] = p.obj;
      report.outputs["mtl"] = p.mtl;
      report.outputs["convention_note"] = p.note;
    });
    report.outputs["report"] = out / "report.txt";
  } catch (...) {
    set_log_sink(std::move(previous_sink));
    flush_report();
    throw;
  }
  set_log_sink(std::move(previous_sink));
  flush_report();
  if (artifacts_out) *artifacts_out = std::move(a);
  return report;
}

}  // namespace texgen
