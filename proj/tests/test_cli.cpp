#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <string>

#include "support/meshes.hpp"
#include "support/tmpdir.hpp"
#include "texgen/png_io.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

// Runs the CLI with stderr folded into stdout.
Result run_cli(const std::string& args) {
  const std::string cmd = std::string("'") + TEXGEN_CLI_PATH + "' " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    sphere_ = dir_ / "sphere.obj";
    cube_ = dir_ / "cube.obj";
    texgen::testing::save_obj(texgen::testing::make_uv_sphere(12, 24), sphere_);
    texgen::testing::save_obj(texgen::testing::make_cube(), cube_);
  }
  texgen::testing::TempDir dir_;
  fs::path sphere_, cube_;
};

}  // namespace

TEST_F(Cli, HelpExitsZeroAndListsSubcommands) {
  Result r = run_cli("--help");
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"texture", "render", "bake", "blend", "enhance"})
    EXPECT_NE(r.output.find(sub), std::string::npos) << sub;
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli("").code, 2);
  EXPECT_EQ(run_cli("texture").code, 2);
  EXPECT_EQ(run_cli("texture --mesh " + q(dir_ / "missing.obj")).code, 2);
  EXPECT_EQ(run_cli("texture --mesh " + q(sphere_) + " --resolution 0").code, 2);
  EXPECT_EQ(run_cli("texture --mesh " + q(sphere_) + " --backend sdxl").code, 2);
  EXPECT_EQ(run_cli("frobnicate").code, 2);
}

TEST_F(Cli, TextureRunWritesOutputsAndSummary) {
  const fs::path out = dir_ / "run";
  Result r = run_cli("texture --mesh " + q(sphere_) + " --prompt 'red brick' --resolution 128 --view-size 64 --out " + q(out));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("texture run complete"), std::string::npos);
  for (const char* f : {"texture.png", "mesh.obj", "mesh.mtl", "report.txt", "position_grid.png", "normal_grid.png"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_EQ(texgen::read_png(out / "texture.png").width, 128);
}

TEST_F(Cli, ConfigFileSuppliesOptions) {
  const fs::path ini = dir_ / "run.ini";
  const fs::path out = dir_ / "cfg";
  std::ofstream(ini) << "[texture]\nmesh = \"" << sphere_.string() << "\"\nresolution = 64\nview-size = 48\nout = \""
                     << out.string() << "\"\n";
  Result r = run_cli("--config " + q(ini) + " texture");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(texgen::read_png(out / "texture.png").width, 64);
}

TEST_F(Cli, PipelineErrorsMapToTheirExitCodes) {
  const fs::path bad = dir_ / "bad.obj";
  std::ofstream(bad) << "v 0 0 0\nv 1 0 0\nf 1 2 3\n";
  Result r = run_cli("texture --mesh " + q(bad) + " --out " + q(dir_ / "bad"));
  EXPECT_EQ(r.code, 4) << r.output;  // parse
  EXPECT_NE(r.output.find("in stage load"), std::string::npos) << r.output;

  r = run_cli("texture --mesh " + q(sphere_) + " --backend remote --out " + q(dir_ / "x"));
  EXPECT_EQ(r.code, 5) << r.output;  // remote without endpoint

  r = run_cli("texture --mesh " + q(sphere_) + " --resolution 64 --view-size 32 --backend remote --endpoint http://127.0.0.1:9 --timeout 2 --out " +
              q(dir_ / "y"));
  EXPECT_EQ(r.code, 7) << r.output;  // unreachable backend
  EXPECT_NE(r.output.find("generate_views"), std::string::npos);
}

TEST_F(Cli, BakeWritesUVMaps) {
  const fs::path out = dir_ / "bake";
  Result r = run_cli("bake --mesh " + q(cube_) + " --resolution 64 --out " + q(out));
  ASSERT_EQ(r.code, 0) << r.output;
  texgen::PngImage p = texgen::read_png(out / "p_uv.png");
  EXPECT_EQ(p.width, 64);
  EXPECT_EQ(p.bit_depth, 16);
  EXPECT_EQ(texgen::read_png(out / "mapped.png").bit_depth, 1);
  EXPECT_TRUE(fs::exists(out / "mesh.obj"));
}

TEST_F(Cli, RenderGridsAndTurntable) {
  const fs::path grids = dir_ / "grids";
  ASSERT_EQ(run_cli("render --mesh " + q(sphere_) + " --view-size 32 --out " + q(grids)).code, 0);
  EXPECT_EQ(texgen::read_png(grids / "position_grid.png").width, 64);

  const fs::path tt = dir_ / "tt";
  Result r = run_cli("render --mesh " + q(sphere_) + " --turntable 8 --view-size 24 --out " + q(tt));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(tt / "frame_000.png"));
  EXPECT_TRUE(fs::exists(tt / "frame_007.png"));
  EXPECT_FALSE(fs::exists(tt / "frame_008.png"));
  std::ifstream idx(tt / "frames.txt");
  std::string line;
  std::getline(idx, line);
  std::getline(idx, line);
  EXPECT_EQ(line, "frame_001.png azimuth 45 elevation 20");
}

TEST_F(Cli, BlendReconstructsAPartialTextureFromADebugRun) {
  const fs::path run = dir_ / "run";
  ASSERT_EQ(run_cli("texture --mesh " + q(sphere_) + " --resolution 64 --view-size 48 --debug --out " + q(run)).code, 0);
  const fs::path out = dir_ / "blend";
  Result r = run_cli("blend --mesh " + q(run / "mesh.obj") + " --grid " + q(run / "generated_grid.png") +
                     " --resolution 64 --out " + q(out));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("need completion"), std::string::npos);
  // The mask matches the one from the full run.
  EXPECT_EQ(texgen::read_png(out / "mask.png").samples, texgen::read_png(run / "mask.png").samples);
}

TEST_F(Cli, EnhanceUpscalesAPng) {
  texgen::PngImage img;
  img.width = img.height = 16;
  img.channels = 3;
  img.samples.assign(16 * 16 * 3, 90);
  texgen::write_png(dir_ / "small.png", img);
  const fs::path out = dir_ / "big" / "big.png";
  Result r = run_cli("enhance --texture " + q(dir_ / "small.png") + " --ratio 2.5 --enhance-patch 16 --enhance-overlap 4 --enhance-steps 2 --out " + q(out));
  ASSERT_EQ(r.code, 0) << r.output;
  texgen::PngImage big = texgen::read_png(out);
  EXPECT_EQ(big.width, 40);
  for (auto s : big.samples) EXPECT_EQ(s, 90);
}
