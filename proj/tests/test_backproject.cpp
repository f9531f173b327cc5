#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "support/capture.hpp"
#include "support/meshes.hpp"
#include "texgen/backproject.hpp"
#include "texgen/parallel.hpp"

using namespace texgen;

namespace {

// Unit square at z = 0.5, normal +Z, UVs equal to xy.
Mesh identity_quad() {
  Mesh m;
  m.vertices = {{0, 0, 0.5}, {1, 0, 0.5}, {1, 1, 0.5}, {0, 1, 0.5}};
  m.uvs = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  m.normals = {{0, 0, 1}};
  for (auto t : {std::array<int, 3>{0, 1, 2}, std::array<int, 3>{0, 2, 3}}) {
    Face f;
    f.v = t;
    f.t = t;
    f.n = {0, 0, 0};
    m.faces.push_back(f);
  }
  return m;
}

Camera orbit_camera(double azimuth, double elevation, int size, double dist = 2.5) {
  Camera c;
  c.azimuth = azimuth;
  c.elevation = elevation;
  c.distance = dist;
  c.image_size = size;
  return c;
}

PassImage constant_view(const Mesh& m, const Camera& c, Eigen::Vector3d rgb) {
  PassImage p = render_pass(m, c, PassKind::Position);
  p.kind = PassKind::Combined;
  for (std::size_t i = 0; i < p.coverage.size(); ++i)
    for (int k = 0; k < 3; ++k) p.color.data[i * 3 + k] = p.coverage[i] ? rgb[k] : 0.0;
  return p;
}

}  // namespace

TEST(Incidence, ClampedCosineOfUnitVectors) {
  const Eigen::Vector3d z(0, 0, 1);
  EXPECT_DOUBLE_EQ(incidence(z, z), 1.0);
  EXPECT_DOUBLE_EQ(incidence(-z, z), 0.0);
  EXPECT_DOUBLE_EQ(incidence(Eigen::Vector3d(1, 0, 0), z), 0.0);
  const Eigen::Vector3d d(0, std::sqrt(0.75), 0.5);
  EXPECT_NEAR(incidence(d, z), 0.5, 1e-15);
  EXPECT_THROW(incidence(Eigen::Vector3d(0, 0, 2), z), Error);
}

TEST(Incidence, WeightIsPowerWithZeroIncidenceExcluded) {
  EXPECT_DOUBLE_EQ(incidence_weight(0.5, 6.0), 1.0 / 64.0);
  EXPECT_DOUBLE_EQ(incidence_weight(1.0, 6.0), 1.0);
  EXPECT_DOUBLE_EQ(incidence_weight(0.3, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(incidence_weight(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(incidence_weight(0.0, 6.0), 0.0);
  EXPECT_DOUBLE_EQ(incidence_weight(std::nan(""), 2.0), 0.0);
}

TEST(BlendParams, RejectsInvalidValues) {
  BlendParams p;
  p.alpha = -1;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.epsilon = 0;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.n_views = 0;
  EXPECT_THROW(p.validate(), Error);
}

TEST(BlendViews, WeightedAverageOfTwoContributions) {
  // Texel seen head-on (phi = 1, red) and at phi = 0.5 (blue); alpha = 6.
  PartialTexture t = PartialTexture::empty(2);
  const double w1 = incidence_weight(1.0, 6), w2 = incidence_weight(0.5, 6);
  t.color_accum[0] = w1 * 1.0;
  t.color_accum[2] = w2 * 1.0;
  t.weight_accum[0] = w1 + w2;
  BlendParams p;
  PartialTexture b = blend_views(t, p);
  ASSERT_TRUE(b.blended());
  const double denom = 1.0 + 1.0 / 64.0 + p.epsilon;
  EXPECT_DOUBLE_EQ(b.resolved.data[0], 1.0 / denom);
  EXPECT_DOUBLE_EQ(b.resolved.data[2], (1.0 / 64.0) / denom);
  EXPECT_NEAR(b.resolved.data[0], 64.0 / 65.0, 1e-8);
  // Texels without weight resolve to zero.
  for (std::size_t i = 3; i < b.resolved.data.size(); ++i) EXPECT_EQ(b.resolved.data[i], 0.0);
}

TEST(Backproject, WeightsAndTexelsMatchARayCastOracle) {
  // For every covered pixel, intersect its ray with the plane z = 0.5 and add
  // phi^alpha to the texel nearest the hit point's UV.
  const Mesh m = identity_quad();
  const int view = 96, res = 32;
  const Camera cam = orbit_camera(25, 15, view);
  BlendParams params;
  params.alpha = 3;
  PartialTexture got = backproject_view(m, cam, constant_view(m, cam, {0.2, 0.4, 0.6}),
                                        PartialTexture::empty(res), params);

  const Visibility vis = rasterize_view(m, cam);
  const auto fr = cam.frame();
  const Eigen::Vector3d eye = cam.eye();
  const double f = 1.0 / std::tan(0.5 * deg2rad(cam.fov_y)), half = 0.5 * view;
  std::vector<double> oracle(res * res, 0.0);
  std::size_t pixels = 0;
  for (int y = 0; y < view; ++y)
    for (int x = 0; x < view; ++x) {
      if (vis.face[y * view + x] < 0) continue;
      ++pixels;
      const double xz = ((x + 0.5) / half - 1.0) / f, yz = (1.0 - (y + 0.5) / half) / f;
      const Eigen::Vector3d dir = (fr.forward + xz * fr.right + yz * fr.up).normalized();
      const double s = (0.5 - eye.z()) / dir.z();
      const Eigen::Vector3d hit = eye + s * dir;
      ASSERT_GE(hit.x(), -1e-9);
      ASSERT_LE(hit.x(), 1 + 1e-9);
      const double phi = (-dir).dot(Eigen::Vector3d::UnitZ());
      const int tx = std::clamp(static_cast<int>(std::floor(hit.x() * res)), 0, res - 1);
      const int ty = std::clamp(static_cast<int>(std::floor((1.0 - hit.y()) * res)), 0, res - 1);
      oracle[ty * res + tx] += std::pow(phi, 3.0);
    }
  ASSERT_GT(pixels, 1000u);
  for (int t = 0; t < res * res; ++t) {
    EXPECT_NEAR(got.weight_accum[t], oracle[t], 1e-9 * (1 + oracle[t])) << t;
    EXPECT_NEAR(got.color_accum[t * 3 + 1], 0.4 * oracle[t], 1e-9 * (1 + oracle[t]));
  }
  PartialTexture b = blend_views(got, params);
  for (int t = 0; t < res * res; ++t)
    if (oracle[t] > 0) EXPECT_NEAR(b.resolved.data[t * 3 + 2], 0.6, 1e-7);
}

TEST(Backproject, BackFacingViewsContributeNothing) {
  const Mesh m = identity_quad();
  const Camera behind = orbit_camera(180, 10, 48);
  PassImage v = constant_view(m, behind, {1, 1, 1});
  EXPECT_GT(std::count(v.coverage.begin(), v.coverage.end(), 1), 0);
  PartialTexture t = backproject_view(m, behind, v, PartialTexture::empty(16), {});
  for (double w : t.weight_accum) EXPECT_EQ(w, 0.0);
}

TEST(Backproject, AlphaZeroGivesThePlainMeanOfVisibleViews) {
  const Mesh m = identity_quad();
  const Camera a = orbit_camera(-30, 0, 64), b = orbit_camera(30, 0, 64);
  BlendParams p;
  p.alpha = 0;
  PartialTexture acc = PartialTexture::empty(8);
  acc = backproject_view(m, a, constant_view(m, a, {0, 0, 0}), acc, p);
  PartialTexture only_a = acc;
  acc = backproject_view(m, b, constant_view(m, b, {1, 1, 1}), acc, p);
  PartialTexture blended = blend_views(acc, p);
  for (std::size_t t = 0; t < acc.weight_accum.size(); ++t) {
    const double na = only_a.weight_accum[t], nb = acc.weight_accum[t] - na;
    if (na + nb == 0) continue;
    EXPECT_NEAR(blended.resolved.data[t * 3], nb / (na + nb), 1e-7);  // pixel counts
  }
}

TEST(Backproject, ViewSizeMustMatchTheRig) {
  const Mesh m = identity_quad();
  const Camera c = orbit_camera(0, 0, 32);
  PassImage wrong = PassImage::blank(16, 16, PassKind::Combined, 0);
  try {
    backproject_view(m, c, wrong, PartialTexture::empty(8), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidInput);
  }
}

TEST(Backproject, CoverageMismatchIsWarnedAndSkipped) {
  const Mesh m = identity_quad();
  const Camera c = orbit_camera(0, 0, 32);
  PassImage v = constant_view(m, c, {1, 0, 0});
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < v.coverage.size() && dropped < 5; ++i)
    if (v.coverage[i]) v.coverage[i] = 0, ++dropped;
  texgen::testing::WarningCapture cap;
  PartialTexture full = backproject_view(m, c, constant_view(m, c, {1, 0, 0}), PartialTexture::empty(8), {});
  PartialTexture part = backproject_view(m, c, v, PartialTexture::empty(8), {});
  EXPECT_TRUE(cap.contains("coverage differs"));
  double sf = 0, sp = 0;
  for (std::size_t t = 0; t < 64; ++t) sf += full.weight_accum[t], sp += part.weight_accum[t];
  EXPECT_LT(sp, sf);
}

TEST(Backproject, ConcurrentAndSequentialResultsAreBitIdentical) {
  const Mesh s = fallback_unwrap(normalize_mesh(texgen::testing::make_uv_sphere(16, 32)));
  auto cams = make_view_set({128});
  std::vector<PassImage> views;
  for (const auto& c : cams) {
    PassImage p = render_pass(s, c, PassKind::Normal);
    p.kind = PassKind::Combined;
    views.push_back(p);
  }
  set_thread_count(4);
  PartialTexture par = backproject_views(s, cams, views, 128, {}, true);
  set_thread_count(0);
  PartialTexture seq = backproject_views(s, cams, views, 128, {}, false);
  EXPECT_EQ(par.color_accum, seq.color_accum);
  EXPECT_EQ(par.weight_accum, seq.weight_accum);
  // The same as folding views one by one in order.
  PartialTexture fold = PartialTexture::empty(128);
  for (std::size_t k = 0; k < 4; ++k) {
    PartialTexture one = backproject_view(s, cams[k], views[k], PartialTexture::empty(128), {});
    fold.add(one);
  }
  EXPECT_EQ(fold.weight_accum, seq.weight_accum);
  EXPECT_THROW(backproject_views(s, cams, std::span(views).first(3), 128, {}), Error);
}

TEST(Backproject, MeshWithoutUVsIsRejected) {
  const Mesh cube = normalize_mesh(texgen::testing::make_cube());
  const Camera c = orbit_camera(0, 0, 16);
  EXPECT_THROW(backproject_view(cube, c, PassImage::blank(16, 16, PassKind::Combined, 0),
                                PartialTexture::empty(8), {}),
               Error);
}

TEST(InpaintMask, FlagsMappedTexelsBelowTheWeightFloor) {
  PartialTexture t = PartialTexture::empty(2);
  t.weight_accum = {0.0, 1e-7, 0.5, 0.0};
  t = blend_views(t, {});
  Mask mapped{1, 1, 1, 0};
  InpaintMask m = compute_inpaint_mask(t, mapped);
  EXPECT_EQ(m.flags, (Mask{1, 1, 0, 0}));
  EXPECT_EQ(m.count(), 2u);
  TexelStats s = texel_stats(mapped, m);
  EXPECT_EQ(s.total, 4u);
  EXPECT_EQ(s.mapped, 3u);
  EXPECT_EQ(s.painted, 1u);
  EXPECT_EQ(s.masked, 2u);
  EXPECT_DOUBLE_EQ(s.masked_of_mapped(), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.mapped_fraction(), s.painted_fraction() + s.masked_fraction());
}

TEST(InpaintMask, RequiresBlendedInputOfMatchingSize) {
  PartialTexture t = PartialTexture::empty(2);
  EXPECT_THROW(compute_inpaint_mask(t, Mask(4, 1)), Error);
  t = blend_views(t, {});
  EXPECT_THROW(compute_inpaint_mask(t, Mask(9, 1)), Error);
}

TEST(InpaintMask, SphereStatsPartitionMappedTexels) {
  const Mesh s = fallback_unwrap(normalize_mesh(texgen::testing::make_uv_sphere(16, 32)));
  auto cams = make_view_set({96});
  std::vector<PassImage> views;
  for (const auto& c : cams) views.push_back(constant_view(s, c, {0.5, 0.5, 0.5}));
  const int res = 128;
  PartialTexture t = blend_views(backproject_views(s, cams, views, res, {}), {});
  Mask mapped = compute_coverage_mask(s, res);
  InpaintMask m = compute_inpaint_mask(t, mapped);
  TexelStats st = texel_stats(mapped, m);
  EXPECT_EQ(st.painted + st.masked, st.mapped);
  EXPECT_GT(st.painted, 0u);
  EXPECT_GT(st.masked, 0u);  // the bottom cap is never seen from above
  for (std::size_t i = 0; i < mapped.size(); ++i)
    if (!mapped[i]) EXPECT_FALSE(m.flags[i]);
}

TEST(DebugImages, WeightsScaleToMaximumAndMaskIsOneBit) {
  PartialTexture t = PartialTexture::empty(2);
  t.weight_accum = {0.0, 0.5, 1.0, 2.0};
  PngImage w = weights_to_png(t);
  EXPECT_EQ(w.bit_depth, 16);
  EXPECT_EQ(w.samples, (std::vector<std::uint16_t>{0, 16384, 32768, 65535}));
  PngImage m = mask_to_png({0, 3, 1, 0}, 2);
  EXPECT_EQ(m.bit_depth, 1);
  EXPECT_EQ(m.samples, (std::vector<std::uint16_t>{0, 1, 1, 0}));
}
