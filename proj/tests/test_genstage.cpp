#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <thread>

#include "support/meshes.hpp"
#include "support/stub_server.hpp"
#include "texgen/genstage.hpp"

using namespace texgen;
using texgen::testing::reply_image;
using texgen::testing::StubServer;

namespace {

struct Scene {
  Mesh mesh;
  std::vector<Camera> cams;
  GeneratorRequest req;
};

Scene make_scene(int view = 48, std::uint64_t seed = 7) {
  Scene s;
  s.mesh = fallback_unwrap(normalize_mesh(texgen::testing::make_uv_sphere(12, 24)));
  s.cams = make_view_set({view});
  std::vector<PassImage> pos, nrm;
  for (const auto& c : s.cams) {
    pos.push_back(render_pass(s.mesh, c, PassKind::Position));
    nrm.push_back(render_pass(s.mesh, c, PassKind::Normal));
  }
  s.req.prompt = "weathered bronze";
  s.req.seed = seed;
  s.req.position_grid = stitch_grid(pos);
  s.req.normal_grid = stitch_grid(nrm);
  return s;
}

void expect_code(ErrorCode code, const std::function<void()>& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected error " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

BackendDescriptor remote(const std::string& endpoint, double timeout = 10.0) {
  return {BackendKind::Remote, endpoint, timeout};
}

// Partial texture where the left half is painted with a color field and the
// right half is masked.
struct HalfPainted {
  PartialTexture partial;
  InpaintMask mask;
  UVImage p_uv, n_uv;
};

HalfPainted half_painted(int res, const std::function<Eigen::Vector3d(int, int)>& color) {
  HalfPainted h;
  h.partial = PartialTexture::empty(res);
  h.mask.resolution = res;
  h.mask.flags.assign(res * res, 0);
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      const int t = y * res + x;
      if (x < res / 2) {
        h.partial.weight_accum[t] = 1.0;
        const auto c = color(x, y);
        for (int k = 0; k < 3; ++k) h.partial.color_accum[t * 3 + k] = c[k];
      } else {
        h.mask.flags[t] = 1;
      }
    }
  BlendParams p;
  p.epsilon = 1e-300;
  h.partial = blend_views(h.partial, p);
  for (UVImage* u : {&h.p_uv, &h.n_uv}) {
    u->resolution = res;
    u->color = ImageD(res, res, 3, 0.5);
    u->mapped.assign(res * res, 1);
  }
  for (int t = 0; t < res * res; ++t) h.n_uv.color.data[t * 3 + 2] = 1.0;
  return h;
}

}  // namespace

TEST(Backend, KindNamesRoundTrip) {
  for (auto k : {BackendKind::Mock, BackendKind::PullPush, BackendKind::Remote})
    EXPECT_EQ(parse_backend_kind(to_string(k)), k);
  expect_code(ErrorCode::InvalidInput, [] { parse_backend_kind("diffusers"); });
  expect_code(ErrorCode::InvalidInput, [] { BackendDescriptor{BackendKind::Remote, "", 1}.validate(); });
}

TEST(MockGenerate, RespectsCoverageAndIsDeterministic) {
  Scene s = make_scene();
  GridImage a = generate_views({}, s.req);
  GridImage b = generate_views({}, s.req);
  EXPECT_EQ(a.image.color, b.image.color);
  EXPECT_EQ(a.image.coverage, s.req.position_grid.image.coverage);
  EXPECT_EQ(a.image.kind, PassKind::Combined);
  for (std::size_t i = 0; i < a.image.coverage.size(); ++i)
    if (!a.image.coverage[i])
      for (int c = 0; c < 3; ++c) EXPECT_EQ(a.image.color.data[i * 3 + c], 0.0);
}

TEST(MockGenerate, SeedChangesTheOutput) {
  Scene s = make_scene();
  GridImage a = generate_views({}, s.req);
  s.req.seed = 8;
  GridImage b = generate_views({}, s.req);
  EXPECT_NE(a.image.color, b.image.color);
}

TEST(MockGenerate, ColorIsAFunctionOfTheSurfacePoint) {
  // Each covered pixel equals the procedural color of the point it shows.
  Scene s = make_scene();
  GridImage g = generate_views({}, s.req);
  const auto& P = s.req.position_grid.image;
  const auto& N = s.req.normal_grid.image;
  for (std::size_t i = 0; i < P.coverage.size(); ++i) {
    if (!P.coverage[i]) continue;
    Eigen::Vector3d p(P.color.data[i * 3], P.color.data[i * 3 + 1], P.color.data[i * 3 + 2]);
    Eigen::Vector3d n(N.color.data[i * 3], N.color.data[i * 3 + 1], N.color.data[i * 3 + 2]);
    const Eigen::Vector3d c = mock_color(p, decode_normal(n), 7);
    for (int k = 0; k < 3; ++k) {
      EXPECT_DOUBLE_EQ(g.image.color.data[i * 3 + k], c[k]);
      EXPECT_GE(c[k], 0.0);
      EXPECT_LE(c[k], 1.0);
    }
  }
}

TEST(Generate, RejectsInconsistentGrids) {
  Scene s = make_scene();
  s.req.normal_grid.image.coverage[0] ^= 1;
  expect_code(ErrorCode::InvalidInput, [&] { generate_views({}, s.req); });
  Scene t = make_scene();
  expect_code(ErrorCode::InvalidInput, [&] { generate_views({BackendKind::PullPush, "", 1}, t.req); });
}

TEST(CoverageContract, BackgroundPaintIsRejected) {
  Scene s = make_scene();
  PngImage png = pass_to_png(generate_views({}, s.req).image);
  EXPECT_NO_THROW(accept_generated_grid(png, s.req));
  // Paint the top-left corner, which is background in every rig.
  ASSERT_FALSE(s.req.position_grid.image.coverage[0]);
  png.samples[0] = 200;
  expect_code(ErrorCode::Contract, [&] { accept_generated_grid(png, s.req); });
}

TEST(CoverageContract, DroppedCoveredPixelsAreRejected) {
  Scene s = make_scene();
  PngImage png = pass_to_png(generate_views({}, s.req).image);
  const auto& cov = s.req.position_grid.image.coverage;
  const std::size_t i = std::find(cov.begin(), cov.end(), 1) - cov.begin();
  png.samples[i * 4 + 3] = 0;
  expect_code(ErrorCode::Contract, [&] { accept_generated_grid(png, s.req); });
}

TEST(CoverageContract, OpaqueRgbIsJudgedByColorAlone) {
  // Without alpha, covered pixels count as present and background must be black.
  Scene s = make_scene();
  PngImage rgba = pass_to_png(generate_views({}, s.req).image);
  PngImage rgb = rgba;
  rgb.channels = 3;
  rgb.samples.clear();
  for (std::size_t i = 0; i < rgba.samples.size(); i += 4)
    rgb.samples.insert(rgb.samples.end(), rgba.samples.begin() + i, rgba.samples.begin() + i + 3);
  EXPECT_NO_THROW(accept_generated_grid(rgb, s.req));
  rgb.samples[1] = 1;
  expect_code(ErrorCode::Contract, [&] { accept_generated_grid(rgb, s.req); });
}

TEST(CoverageContract, WrongSizeIsABackendError) {
  Scene s = make_scene();
  PngImage png;
  png.width = png.height = 10;
  png.channels = 3;
  png.samples.assign(300, 0);
  expect_code(ErrorCode::Backend, [&] { accept_generated_grid(png, s.req); });
}

TEST(RemoteGenerate, SendsGridsAndAcceptsAConformingReply) {
  Scene s = make_scene();
  const std::string reply = base64_encode(encode_png(pass_to_png(generate_views({}, s.req).image)));
  StubServer server([&](const nlohmann::json&, httplib::Response& res) { reply_image(res, reply); });
  GridImage g = generate_views(remote(server.endpoint()), s.req);
  EXPECT_EQ(g.image.coverage, s.req.position_grid.image.coverage);

  auto reqs = server.requests();
  ASSERT_EQ(reqs.size(), 1u);
  const auto& body = reqs[0];
  EXPECT_EQ(body["kind"], "stage1");
  EXPECT_EQ(body["prompt"], "weathered bronze");
  EXPECT_EQ(body["seed"], 7);
  PngImage sent = decode_png(base64_decode(body["images"]["position_grid"].get<std::string>()));
  EXPECT_EQ(sent.width, 96);
  EXPECT_EQ(sent.bit_depth, 16);
  EXPECT_EQ(pass_from_png(sent, PassKind::Position).coverage, s.req.position_grid.image.coverage);
  EXPECT_TRUE(body["images"].contains("normal_grid"));
}

TEST(RemoteGenerate, TransportAndPayloadFailuresAreBackendErrors) {
  Scene s = make_scene();
  {
    StubServer server([](const nlohmann::json&, httplib::Response& res) { res.status = 500; });
    expect_code(ErrorCode::Backend, [&] { generate_views(remote(server.endpoint()), s.req); });
  }
  {
    StubServer server([](const nlohmann::json&, httplib::Response& res) {
      res.set_content("not json", "text/plain");
    });
    expect_code(ErrorCode::Backend, [&] { generate_views(remote(server.endpoint()), s.req); });
  }
  {
    StubServer server([](const nlohmann::json&, httplib::Response& res) {
      res.set_content(R"({"result": 1})", "application/json");
    });
    expect_code(ErrorCode::Backend, [&] { generate_views(remote(server.endpoint()), s.req); });
  }
  {
    StubServer server([](const nlohmann::json&, httplib::Response& res) { reply_image(res, "Zm9v"); });
    expect_code(ErrorCode::Backend, [&] { generate_views(remote(server.endpoint()), s.req); });
  }
  std::string dead;
  {
    StubServer server([](const nlohmann::json&, httplib::Response&) {});
    dead = server.endpoint();
  }
  expect_code(ErrorCode::Backend, [&] { generate_views(remote(dead, 2.0), s.req); });
}

TEST(RemoteGenerate, SlowBackendTimesOut) {
  Scene s = make_scene();
  StubServer server([](const nlohmann::json&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1500));
    res.status = 500;
  });
  const auto t0 = std::chrono::steady_clock::now();
  expect_code(ErrorCode::Backend, [&] { generate_views(remote(server.endpoint(), 0.3), s.req); });
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1.4);
}

TEST(RemoteGenerate, BackgroundPaintingReplyViolatesTheContract) {
  Scene s = make_scene();
  PngImage png = pass_to_png(generate_views({}, s.req).image);
  png.samples[0] = 255;
  png.samples[3] = 65535;
  const std::string reply = base64_encode(encode_png(png));
  StubServer server([&](const nlohmann::json&, httplib::Response& res) { reply_image(res, reply); });
  expect_code(ErrorCode::Contract, [&] { generate_views(remote(server.endpoint()), s.req); });
}

TEST(PullPush, ConstantFieldFillsWithTheSameConstant) {
  HalfPainted h = half_painted(32, [](int, int) { return Eigen::Vector3d(0.2, 0.4, 0.6); });
  UVImage out = pullpush_inpaint(h.partial, h.mask);
  for (int t = 0; t < 32 * 32; ++t)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(out.color.data[t * 3 + c], 0.2 * (c + 1), 1e-12);
}

TEST(PullPush, UnmaskedTexelsArePreservedAndFillIsBounded) {
  HalfPainted h = half_painted(40, [](int x, int y) {
    return Eigen::Vector3d(x / 40.0, y / 40.0, 0.5 + 0.5 * std::sin(x * 0.3 + y * 0.2));
  });
  UVImage out = pullpush_inpaint(h.partial, h.mask);
  double lo[3] = {1, 1, 1}, hi[3] = {0, 0, 0};
  for (int t = 0; t < 1600; ++t)
    for (int c = 0; c < 3; ++c)
      if (!h.mask.flags[t]) {
        EXPECT_EQ(out.color.data[t * 3 + c], h.partial.resolved.data[t * 3 + c]);
        lo[c] = std::min(lo[c], out.color.data[t * 3 + c]);
        hi[c] = std::max(hi[c], out.color.data[t * 3 + c]);
      }
  // Convex combinations of source colors stay within their range.
  for (int t = 0; t < 1600; ++t)
    for (int c = 0; c < 3; ++c)
      if (h.mask.flags[t]) {
        EXPECT_GE(out.color.data[t * 3 + c], lo[c] - 1e-12);
        EXPECT_LE(out.color.data[t * 3 + c], hi[c] + 1e-12);
      }
  // Masked texels next to the boundary take colors close to their neighbors.
  for (int y = 0; y < 40; ++y)
    EXPECT_NEAR(out.color.at(20, y, 1), out.color.at(19, y, 1), 0.1);
}

TEST(PullPush, NothingPaintedIsAnError) {
  PartialTexture p = blend_views(PartialTexture::empty(4), {});
  InpaintMask m{4, Mask(16, 1)};
  expect_code(ErrorCode::InvalidInput, [&] { pullpush_inpaint(p, m); });
}

TEST(InpaintTexture, MockFillsMaskedTexelsFromBakedGeometry) {
  HalfPainted h = half_painted(16, [](int, int) { return Eigen::Vector3d(0.1, 0.1, 0.1); });
  InpaintRequest req{"p", 3, h.partial, h.mask, h.p_uv, h.n_uv};
  UVImage out = inpaint_texture({}, req);
  const Eigen::Vector3d expect = mock_color({0.5, 0.5, 0.5}, decode_normal({0.5, 0.5, 1.0}), 3);
  for (int t = 0; t < 256; ++t)
    for (int c = 0; c < 3; ++c)
      EXPECT_DOUBLE_EQ(out.color.data[t * 3 + c], h.mask.flags[t] ? expect[c] : 0.1);
  EXPECT_EQ(out.mapped, h.p_uv.mapped);
}

TEST(InpaintTexture, RemoteReplyReplacesTheTexture) {
  HalfPainted h = half_painted(16, [](int, int) { return Eigen::Vector3d(0.1, 0.1, 0.1); });
  ImageD grey(16, 16, 3, 128.0 / 255.0);
  const std::string reply = base64_encode(encode_png(color_to_png(grey, {}, 8)));
  StubServer server([&](const nlohmann::json&, httplib::Response& res) { reply_image(res, reply); });
  InpaintRequest req{"p", 3, h.partial, h.mask, h.p_uv, h.n_uv};
  UVImage out = inpaint_texture(remote(server.endpoint("/inpaint")), req);
  EXPECT_NEAR(out.color.at(3, 3, 0), 128.0 / 255.0, 1e-12);

  const auto body = server.requests().at(0);
  EXPECT_EQ(body["kind"], "stage2");
  for (const char* key : {"partial", "mask", "p_uv", "n_uv"}) EXPECT_TRUE(body["images"].contains(key)) << key;
  PngImage mask = decode_png(base64_decode(body["images"]["mask"].get<std::string>()));
  EXPECT_EQ(mask.bit_depth, 1);
  EXPECT_EQ(mask.sample(15, 0, 0), 1);
  EXPECT_EQ(mask.sample(0, 0, 0), 0);
}

TEST(InpaintTexture, WrongSizedRemoteReplyIsABackendError) {
  HalfPainted h = half_painted(16, [](int, int) { return Eigen::Vector3d(0.1, 0.1, 0.1); });
  const std::string reply = base64_encode(encode_png(color_to_png(ImageD(8, 8, 3, 0.5), {}, 8)));
  StubServer server([&](const nlohmann::json&, httplib::Response& res) { reply_image(res, reply); });
  InpaintRequest req{"p", 3, h.partial, h.mask, h.p_uv, h.n_uv};
  expect_code(ErrorCode::Backend, [&] { inpaint_texture(remote(server.endpoint()), req); });
}

TEST(InpaintTexture, MismatchedResolutionsAreRejected) {
  HalfPainted h = half_painted(16, [](int, int) { return Eigen::Vector3d(0.1, 0.1, 0.1); });
  h.p_uv.resolution = 8;
  InpaintRequest req{"p", 3, h.partial, h.mask, h.p_uv, h.n_uv};
  expect_code(ErrorCode::InvalidInput, [&] { inpaint_texture({}, req); });
}

TEST(Dilate, GutterTakesTheNearestMappedColor) {
  const int res = 16;
  UVImage tex;
  tex.resolution = res;
  tex.color = ImageD(res, res, 3, 0.0);
  Mask mapped(res * res, 0);
  // Two mapped texels with different colors.
  mapped[5 * res + 4] = 1;
  mapped[5 * res + 11] = 1;
  for (int c = 0; c < 3; ++c) tex.color.at(4, 5, c) = 0.25, tex.color.at(11, 5, c) = 0.75;
  UVImage d = dilate_margins(tex, mapped, 3);
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      const int da = std::max(std::abs(x - 4), std::abs(y - 5));
      const int db = std::max(std::abs(x - 11), std::abs(y - 5));
      const double v = d.color.at(x, y, 0);
      if (std::min(da, db) > 3) {
        EXPECT_EQ(v, 0.0) << x << "," << y;
      } else if (da < db) {
        EXPECT_EQ(v, 0.25) << x << "," << y;
      } else if (db < da) {
        EXPECT_EQ(v, 0.75) << x << "," << y;
      }
    }
  EXPECT_EQ(dilate_margins(tex, mapped, 0).color, tex.color);
}

TEST(Dilate, MappedTexelsAreUntouched) {
  Scene s = make_scene();
  const int res = 128;
  UVImage n = bake_pass(s.mesh, PassKind::Normal, res);
  UVImage d = dilate_margins(n, n.mapped, 4);
  std::size_t filled = 0;
  for (std::size_t t = 0; t < n.mapped.size(); ++t) {
    if (n.mapped[t]) {
      for (int c = 0; c < 3; ++c) EXPECT_EQ(d.color.data[t * 3 + c], n.color.data[t * 3 + c]);
    } else if (d.color.data[t * 3 + 2] != 0.0) {
      ++filled;
    }
  }
  EXPECT_GT(filled, 0u);
  expect_code(ErrorCode::InvalidInput, [&] { dilate_margins(n, n.mapped, -1); });
}
