#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "texgen/error.hpp"
#include "texgen/image.hpp"
#include "texgen/log.hpp"
#include "texgen/triangle_raster.hpp"

namespace texgen {

/// Triangle with separate position / normal / uv indices (-1 = absent).
struct Face {
  std::array<int, 3> v{};
  std::array<int, 3> n{-1, -1, -1};
  std::array<int, 3> t{-1, -1, -1};
};

struct Mesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<Eigen::Vector3d> normals;
  std::vector<Eigen::Vector2d> uvs;
  std::vector<Face> faces;
  std::vector<int> island_ids;  // per face, empty until islands are detected

  std::size_t face_count() const { return faces.size(); }

  bool has_uvs() const {
    if (uvs.empty() || faces.empty()) return false;
    return std::all_of(faces.begin(), faces.end(), [&](const Face& f) {
      return std::all_of(f.t.begin(), f.t.end(), [&](int t) {
        return t >= 0 && t < static_cast<int>(uvs.size());
      });
    });
  }

  bool has_islands() const { return island_ids.size() == faces.size() && !faces.empty(); }

  int island_count() const {
    if (!has_islands()) return 0;
    return *std::max_element(island_ids.begin(), island_ids.end()) + 1;
  }
};

struct UVLayoutReport {
  bool has_uvs = false;
  int island_count = 0;
  double overlap_area = 0.0;  // fraction of all texels claimed by >= 2 islands
  bool out_of_bounds = false;
  int degenerate_uv_faces = 0;
};

inline double triangle_area(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                            const Eigen::Vector3d& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

inline double uv_triangle_area(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                               const Eigen::Vector2d& c) {
  Eigen::Vector2d e1 = b - a, e2 = c - a;
  return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
}

/// Area-weighted vertex normals; faces get normal indices equal to position
/// indices.
inline void compute_vertex_normals(Mesh& mesh) {
  mesh.normals.assign(mesh.vertices.size(), Eigen::Vector3d::Zero());
  for (const Face& f : mesh.faces) {
    const auto& a = mesh.vertices[f.v[0]];
    const auto& b = mesh.vertices[f.v[1]];
    const auto& c = mesh.vertices[f.v[2]];
    Eigen::Vector3d n = (b - a).cross(c - a);  // length = 2 * area
    for (int k = 0; k < 3; ++k) mesh.normals[f.v[k]] += n;
  }
  for (auto& n : mesh.normals) {
    double len = n.norm();
    n = len > 0 ? Eigen::Vector3d(n / len) : Eigen::Vector3d::UnitZ();
  }
  for (Face& f : mesh.faces) f.n = f.v;
}

// ---------------------------------------------------------------------------
// OBJ ingest
// ---------------------------------------------------------------------------

namespace detail {

inline bool parse_double(std::string_view tok, double& out) {
  // std::from_chars for double is available in libstdc++ 11.
  const char* end = tok.data() + tok.size();
  auto res = std::from_chars(tok.data(), end, out);
  return res.ec == std::errc{} && res.ptr == end;
}

inline bool parse_int(std::string_view tok, long& out) {
  const char* end = tok.data() + tok.size();
  auto res = std::from_chars(tok.data(), end, out);
  return res.ec == std::errc{} && res.ptr == end;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

// Resolves a 1-based (or negative, relative) OBJ index to 0-based; -1 if empty.
inline int resolve_obj_index(std::string_view tok, std::size_t count, const std::string& file,
                             int line) {
  if (tok.empty()) return -1;
  long idx = 0;
  if (!parse_int(tok, idx) || idx == 0)
    throw ParseError(file, line, "invalid index '" + std::string(tok) + "'");
  long resolved = idx > 0 ? idx - 1 : static_cast<long>(count) + idx;
  if (resolved < 0 || resolved >= static_cast<long>(count))
    throw ParseError(file, line, "index " + std::to_string(idx) + " out of range");
  return static_cast<int>(resolved);
}

}  // namespace detail

/// Parses Wavefront OBJ text (v / vn / vt / f records). Polygons are
/// fan-triangulated; normals are computed from geometry when any face lacks
/// them. `name` is used in diagnostics only.
inline Mesh parse_obj(std::istream& in, const std::string& name = "<obj>") {
  Mesh mesh;
  std::string line;
  int line_no = 0;
  bool all_normals = true;
  bool any_uv = false, all_uv = true;
  int dropped = 0;

  while (std::getline(in, line)) {
    ++line_no;
    std::string_view sv(line);
    if (auto hash = sv.find('#'); hash != std::string_view::npos) sv = sv.substr(0, hash);
    auto tok = detail::split_ws(sv);
    if (tok.empty()) continue;

    auto read_vec = [&](int n, double* out) {
      if (static_cast<int>(tok.size()) < n + 1)
        throw ParseError(name, line_no, "expected " + std::to_string(n) + " components");
      for (int k = 0; k < n; ++k)
        if (!detail::parse_double(tok[k + 1], out[k]))
          throw ParseError(name, line_no, "invalid number '" + std::string(tok[k + 1]) + "'");
    };

    if (tok[0] == "v") {
      double p[3];
      read_vec(3, p);
      mesh.vertices.emplace_back(p[0], p[1], p[2]);
    } else if (tok[0] == "vn") {
      double p[3];
      read_vec(3, p);
      mesh.normals.emplace_back(p[0], p[1], p[2]);
    } else if (tok[0] == "vt") {
      double p[2];
      read_vec(2, p);
      mesh.uvs.emplace_back(p[0], p[1]);
    } else if (tok[0] == "f") {
      if (tok.size() < 4) throw ParseError(name, line_no, "face needs at least 3 vertices");
      std::vector<std::array<int, 3>> corners;  // v, t, n
      for (std::size_t k = 1; k < tok.size(); ++k) {
        std::string_view t = tok[k];
        std::array<std::string_view, 3> parts{};
        std::size_t s1 = t.find('/');
        parts[0] = t.substr(0, s1);
        if (s1 != std::string_view::npos) {
          std::size_t s2 = t.find('/', s1 + 1);
          parts[1] = t.substr(s1 + 1, s2 == std::string_view::npos ? std::string_view::npos
                                                                  : s2 - s1 - 1);
          if (s2 != std::string_view::npos) parts[2] = t.substr(s2 + 1);
        }
        if (parts[0].empty()) throw ParseError(name, line_no, "face corner without position");
        corners.push_back({detail::resolve_obj_index(parts[0], mesh.vertices.size(), name, line_no),
                           detail::resolve_obj_index(parts[1], mesh.uvs.size(), name, line_no),
                           detail::resolve_obj_index(parts[2], mesh.normals.size(), name, line_no)});
      }
      for (std::size_t k = 1; k + 1 < corners.size(); ++k) {
        Face f;
        for (int c = 0; c < 3; ++c) {
          const auto& corner = corners[c == 0 ? 0 : k + c - 1];
          f.v[c] = corner[0];
          f.t[c] = corner[1];
          f.n[c] = corner[2];
        }
        if (f.v[0] == f.v[1] || f.v[1] == f.v[2] || f.v[0] == f.v[2]) {
          ++dropped;
          continue;
        }
        bool has_t = f.t[0] >= 0 && f.t[1] >= 0 && f.t[2] >= 0;
        any_uv |= has_t;
        all_uv &= has_t;
        all_normals &= f.n[0] >= 0 && f.n[1] >= 0 && f.n[2] >= 0;
        mesh.faces.push_back(f);
      }
    }
    // Other records (o, g, s, usemtl, mtllib, l, p) are ignored.
  }

  if (mesh.faces.empty()) fail(ErrorCode::Parse, name + ": mesh has no faces");
  if (dropped > 0)
    log_warning(name + ": dropped " + std::to_string(dropped) +
                " face(s) with repeated vertex indices");
  if (any_uv && !all_uv) {
    log_warning(name + ": only some faces carry UVs; treating mesh as unmapped");
    mesh.uvs.clear();
    for (Face& f : mesh.faces) f.t = {-1, -1, -1};
  }
  if (!all_normals || mesh.normals.empty()) {
    compute_vertex_normals(mesh);
  } else {
    for (auto& n : mesh.normals) {
      double len = n.norm();
      n = len > 0 ? Eigen::Vector3d(n / len) : Eigen::Vector3d::UnitZ();
    }
  }

  int degenerate = 0;
  for (const Face& f : mesh.faces)
    if (triangle_area(mesh.vertices[f.v[0]], mesh.vertices[f.v[1]], mesh.vertices[f.v[2]]) == 0.0)
      ++degenerate;
  if (degenerate > 0)
    log_warning(name + ": " + std::to_string(degenerate) + " zero-area face(s) retained");
  return mesh;
}

inline Mesh load_mesh(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::Io, "file not found: " + path.string());
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open: " + path.string());
  return parse_obj(in, path.string());
}

/// Writes positions, uvs (if any) and normals as OBJ text with enough digits
/// to reload the same doubles.
inline void write_obj(std::ostream& out, const Mesh& mesh, const std::string& mtllib = {},
                      const std::string& material = {}) {
  out.precision(std::numeric_limits<double>::max_digits10);  // exact round trip
  if (!mtllib.empty()) out << "mtllib " << mtllib << '\n';
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  const bool uv = mesh.has_uvs();
  if (uv)
    for (const auto& t : mesh.uvs) out << "vt " << t.x() << ' ' << t.y() << '\n';
  for (const auto& n : mesh.normals) out << "vn " << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
  if (!material.empty()) out << "usemtl " << material << '\n';
  for (const Face& f : mesh.faces) {
    out << 'f';
    for (int k = 0; k < 3; ++k) {
      out << ' ' << f.v[k] + 1 << '/';
      if (uv) out << f.t[k] + 1;
      out << '/' << f.n[k] + 1;
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Isotropic bounding-cube normalization into [0,1]^3, centered on the
/// bounding-box center. Normals are unchanged.
inline Mesh normalize_mesh(Mesh mesh) {
  require(!mesh.vertices.empty(), "cannot normalize a mesh without vertices");
  Eigen::Vector3d lo = mesh.vertices.front(), hi = lo;
  for (const auto& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const double extent = (hi - lo).maxCoeff();
  if (!(extent > 0.0)) fail(ErrorCode::InvalidInput, "all vertices coincide; cannot normalize");
  const Eigen::Vector3d center = 0.5 * (lo + hi);
  for (auto& v : mesh.vertices) {
    Eigen::Vector3d p = (v - center) / extent + Eigen::Vector3d::Constant(0.5);
    v = p.cwiseMax(0.0).cwiseMin(1.0);
  }
  return mesh;
}

// ---------------------------------------------------------------------------
// UV islands
// ---------------------------------------------------------------------------

namespace detail {
struct DisjointSets {
  std::vector<int> parent;
  explicit DisjointSets(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};
}  // namespace detail

/// Labels faces by connected components of shared UV vertex indices, so UV
/// seams (distinct vt indices) split islands. Labels are numbered in order
/// of first face appearance.
inline Mesh detect_islands(Mesh mesh) {
  require(mesh.has_uvs(), "island detection requires UVs");
  detail::DisjointSets sets(static_cast<int>(mesh.uvs.size()));
  for (const Face& f : mesh.faces) {
    sets.unite(f.t[0], f.t[1]);
    sets.unite(f.t[1], f.t[2]);
  }
  std::unordered_map<int, int> label;
  mesh.island_ids.resize(mesh.faces.size());
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    int root = sets.find(mesh.faces[i].t[0]);
    auto [it, inserted] = label.emplace(root, static_cast<int>(label.size()));
    mesh.island_ids[i] = it->second;
  }
  return mesh;
}

/// Calls fn(x, y, face_index, bary) for every texel center covered by a UV
/// triangle at the given resolution. Zero-area UV triangles are skipped and
/// counted in the return value.
template <typename Fn>
int rasterize_uv_faces(const Mesh& mesh, int res, int row_begin, int row_end, Fn&& fn) {
  int degenerate = 0;
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    const Face& f = mesh.faces[i];
    Eigen::Vector2d a = uv_to_pixel(mesh.uvs[f.t[0]], res);
    Eigen::Vector2d b = uv_to_pixel(mesh.uvs[f.t[1]], res);
    Eigen::Vector2d c = uv_to_pixel(mesh.uvs[f.t[2]], res);
    bool ok = rasterize_triangle(a, b, c, res, row_begin, row_end,
                                 [&](int x, int y, const Barycentric& bc) {
                                   fn(x, y, static_cast<int>(i), bc);
                                 });
    if (!ok) ++degenerate;
  }
  return degenerate;
}

/// Rasterizes all UV triangles at `resolution` and reports multiply-claimed
/// texels. Islands are detected on the fly if the mesh carries none.
inline UVLayoutReport validate_uv_layout(const Mesh& mesh, int resolution = 1024) {
  UVLayoutReport report;
  report.has_uvs = mesh.has_uvs();
  if (!report.has_uvs) return report;
  const Mesh labeled = mesh.has_islands() ? mesh : detect_islands(mesh);
  report.island_count = labeled.island_count();
  for (const auto& t : mesh.uvs)
    if (t.x() < 0 || t.x() > 1 || t.y() < 0 || t.y() > 1) report.out_of_bounds = true;

  // -1 unclaimed, -2 claimed by two or more islands, else the island id.
  std::vector<int> claim(static_cast<std::size_t>(resolution) * resolution, -1);
  report.degenerate_uv_faces =
      rasterize_uv_faces(labeled, resolution, 0, resolution,
                         [&](int x, int y, int face, const Barycentric&) {
                           int& c = claim[static_cast<std::size_t>(y) * resolution + x];
                           int id = labeled.island_ids[face];
                           if (c == -1) c = id;
                           else if (c != id) c = -2;
                         });
  std::size_t multi = std::count(claim.begin(), claim.end(), -2);
  report.overlap_area = static_cast<double>(multi) / claim.size();
  return report;
}

/// Placement of one island's bounding rectangle inside the unit UV square.
struct IslandPlacement {
  Eigen::Vector2d source_min;
  Eigen::Vector2d offset;
};

namespace detail {

struct IslandRect {
  int id;
  double w, h;
};

// Shelf packing of (w*s + margin) x (h*s + margin) cells into the unit square.
// Fills `origins` (cell lower-left corners, indexed by island id) on success.
inline bool shelf_pack(const std::vector<IslandRect>& sorted, double scale, double margin,
                       std::vector<Eigen::Vector2d>& origins) {
  constexpr double slack = 1e-12;
  double x = 0, y = 0, shelf = 0;
  for (const auto& r : sorted) {
    double cw = r.w * scale + margin, ch = r.h * scale + margin;
    if (cw > 1.0 + slack || ch > 1.0 + slack) return false;
    if (x + cw > 1.0 + slack) {
      y += shelf;
      x = 0;
      shelf = 0;
    }
    origins[r.id] = {x, y};
    x += cw;
    shelf = std::max(shelf, ch);
  }
  return y + shelf <= 1.0 + slack;
}

}  // namespace detail

/// Packs islands into [0,1]^2 with one global scale: island bounding
/// rectangles are shelf-packed tallest first, and the largest feasible scale
/// is found by bisection. Islands end up at least `margin_texels` (at
/// `reference_res`) apart and margin/2 away from the border.
inline Mesh repack_uv_islands(Mesh mesh, double margin_texels = 4.0, int reference_res = 1024) {
  require(mesh.has_uvs(), "repacking requires UVs");
  require(margin_texels >= 0, "margin must be non-negative");
  if (!mesh.has_islands()) mesh = detect_islands(std::move(mesh));
  const int n = mesh.island_count();
  const double margin = margin_texels / reference_res;

  std::vector<Eigen::Vector2d> lo(n, Eigen::Vector2d::Constant(std::numeric_limits<double>::max()));
  std::vector<Eigen::Vector2d> hi(n, Eigen::Vector2d::Constant(std::numeric_limits<double>::lowest()));
  std::vector<int> uv_island(mesh.uvs.size(), -1);
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    int id = mesh.island_ids[i];
    for (int t : mesh.faces[i].t) {
      if (uv_island[t] >= 0 && uv_island[t] != id)
        fail(ErrorCode::Layout, "uv index shared between islands; labels are inconsistent");
      uv_island[t] = id;
      lo[id] = lo[id].cwiseMin(mesh.uvs[t]);
      hi[id] = hi[id].cwiseMax(mesh.uvs[t]);
    }
  }

  std::vector<detail::IslandRect> rects;
  double largest = 0;
  for (int id = 0; id < n; ++id) {
    if (lo[id].x() > hi[id].x()) lo[id] = hi[id] = Eigen::Vector2d::Zero();  // unused label
    Eigen::Vector2d size = hi[id] - lo[id];
    rects.push_back({id, size.x(), size.y()});
    largest = std::max({largest, size.x(), size.y()});
  }
  std::stable_sort(rects.begin(), rects.end(), [](const auto& a, const auto& b) {
    if (a.h != b.h) return a.h > b.h;
    return a.w > b.w;
  });
  if (!(largest > 0)) fail(ErrorCode::Layout, "all UV islands have zero extent");

  std::vector<Eigen::Vector2d> origins(n), trial(n);
  double scale_hi = (1.0 - margin) / largest;
  double scale = scale_hi;
  if (!detail::shelf_pack(rects, scale_hi, margin, origins)) {
    double lo_s = scale_hi * 1e-6;
    if (!detail::shelf_pack(rects, lo_s, margin, origins))
      fail(ErrorCode::Layout, "island packing failed at minimum scale (" + std::to_string(n) +
                                  " islands, margin " + std::to_string(margin_texels) + " texels)");
    double hi_s = scale_hi;
    while (hi_s - lo_s > 1e-13 * scale_hi) {
      double mid = 0.5 * (lo_s + hi_s);
      if (detail::shelf_pack(rects, mid, margin, trial)) {
        lo_s = mid;
        origins = trial;
      } else {
        hi_s = mid;
      }
    }
    scale = lo_s;
  }

  const Eigen::Vector2d inset = Eigen::Vector2d::Constant(0.5 * margin);
  for (std::size_t t = 0; t < mesh.uvs.size(); ++t) {
    int id = uv_island[t];
    if (id < 0) continue;
    mesh.uvs[t] = (mesh.uvs[t] - lo[id]) * scale + origins[id] + inset;
    mesh.uvs[t] = mesh.uvs[t].cwiseMax(0.0).cwiseMin(1.0);
  }
  return mesh;
}

/// Replacement for an automatic unwrapper: every face is projected onto the
/// plane of its dominant normal axis, faces are grouped by signed axis into
/// at most six islands, and the result is repacked.
inline Mesh fallback_unwrap(Mesh mesh, double margin_texels = 4.0, int reference_res = 1024) {
  require(!mesh.faces.empty(), "cannot unwrap a mesh without faces");
  std::vector<int> group(mesh.faces.size());
  std::array<bool, 6> used{};
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    const Face& f = mesh.faces[i];
    Eigen::Vector3d n = (mesh.vertices[f.v[1]] - mesh.vertices[f.v[0]])
                            .cross(mesh.vertices[f.v[2]] - mesh.vertices[f.v[0]]);
    if (n.squaredNorm() == 0.0)
      n = mesh.normals[f.n[0]] + mesh.normals[f.n[1]] + mesh.normals[f.n[2]];
    int axis = 0;
    n.cwiseAbs().maxCoeff(&axis);
    group[i] = 2 * axis + (n[axis] < 0 ? 1 : 0);
    used[group[i]] = true;
  }
  // Chart axes chosen so each projection is seen un-mirrored from outside.
  auto project = [](int g, const Eigen::Vector3d& p) -> Eigen::Vector2d {
    switch (g) {
      case 0: return {-p.z(), p.y()};  // +X
      case 1: return {p.z(), p.y()};   // -X
      case 2: return {p.x(), -p.z()};  // +Y
      case 3: return {p.x(), p.z()};   // -Y
      case 4: return {p.x(), p.y()};   // +Z
      default: return {-p.x(), p.y()}; // -Z
    }
  };
  std::array<int, 6> island_of{};
  int next = 0;
  for (int g = 0; g < 6; ++g) island_of[g] = used[g] ? next++ : -1;

  std::unordered_map<long long, int> uv_index;
  mesh.uvs.clear();
  mesh.island_ids.resize(mesh.faces.size());
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    Face& f = mesh.faces[i];
    for (int k = 0; k < 3; ++k) {
      long long key = static_cast<long long>(f.v[k]) * 6 + group[i];
      auto [it, inserted] = uv_index.emplace(key, static_cast<int>(mesh.uvs.size()));
      if (inserted) mesh.uvs.push_back(project(group[i], mesh.vertices[f.v[k]]));
      f.t[k] = it->second;
    }
    mesh.island_ids[i] = island_of[group[i]];
  }
  return repack_uv_islands(std::move(mesh), margin_texels, reference_res);
}

/// Area-weighted mean of n . (p - c) over face corners, with c the area
/// centroid. Negative when shading normals point inward on the whole.
inline double normal_orientation(const Mesh& mesh) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  double total = 0;
  for (const auto& f : mesh.faces) {
    const auto &a = mesh.vertices[f.v[0]], &b = mesh.vertices[f.v[1]], &d = mesh.vertices[f.v[2]];
    const double area = triangle_area(a, b, d);
    c += area * (a + b + d) / 3.0;
    total += area;
  }
  if (total <= 0) return 0;
  c /= total;
  double sum = 0;
  for (const auto& f : mesh.faces) {
    const double area = triangle_area(mesh.vertices[f.v[0]], mesh.vertices[f.v[1]], mesh.vertices[f.v[2]]);
    for (int k = 0; k < 3; ++k)
      if (f.n[k] >= 0) sum += area * mesh.normals[f.n[k]].dot(mesh.vertices[f.v[k]] - c);
  }
  return sum / (3 * total);
}

/// Radius of the smallest sphere around `center` containing every vertex.
inline double bounding_radius(const Mesh& mesh, const Eigen::Vector3d& center) {
  double r = 0;
  for (const auto& v : mesh.vertices) r = std::max(r, (v - center).norm());
  return r;
}

}  // namespace texgen
