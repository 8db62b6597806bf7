#include "travmap/surface.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <unordered_map>
#include <utility>

#include "travmap/errors.hpp"
#include "travmap/knn.hpp"
#include "travmap/parallel.hpp"
#include "travmap/ply.hpp"

namespace travmap {

namespace {

// ---------------------------------------------------------------------------
// sampling lattice
// ---------------------------------------------------------------------------

struct Lattice {
  Vec3 origin = Vec3::Zero();
  double h = 0.1;
  int nx = 0, ny = 0, nz = 0;  // node counts

  std::size_t node_count() const {
    return std::size_t(nx) * std::size_t(ny) * std::size_t(nz);
  }
  std::size_t node_id(int i, int j, int k) const {
    return (std::size_t(k) * std::size_t(ny) + std::size_t(j)) * std::size_t(nx) +
           std::size_t(i);
  }
  Vec3 node_pos(int i, int j, int k) const {
    return Vec3(origin.x() + double(i) * h, origin.y() + double(j) * h,
                origin.z() + double(k) * h);
  }
};

Lattice make_lattice(const GlobalCloud& cloud, const ReconstructionParams& p) {
  Vec3 lo = cloud.points[0];
  Vec3 hi = cloud.points[0];
  for (const Vec3& q : cloud.points) {
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  const double pad = p.support_radius + p.lattice_spacing;
  lo.array() -= pad;
  hi.array() += pad;
  if (p.has_clip) {
    lo = lo.cwiseMax(p.clip_min);
    hi = hi.cwiseMin(p.clip_max);
    if ((lo.array() > hi.array()).any()) throw EmptySurface();
  }

  Lattice lat;
  lat.h = p.lattice_spacing;
  int* dims[3] = {&lat.nx, &lat.ny, &lat.nz};
  for (int a = 0; a < 3; ++a) {
    // anchor nodes to multiples of h so lattice positions do not depend on
    // where the data bounds happen to fall; with a clip box the first node is
    // pulled up to the first multiple inside it so no node escapes the box
    double i0 = std::floor(lo[a] / lat.h);
    if (p.has_clip && i0 * lat.h < lo[a] - 1e-9 * lat.h) i0 += 1.0;
    lat.origin[a] = i0 * lat.h;
    long n = long(std::floor((hi[a] - lat.origin[a]) / lat.h + 1e-9)) + 1;
    if (n < 2) {
      if (p.has_clip) throw EmptySurface();  // clip thinner than one cell
      n = 2;
    }
    *dims[a] = int(n);
  }
  if (lat.node_count() > 300'000'000ull) {
    throw Error("reconstruction lattice exceeds 3e8 nodes; shrink the clip box or coarsen lattice_spacing");
  }
  return lat;
}

// ---------------------------------------------------------------------------
// implicit moving-least-squares field
// ---------------------------------------------------------------------------

void evaluate_field(const GlobalCloud& cloud, const ReconstructionParams& p,
                    const Lattice& lat, int threads, std::vector<float>& values,
                    std::vector<std::uint8_t>& valid) {
  const PointGridIndex index(cloud.points, p.support_radius / 2.0);
  const double sigma = p.support_radius / 3.0;
  const double inv_2s2 = 1.0 / (2.0 * sigma * sigma);

  values.assign(lat.node_count(), 0.0f);
  valid.assign(lat.node_count(), 0);

  const std::size_t nxy = std::size_t(lat.nx) * std::size_t(lat.ny);
  parallel_for(lat.node_count(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<int> nn;
    for (std::size_t id = begin; id < end; ++id) {
      const int i = int(id % std::size_t(lat.nx));
      const int j = int((id / std::size_t(lat.nx)) % std::size_t(lat.ny));
      const int k = int(id / nxy);
      const Vec3 pos = lat.node_pos(i, j, k);

      index.knn(pos, p.neighbors, -1, p.support_radius, nn);
      if (nn.empty()) continue;  // no data within the support radius

      double wsum = 0.0;
      Vec3 psum = Vec3::Zero();
      Vec3 nsum = Vec3::Zero();
      for (int q : nn) {
        const Vec3& pt = cloud.points[std::size_t(q)];
        const double w = std::exp(-(pos - pt).squaredNorm() * inv_2s2);
        wsum += w;
        psum += w * pt;
        nsum += w * cloud.normals[std::size_t(q)];
      }
      const double nlen = nsum.norm();
      if (wsum <= 0.0 || nlen < 1e-12) continue;  // opposing normals cancelled
      const Vec3 pbar = psum / wsum;
      const Vec3 nbar = nsum / nlen;
      values[id] = float((pos - pbar).dot(nbar));
      valid[id] = 1;
    }
  });
}

// ---------------------------------------------------------------------------
// zero level-set extraction
//
// Each lattice cube is split into the six Kuhn tetrahedra around its main
// diagonal. The decomposition is translation-invariant, so the triangulated
// diagonal of every cube face matches its neighbor's and the extracted sheet
// is crack-free; within a tetrahedron the field is linear, so no ambiguous
// cases exist. A node value of exactly 0 counts as inside.
// ---------------------------------------------------------------------------

constexpr int kTetCorners[6][4] = {
    {0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7},
    {0, 2, 6, 7}, {0, 4, 6, 7}, {0, 4, 5, 7},
};

Vec3 corner_offset(int c) {
  return Vec3(double(c & 1), double((c >> 1) & 1), double((c >> 2) & 1));
}

struct WeldKey {
  std::int64_t x, y, z;
  bool operator==(const WeldKey&) const = default;
};

struct WeldKeyHash {
  std::size_t operator()(const WeldKey& k) const {
    std::uint64_t h = 1469598103934665603ull;
    for (std::int64_t v : {k.x, k.y, k.z}) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

class MeshBuilder {
public:
  std::uint32_t vertex(const Vec3& p) {
    const WeldKey key{quantize(p.x()), quantize(p.y()), quantize(p.z())};
    const auto [it, inserted] = weld_.try_emplace(key, std::uint32_t(vertices_.size()));
    if (inserted) vertices_.push_back(p);
    return it->second;
  }

  void face(std::uint32_t a, std::uint32_t b, std::uint32_t c, const Vec3& grad) {
    if (a == b || b == c || a == c) return;  // edge collapsed onto a node
    const Vec3 n = (vertices_[b] - vertices_[a]).cross(vertices_[c] - vertices_[a]);
    if (n.dot(grad) < 0.0) std::swap(b, c);  // orient toward increasing field
    faces_.push_back({a, b, c});
  }

  // Drops zero-area faces, then vertices no surviving face references.
  TriMesh finish() && {
    TriMesh mesh;
    std::vector<std::uint32_t> remap(vertices_.size(), UINT32_MAX);
    for (const auto& f : faces_) {
      const Vec3& a = vertices_[f[0]];
      const double area2 = (vertices_[f[1]] - a).cross(vertices_[f[2]] - a).norm();
      if (area2 <= 2e-12) continue;  // area <= 1e-12 m^2
      std::array<std::uint32_t, 3> out;
      for (int v = 0; v < 3; ++v) {
        std::uint32_t& slot = remap[f[std::size_t(v)]];
        if (slot == UINT32_MAX) {
          slot = std::uint32_t(mesh.vertices.size());
          mesh.vertices.push_back(vertices_[f[std::size_t(v)]]);
        }
        out[std::size_t(v)] = slot;
      }
      mesh.faces.push_back(out);
    }
    return mesh;
  }

private:
  static std::int64_t quantize(double v) { return std::llround(v * 1e7); }

  std::unordered_map<WeldKey, std::uint32_t, WeldKeyHash> weld_;
  std::vector<Vec3> vertices_;
  std::vector<std::array<std::uint32_t, 3>> faces_;
};

// Intersection of the zero level with edge (a,b); computed with the endpoint
// of lower node id first so shared edges yield bit-identical positions
// regardless of which cell or tetrahedron asks.
Vec3 edge_zero(std::uint64_t ida, const Vec3& pa, double fa, std::uint64_t idb,
               const Vec3& pb, double fb) {
  if (idb < ida) return edge_zero(idb, pb, fb, ida, pa, fa);
  const double t = fa / (fa - fb);
  return pa + t * (pb - pa);
}

TriMesh extract_level_set(const Lattice& lat, const std::vector<float>& values,
                          const std::vector<std::uint8_t>& valid) {
  // per-tetrahedron linear-field gradient: solve from the unit-cube corner
  // offsets once, reuse for every cell (positive scaling is irrelevant to the
  // orientation test)
  Eigen::Matrix3d grad_solver[6];
  for (int t = 0; t < 6; ++t) {
    Eigen::Matrix3d A;
    for (int r = 0; r < 3; ++r) {
      A.row(r) = (corner_offset(kTetCorners[t][r + 1]) - corner_offset(kTetCorners[t][0]))
                     .transpose();
    }
    grad_solver[t] = A.inverse();
  }

  MeshBuilder builder;
  std::uint64_t ids[8];
  Vec3 pos[8];
  double f[8];
  bool inside[8];

  for (int k = 0; k + 1 < lat.nz; ++k) {
    for (int j = 0; j + 1 < lat.ny; ++j) {
      for (int i = 0; i + 1 < lat.nx; ++i) {
        bool ok = true;
        int n_inside = 0;
        for (int c = 0; c < 8 && ok; ++c) {
          const int ii = i + (c & 1), jj = j + ((c >> 1) & 1), kk = k + ((c >> 2) & 1);
          const std::size_t id = lat.node_id(ii, jj, kk);
          if (!valid[id]) {
            ok = false;
            break;
          }
          ids[c] = id;
          f[c] = double(values[id]);
          inside[c] = f[c] <= 0.0;
          n_inside += inside[c] ? 1 : 0;
        }
        if (!ok || n_inside == 0 || n_inside == 8) continue;
        for (int c = 0; c < 8; ++c) {
          pos[c] = lat.node_pos(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
        }

        for (int t = 0; t < 6; ++t) {
          const int* tc = kTetCorners[t];
          int in_list[4], out_list[4], n_in = 0, n_out = 0;
          for (int v = 0; v < 4; ++v) {
            (inside[tc[v]] ? in_list[n_in++] : out_list[n_out++]) = tc[v];
          }
          if (n_in == 0 || n_in == 4) continue;

          const Vec3 rhs(f[tc[1]] - f[tc[0]], f[tc[2]] - f[tc[0]], f[tc[3]] - f[tc[0]]);
          const Vec3 grad = grad_solver[t] * rhs;

          auto cut = [&](int a, int b) {
            return builder.vertex(edge_zero(ids[a], pos[a], f[a], ids[b], pos[b], f[b]));
          };
          if (n_in == 1) {
            builder.face(cut(in_list[0], out_list[0]), cut(in_list[0], out_list[1]),
                         cut(in_list[0], out_list[2]), grad);
          } else if (n_in == 3) {
            builder.face(cut(in_list[0], out_list[0]), cut(in_list[1], out_list[0]),
                         cut(in_list[2], out_list[0]), grad);
          } else {  // 2 in, 2 out: quad ring around the tetrahedron
            const std::uint32_t q0 = cut(in_list[0], out_list[0]);
            const std::uint32_t q1 = cut(in_list[0], out_list[1]);
            const std::uint32_t q2 = cut(in_list[1], out_list[1]);
            const std::uint32_t q3 = cut(in_list[1], out_list[0]);
            builder.face(q0, q1, q2, grad);
            builder.face(q0, q2, q3, grad);
          }
        }
      }
    }
  }

  TriMesh mesh = std::move(builder).finish();
  if (mesh.faces.empty()) throw EmptySurface();
  return mesh;
}

TriMesh reconstruct_mls(const GlobalCloud& cloud, const ReconstructionParams& p,
                        int threads) {
  Lattice lat = make_lattice(cloud, p);
  std::vector<float> values;
  std::vector<std::uint8_t> valid;
  evaluate_field(cloud, p, lat, threads, values, valid);
  return extract_level_set(lat, values, valid);
}

// ---------------------------------------------------------------------------
// backend registry
// ---------------------------------------------------------------------------

std::mutex g_backend_mutex;

std::map<std::string, ReconstructionBackend>& backend_map() {
  static std::map<std::string, ReconstructionBackend> backends{
      {"mls", &reconstruct_mls},
  };
  return backends;
}

}  // namespace

TriMesh reconstruct(const GlobalCloud& cloud, const ReconstructionParams& params,
                    int threads) {
  if (!cloud.has_normals() || cloud.normals.size() != cloud.points.size()) {
    throw Error("reconstruction requires an oriented cloud; run estimate_normals first");
  }
  if (cloud.points.size() < 100) {
    throw InsufficientPoints("reconstruction needs at least 100 points, got " +
                             std::to_string(cloud.points.size()));
  }
  if (!(params.lattice_spacing > 0.0) || !(params.support_radius > 0.0) ||
      params.neighbors < 1) {
    throw ConfigError("reconstruction parameters must be positive");
  }
  ReconstructionBackend backend;
  {
    std::lock_guard<std::mutex> lock(g_backend_mutex);
    const auto it = backend_map().find(params.backend);
    if (it == backend_map().end()) {
      std::string names;
      for (const auto& [name, fn] : backend_map()) {
        if (!names.empty()) names += ", ";
        names += name;
      }
      throw ConfigError("unknown reconstruction backend '" + params.backend +
                        "' (available: " + names + ")");
    }
    backend = it->second;
  }
  return backend(cloud, params, threads);
}

void register_reconstruction_backend(const std::string& name, ReconstructionBackend backend) {
  std::lock_guard<std::mutex> lock(g_backend_mutex);
  backend_map()[name] = std::move(backend);
}

std::vector<std::string> reconstruction_backend_names() {
  std::lock_guard<std::mutex> lock(g_backend_mutex);
  std::vector<std::string> names;
  for (const auto& [name, fn] : backend_map()) names.push_back(name);
  return names;
}

TriMesh vertex_normals(const TriMesh& mesh, std::size_t* isolated) {
  TriMesh out = mesh;
  out.vertex_normals.assign(mesh.vertices.size(), Vec3::Zero());
  for (const auto& face : mesh.faces) {
    const Vec3& a = mesh.vertices[face[0]];
    const Vec3 n = (mesh.vertices[face[1]] - a).cross(mesh.vertices[face[2]] - a);
    const double len = n.norm();
    if (len < 1e-15) continue;
    const Vec3 unit = n / len;
    for (const std::uint32_t v : face) out.vertex_normals[v] += unit;
  }
  std::size_t isolated_count = 0;
  for (Vec3& n : out.vertex_normals) {
    const double len = n.norm();
    if (len < 1e-12) {
      n = Vec3(0, 0, 1);
      ++isolated_count;
    } else {
      n /= len;
    }
  }
  if (isolated) *isolated = isolated_count;
  return out;
}

TriMesh crop_mesh(const TriMesh& mesh, const VoxelGridSpec& grid) {
  TriMesh out;
  std::vector<std::uint32_t> remap(mesh.vertices.size(), UINT32_MAX);
  for (const auto& face : mesh.faces) {
    bool keep = false;
    for (const std::uint32_t v : face) {
      keep = keep || voxel_index(mesh.vertices[v], grid).has_value();
    }
    if (!keep) continue;
    std::array<std::uint32_t, 3> f;
    for (int v = 0; v < 3; ++v) {
      std::uint32_t& slot = remap[face[std::size_t(v)]];
      if (slot == UINT32_MAX) {
        slot = std::uint32_t(out.vertices.size());
        out.vertices.push_back(mesh.vertices[face[std::size_t(v)]]);
        if (mesh.has_normals()) {
          out.vertex_normals.push_back(mesh.vertex_normals[face[std::size_t(v)]]);
        }
      }
      f[std::size_t(v)] = slot;
    }
    out.faces.push_back(f);
  }
  return out;
}

TriMesh read_mesh_ply(const std::string& path) {
  PlyData data = read_ply(path);
  TriMesh mesh;
  mesh.vertices = std::move(data.points);
  mesh.vertex_normals = std::move(data.normals);
  mesh.faces = std::move(data.faces);
  return mesh;
}

void write_mesh_ply(const std::string& path, const TriMesh& mesh, bool binary) {
  PlyData data;
  data.points = mesh.vertices;
  data.normals = mesh.vertex_normals;
  data.faces = mesh.faces;
  write_ply(path, data, binary);
}

}  // namespace travmap
