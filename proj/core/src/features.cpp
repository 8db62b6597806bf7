#include "travmap/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <span>

#include <Eigen/Eigenvalues>

#include "travmap/errors.hpp"
#include "travmap/knn.hpp"
#include "travmap/parallel.hpp"

namespace travmap {

namespace {

// TLS plane fit of the neighbor set, then the mean squared orthogonal
// distance of the neighbors to that plane, floored and logged.
double roughness_of_neighborhood(std::span<const int> neighbors, const TriMesh& mesh) {
  Vec3 centroid = Vec3::Zero();
  for (int j : neighbors) centroid += mesh.vertices[std::size_t(j)];
  centroid /= double(neighbors.size());

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (int j : neighbors) {
    const Vec3 d = mesh.vertices[std::size_t(j)] - centroid;
    cov += d * d.transpose();
  }
  cov /= double(neighbors.size());

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Vec3 plane_normal = eig.eigenvectors().col(0);  // smallest eigenvalue

  double mse = 0.0;
  for (int j : neighbors) {
    const double d = plane_normal.dot(mesh.vertices[std::size_t(j)] - centroid);
    mse += d * d;
  }
  mse /= double(neighbors.size());
  return std::log(std::max(mse, kMseFloor));
}

double index_cell_for(const TriMesh& mesh) {
  Vec3 lo = mesh.vertices[0], hi = mesh.vertices[0];
  for (const Vec3& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  // sort extents so collapsed axes don't zero out the density estimate
  double e[3] = {hi.x() - lo.x(), hi.y() - lo.y(), hi.z() - lo.z()};
  std::sort(e, e + 3, std::greater<>());
  const double n = double(mesh.vertices.size());
  if (e[0] <= 1e-9) return 1e-3;                       // coincident vertices
  if (e[1] <= 1e-9 * e[0]) return 2.0 * e[0] / n;      // collinear vertices
  return std::max(2.0 * std::sqrt(e[0] * e[1] / n), 1e-6);
}

void check_k(std::size_t vertex_count, int k) {
  if (k < 4 || vertex_count < std::size_t(k) + 1) {
    throw TooFewVertices("roughness needs k >= 4 and at least k+1 mesh vertices");
  }
}

}  // namespace

double elevation(const Vec3& v) { return v.z(); }

double slope(const Vec3& n) {
  const double norm = n.norm();
  if (std::abs(norm - 1.0) > 1e-6) throw NonUnitNormal(norm);
  const double d = std::min(std::abs(n.z()), 1.0);
  return std::acos(d);
}

double roughness(std::size_t vertex_id, const TriMesh& mesh, int k) {
  check_k(mesh.vertices.size(), k);
  const PointGridIndex index(mesh.vertices, index_cell_for(mesh));
  std::vector<int> nn;
  index.knn(mesh.vertices[vertex_id], k, std::ptrdiff_t(vertex_id), -1.0, nn);
  return roughness_of_neighborhood(nn, mesh);
}

std::vector<VertexFeatures> vertex_features(const TriMesh& mesh, int k, int threads) {
  check_k(mesh.vertices.size(), k);
  if (!mesh.has_normals() || mesh.vertex_normals.size() != mesh.vertices.size()) {
    throw Error("vertex_features requires per-vertex normals; run vertex_normals first");
  }
  const PointGridIndex index(mesh.vertices, index_cell_for(mesh));
  std::vector<VertexFeatures> feats(mesh.vertices.size());
  parallel_for(mesh.vertices.size(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<int> nn;
    for (std::size_t i = begin; i < end; ++i) {
      index.knn(mesh.vertices[i], k, std::ptrdiff_t(i), -1.0, nn);
      feats[i].h = elevation(mesh.vertices[i]);
      feats[i].theta = slope(mesh.vertex_normals[i]);
      feats[i].r = roughness_of_neighborhood(nn, mesh);
    }
  });
  return feats;
}

std::size_t FeatureGrid::occupied_count() const {
  std::size_t n = 0;
  for (const std::uint32_t c : counts) n += c > 0 ? 1 : 0;
  return n;
}

FeatureGrid voxelize_features(const std::vector<VertexFeatures>& feats,
                              const TriMesh& mesh, const VoxelGridSpec& spec) {
  if (feats.size() != mesh.vertices.size()) {
    throw Error("feature list and mesh vertex count differ");
  }
  FeatureGrid grid(spec);
  std::vector<Vec3> sums(spec.voxel_count(), Vec3::Zero());
  for (std::size_t i = 0; i < feats.size(); ++i) {  // vertex order: deterministic sums
    const auto idx = voxel_index(mesh.vertices[i], spec);
    if (!idx) continue;
    const std::uint32_t linear = spec.linear_index(*idx);
    sums[linear] += feats[i].vec();
    ++grid.counts[linear];
  }
  for (std::size_t v = 0; v < sums.size(); ++v) {
    if (grid.counts[v] > 0) grid.means[v] = sums[v] / double(grid.counts[v]);
  }
  return grid;
}

namespace {

constexpr char kFeatureMagic[4] = {'S', 'T', 'N', 'F'};
constexpr std::uint32_t kFeatureVersion = 1;

template <typename T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t& cur, const std::string& path) {
  if (cur + sizeof(T) > buf.size()) throw MalformedFile(path, 0, "truncated feature grid");
  T v;
  std::memcpy(&v, buf.data() + cur, sizeof(T));
  cur += sizeof(T);
  return v;
}

}  // namespace

void write_feature_grid(const std::string& path, const FeatureGrid& grid) {
  std::string buf;
  buf.reserve(64 + grid.occupied_count() * 32);
  buf.append(kFeatureMagic, 4);
  put(buf, kFeatureVersion);
  for (int a = 0; a < 3; ++a) put(buf, grid.spec.min_corner[a]);
  for (int a = 0; a < 3; ++a) put(buf, grid.spec.max_corner[a]);
  for (int a = 0; a < 3; ++a) put(buf, grid.spec.voxel_size[a]);
  for (int a = 0; a < 3; ++a) put(buf, std::uint32_t(grid.spec.dims[std::size_t(a)]));
  for (std::size_t v = 0; v < grid.counts.size(); ++v) {
    if (grid.counts[v] == 0) continue;
    put(buf, std::uint32_t(v));
    put(buf, grid.counts[v]);
    for (int a = 0; a < 3; ++a) put(buf, grid.means[v][a]);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("failed to open '" + path + "' for writing");
  out.write(buf.data(), std::streamsize(buf.size()));
  if (!out) throw Error("failed while writing '" + path + "'");
}

FeatureGrid read_feature_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInput(path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 4 || std::memcmp(buf.data(), kFeatureMagic, 4) != 0) {
    throw MalformedFile(path, 0, "not a feature grid file (bad magic)");
  }
  std::size_t cur = 4;
  const auto version = take<std::uint32_t>(buf, cur, path);
  if (version != kFeatureVersion) {
    throw MalformedFile(path, 0, "unsupported feature grid version " + std::to_string(version));
  }
  Vec3 mn, mx, voxel;
  for (int a = 0; a < 3; ++a) mn[a] = take<double>(buf, cur, path);
  for (int a = 0; a < 3; ++a) mx[a] = take<double>(buf, cur, path);
  for (int a = 0; a < 3; ++a) voxel[a] = take<double>(buf, cur, path);
  Index3 dims{};
  for (int a = 0; a < 3; ++a) dims[std::size_t(a)] = int(take<std::uint32_t>(buf, cur, path));

  VoxelGridSpec spec(mn, mx, voxel);
  if (spec.dims != dims) throw MalformedFile(path, 0, "grid dims inconsistent with extent");

  FeatureGrid grid(spec);
  const std::size_t record = 2 * sizeof(std::uint32_t) + 3 * sizeof(double);
  if ((buf.size() - cur) % record != 0) {
    throw MalformedFile(path, 0, "feature records truncated");
  }
  std::uint32_t prev = 0;
  bool first = true;
  while (cur < buf.size()) {
    const auto linear = take<std::uint32_t>(buf, cur, path);
    if (linear >= grid.counts.size()) {
      throw MalformedFile(path, 0, "voxel index out of range");
    }
    if (!first && linear <= prev) {
      throw MalformedFile(path, 0, "voxel records out of order");
    }
    first = false;
    prev = linear;
    const auto count = take<std::uint32_t>(buf, cur, path);
    if (count == 0) throw MalformedFile(path, 0, "zero-count voxel record");
    grid.counts[linear] = count;
    for (int a = 0; a < 3; ++a) grid.means[linear][a] = take<double>(buf, cur, path);
  }
  return grid;
}

}  // namespace travmap
