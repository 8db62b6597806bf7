#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "travmap/geometry.hpp"
#include "travmap/surface.hpp"

namespace travmap {

// Geometric descriptor of one mesh vertex: elevation (meters), slope angle
// (radians, [0, pi/2]) and roughness (natural log of the neighborhood's mean
// squared plane deviation, log m^2).
struct VertexFeatures {
  double h = 0.0;
  double theta = 0.0;
  double r = 0.0;

  Vec3 vec() const { return Vec3(h, theta, r); }
};

// Exactly-planar neighborhoods have zero mean squared error; the floor keeps
// the logarithm finite. 1e-9 m^2 is ~0.03 mm RMS, far below sensor noise.
inline constexpr double kMseFloor = 1e-9;

inline constexpr int kDefaultFeatureNeighbors = 16;

// The vertex's z coordinate.
double elevation(const Vec3& v);

// Angle between the normal and the global vertical axis, folded to [0, pi/2]
// by taking |n.z| so that downward-oriented normals measure the same
// inclination. The dot product is clamped before arccos. Throws NonUnitNormal
// when the norm deviates from 1 by more than 1e-6.
double slope(const Vec3& n);

// Roughness of vertex `vertex_id`: fit a total-least-squares plane (through
// the centroid, normal = smallest-eigenvalue eigenvector of the covariance)
// to the k exact nearest other vertices, take the mean squared orthogonal
// distance of those neighbors to the plane, floor it at kMseFloor, and return
// the natural log. Convenience entry point that indexes the mesh on each
// call; use vertex_features for whole-mesh computation. Throws TooFewVertices
// when the mesh has fewer than k+1 vertices or k < 4.
double roughness(std::size_t vertex_id, const TriMesh& mesh, int k);

// All three features for every vertex, in vertex order, sharing one spatial
// index. The mesh must carry vertex normals.
std::vector<VertexFeatures> vertex_features(const TriMesh& mesh,
                                            int k = kDefaultFeatureNeighbors,
                                            int threads = 0);

// Dense voxel grid of per-voxel mean features. A voxel is occupied iff at
// least one mesh vertex fell inside it.
struct FeatureGrid {
  VoxelGridSpec spec;
  std::vector<std::uint32_t> counts;  // vertices per voxel, dense
  std::vector<Vec3> means;            // mean (h, theta, r); zero where count == 0

  explicit FeatureGrid(const VoxelGridSpec& s)
      : spec(s), counts(s.voxel_count(), 0), means(s.voxel_count(), Vec3::Zero()) {}

  bool occupied(std::uint32_t linear) const { return counts[linear] > 0; }
  std::size_t occupied_count() const;
};

// Bins each in-grid vertex by voxel_index and averages the member features
// per voxel (arithmetic mean, accumulated in vertex order). Out-of-grid
// vertices are ignored.
FeatureGrid voxelize_features(const std::vector<VertexFeatures>& feats,
                              const TriMesh& mesh, const VoxelGridSpec& spec);

// Binary container for feature grids: little-endian, magic "STNF", u32
// version, grid spec (3xf64 min, 3xf64 max, 3xf64 voxel, 3xu32 dims), then
// one record per occupied voxel (u32 linear index, u32 count, 3xf64 mean
// features) in ascending linear-index order.
void write_feature_grid(const std::string& path, const FeatureGrid& grid);
FeatureGrid read_feature_grid(const std::string& path);

}  // namespace travmap
