#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "travmap/geometry.hpp"
#include "travmap/ingest.hpp"

namespace travmap {

// A fused point cloud in the global frame. `viewpoints` records the sensor
// origin each point was observed from (used to orient normals). `normals` is
// empty until estimate_normals fills it.
struct GlobalCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<Vec3> viewpoints;

  bool has_normals() const { return !normals.empty(); }
  std::size_t size() const { return points.size(); }
};

// Transforms up to `window` consecutive scans (taken from the front of
// `scans`) into the global frame via pose interpolation at each scan's
// timestamp and concatenates them in scan order. Scans whose timestamp falls
// outside the trajectory span are skipped (count reported via `skipped`).
// Throws NoUsableScans when nothing is retained.
GlobalCloud accumulate(std::span<const ScanFrame> scans, const Trajectory& traj,
                       int window, int threads = 0, std::size_t* skipped = nullptr);

// Collapses each occupied leaf cell to the centroid of its members; the
// representative's viewpoint is copied from the member nearest the centroid
// (lowest index on ties). Output order follows first appearance of each cell
// in the input. Normals are not carried through; estimate afterwards.
GlobalCloud voxel_downsample(const GlobalCloud& cloud, double leaf);

// Fills per-point normals: for each point, take its k exact nearest neighbors
// (self excluded, distance ties broken by lowest index), fit a plane through
// the neighborhood plus the point itself, and use the smallest-eigenvalue
// eigenvector of the covariance. Normals are flipped so that
// normal . (viewpoint - point) >= 0. Neighborhoods of rank < 2 fall back to
// (0,0,1); their count is reported via `degenerate`. Throws TooFewPoints when
// the cloud has fewer than k+1 points or k < 3. `index_cell` sets the spatial
// hash cell size (<= 0 picks a density-based heuristic).
GlobalCloud estimate_normals(const GlobalCloud& cloud, int k, int threads = 0,
                             std::size_t* degenerate = nullptr, double index_cell = 0.0);

}  // namespace travmap
