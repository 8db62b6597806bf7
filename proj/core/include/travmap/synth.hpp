#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "travmap/geometry.hpp"
#include "travmap/ingest.hpp"

namespace travmap {

// Analytic heightfield terrains assembled from rectangular regions. Every
// region exposes closed-form height and gradient, so reconstructed geometry
// can be checked against exact values.
enum class RegionKind { Flat, Ramp, Rough, Wall };

struct TerrainRegion {
  RegionKind kind = RegionKind::Flat;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // closed extent rectangle
  double z0 = 0.0;                        // base height

  double beta = 0.0;     // ramp: grade angle, radians in (0, 60 deg)
  double heading = 0.0;  // ramp: uphill direction, radians

  double amplitude = 0.0;   // rough: bump height
  double wavelength = 1.0;  // rough: bump period

  double height = 0.0;     // wall: raised band height
  double thickness = 0.0;  // wall: band width across the rectangle's long axis

  bool contains(double x, double y) const {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
  }
};

struct TerrainSpec {
  std::vector<TerrainRegion> regions;
  std::uint64_t seed = 0;
};

// Rejects overlapping region interiors and out-of-range parameters.
void validate_terrain(const TerrainSpec& spec);

// Height of the terrain at (x, y):
//   flat  -> z0
//   ramp  -> z0 + tan(beta) * (signed distance from (x0, y0) along heading)
//   rough -> z0 + amplitude * sin(2 pi x / wavelength) * sin(2 pi y / wavelength)
//   wall  -> z0 + height inside the central band of the given thickness, z0 outside
// Throws OutsideTerrain when (x, y) lies in no region.
double terrain_height(const TerrainSpec& spec, double x, double y);

// Slope angle of the analytic surface: arccos(1 / sqrt(1 + |grad z|^2)).
// Walls report their locally flat value (0); the discontinuous band edge has
// no meaningful slope. Throws OutsideTerrain.
double analytic_slope(const TerrainSpec& spec, double x, double y);

struct LidarModel {
  int rings = 32;
  double elev_min = -40.0 * kPi / 180.0;  // radians, lowest ring
  double elev_max = 0.0;                  // radians, highest ring
  double azimuth_step = 0.5 * kPi / 180.0;
  double max_range = 50.0;
  double noise_sigma = 0.0;  // 1-sigma additive range noise, meters
};

// Casts one scan from `pose`: rays ordered ring-major (all azimuths of ring 0
// first), each marched at 0.05 m steps and refined by bisection to 1e-4 m
// against the heightfield. Misses produce no point. Range noise, when
// enabled, is seeded per ray so results are independent of scheduling. Points
// are returned in the sensor frame; the frame timestamp is pose.t.
ScanFrame virtual_scan(const TerrainSpec& spec, const Pose& pose,
                       const LidarModel& lidar, std::uint64_t seed, int threads = 0);

// Poses at 10 Hz following the polyline at `speed`, z = terrain height +
// clearance, yaw along the local path tangent, zero pitch/roll. The polyline
// needs >= 2 pairwise-distinct consecutive points. Throws OutsideTerrain when
// the path leaves the terrain and ConfigError on degenerate input.
Trajectory gen_trajectory(const TerrainSpec& spec,
                          const std::vector<Eigen::Vector2d>& path, double speed,
                          double clearance);

// A full synthetic sequence: terrain, the driven path, and the sensor model.
struct SceneSpec {
  TerrainSpec terrain;
  std::vector<Eigen::Vector2d> path;
  double speed = 1.0;
  // body-frame height above ground; keep it under the labeling z-band so the
  // poses' vertical tolerance reaches the ground voxels driven over
  double clearance = 0.2;
  LidarModel lidar;
};

// Strict JSON reader for scene files (unknown keys rejected; angles are given
// in degrees with *_deg keys). Throws MissingInput and ConfigError.
SceneSpec load_scene(const std::string& path);

}  // namespace travmap
