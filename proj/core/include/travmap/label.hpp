#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "travmap/features.hpp"
#include "travmap/geometry.hpp"
#include "travmap/ingest.hpp"

namespace travmap {

// Ground-contact rectangle swept along the trajectory, plus the vertical
// tolerance around the pose height within which voxels count as driven-over.
struct FootprintSpec {
  double length = 1.0;  // along heading, meters
  double width = 0.8;   // across heading, meters
  double z_band = 0.3;  // half-height of the accepted voxel-center band
};

// Gaussian reference over (h, theta, r) fitted from the driven voxels.
struct ReferenceModel {
  Vec3 mu = Vec3::Zero();
  Eigen::Matrix3d sigma = Eigen::Matrix3d::Identity();
  std::size_t sample_count = 0;
  double lambda = 0.0;
};

inline constexpr double kDefaultAlpha = 0.05;
inline constexpr double kDefaultLambda = 1e-6;

// Linear indices (ascending) of occupied voxels swept by the footprint:
// poses are sampled at <= 0.1 m spacing along the path; a voxel qualifies
// when its center falls inside the footprint rectangle oriented by the pose
// yaw and its center z lies within pose.z +- z_band. Throws
// EmptyTrajectoryOverlap when no occupied voxel qualifies.
std::vector<std::uint32_t> trajectory_voxels(const Trajectory& traj,
                                             const VoxelGridSpec& grid,
                                             const FootprintSpec& fp,
                                             const FeatureGrid& feature_grid);

// mu = mean, sigma = unbiased sample covariance + lambda*I over the mean
// features of the given voxels. Throws TooFewTrajectoryVoxels below 4.
ReferenceModel fit_reference(const FeatureGrid& feature_grid,
                             const std::vector<std::uint32_t>& traj_voxels,
                             double lambda = kDefaultLambda);

// (F - mu)^T Sigma^{-1} (F - mu) via a Cholesky solve (no explicit inverse).
// Throws SingularCovariance if sigma is not positive definite.
double mahalanobis_sq(const Vec3& f, const ReferenceModel& model);

// (1 - alpha) quantile of the chi-squared distribution with `dof` degrees of
// freedom, found by bisecting the regularized lower incomplete gamma function
// to 1e-10 absolute.
double chi2_threshold(int dof, double alpha);

// Per-voxel traversability labels over a grid.
struct LabelGrid {
  VoxelGridSpec spec;
  std::vector<TravLabel> labels;

  explicit LabelGrid(const VoxelGridSpec& s)
      : spec(s), labels(s.voxel_count(), TravLabel::Unoccupied) {}
};

// Driven voxels -> Traversable; remaining occupied voxels -> Potentially
// Traversable when their squared Mahalanobis distance is <= threshold
// (boundary inclusive), otherwise NonTraversable; unoccupied stays Unoccupied.
LabelGrid label_grid(const FeatureGrid& feature_grid,
                     const std::vector<std::uint32_t>& traj_voxels,
                     const ReferenceModel& model, double threshold,
                     int threads = 0);

// Text container: line 1 "STNL v1", line 2 "grid <min xyz> <max xyz>
// <voxel xyz> <dims xyz>", then "ix iy iz L" per occupied voxel with
// L in {T,P,N}; unlisted voxels are Unoccupied.
void write_label_grid(const std::string& path, const LabelGrid& grid);
LabelGrid read_label_grid(const std::string& path);

}  // namespace travmap
