#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

namespace travmap {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

inline constexpr double kPi = 3.14159265358979323846;

/// Timestamped rigid transform of the robot in the global frame.
/// The quaternion is renormalized on construction from raw components.
struct Pose {
  double t = 0.0;
  Vec3 translation = Vec3::Zero();
  Quat rotation = Quat::Identity();

  Pose() = default;
  Pose(double t, const Vec3& translation, const Quat& rotation)
      : t(t), translation(translation), rotation(rotation.normalized()) {}

  static Pose identity(double t = 0.0) { return Pose(t, Vec3::Zero(), Quat::Identity()); }
};

/// R(q) * p + t
inline Vec3 transform_point(const Pose& pose, const Vec3& p) {
  return pose.rotation * p + pose.translation;
}

/// Heading of the pose's x-axis projected into the xy plane, radians.
inline double pose_yaw(const Pose& pose) {
  const Vec3 fwd = pose.rotation * Vec3::UnitX();
  return std::atan2(fwd.y(), fwd.x());
}

using Index3 = std::array<int, 3>;

/// Axis-aligned voxel grid over [min_corner, max_corner) with per-axis cell size.
/// dims are derived from the extent at construction: dims[i] = round((max-min)/voxel[i]).
struct VoxelGridSpec {
  Vec3 min_corner = Vec3::Zero();
  Vec3 max_corner = Vec3::Zero();
  Vec3 voxel_size = Vec3::Ones();
  Index3 dims = {0, 0, 0};

  VoxelGridSpec() = default;
  VoxelGridSpec(const Vec3& min_corner, const Vec3& max_corner, const Vec3& voxel_size);

  std::size_t voxel_count() const {
    return std::size_t(dims[0]) * std::size_t(dims[1]) * std::size_t(dims[2]);
  }

  /// Linear index with x fastest: (k*ny + j)*nx + i.
  std::uint32_t linear_index(const Index3& idx) const {
    return std::uint32_t((std::size_t(idx[2]) * dims[1] + idx[1]) * dims[0] + idx[0]);
  }

  Index3 from_linear(std::uint32_t lin) const {
    const int nx = dims[0], ny = dims[1];
    const int i = int(lin % std::uint32_t(nx));
    const int j = int((lin / std::uint32_t(nx)) % std::uint32_t(ny));
    const int k = int(lin / (std::uint32_t(nx) * std::uint32_t(ny)));
    return {i, j, k};
  }

  Vec3 voxel_center(const Index3& idx) const {
    return min_corner + Vec3((idx[0] + 0.5) * voxel_size.x(), (idx[1] + 0.5) * voxel_size.y(),
                             (idx[2] + 0.5) * voxel_size.z());
  }

  bool operator==(const VoxelGridSpec& other) const {
    return min_corner == other.min_corner && max_corner == other.max_corner &&
           voxel_size == other.voxel_size && dims == other.dims;
  }
};

/// The default label grid: 51.2 x 51.2 x 6.4 m ego-centered box at 0.2 m cells,
/// dims (256, 256, 32).
VoxelGridSpec default_label_grid();

/// Voxel containing p, or nullopt when p is outside [min_corner, max_corner).
/// Points exactly on the max boundary are outside.
std::optional<Index3> voxel_index(const Vec3& p, const VoxelGridSpec& grid);

/// Traversability class of one voxel. Unoccupied is the absence of surface,
/// never a class in mIoU.
enum class TravLabel : std::uint8_t {
  Traversable,
  PotentiallyTraversable,
  NonTraversable,
  Unoccupied,
};

inline char label_char(TravLabel l) {
  switch (l) {
    case TravLabel::Traversable: return 'T';
    case TravLabel::PotentiallyTraversable: return 'P';
    case TravLabel::NonTraversable: return 'N';
    case TravLabel::Unoccupied: return 'U';
  }
  return '?';
}

} // namespace travmap
