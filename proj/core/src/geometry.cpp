#include "travmap/geometry.hpp"

#include "travmap/errors.hpp"

#include <cmath>

namespace travmap {

VoxelGridSpec::VoxelGridSpec(const Vec3& min_corner, const Vec3& max_corner,
                             const Vec3& voxel_size)
    : min_corner(min_corner), max_corner(max_corner), voxel_size(voxel_size) {
  for (int a = 0; a < 3; ++a) {
    if (!(voxel_size[a] > 0.0)) throw ConfigError("voxel_size must be positive");
    if (!(max_corner[a] > min_corner[a])) throw ConfigError("grid extent must be non-empty");
    const long n = std::lround((max_corner[a] - min_corner[a]) / voxel_size[a]);
    if (n < 1) throw ConfigError("grid must span at least one voxel per axis");
    dims[a] = int(n);
  }
}

VoxelGridSpec default_label_grid() {
  return VoxelGridSpec(Vec3(-25.6, -25.6, -2.0), Vec3(25.6, 25.6, 4.4), Vec3(0.2, 0.2, 0.2));
}

std::optional<Index3> voxel_index(const Vec3& p, const VoxelGridSpec& grid) {
  Index3 idx;
  for (int a = 0; a < 3; ++a) {
    // membership is the half-open box test; the floor only picks the cell
    if (!(p[a] >= grid.min_corner[a] && p[a] < grid.max_corner[a])) return std::nullopt;
    long i = long(std::floor((p[a] - grid.min_corner[a]) / grid.voxel_size[a]));
    if (i < 0) i = 0;
    if (i >= grid.dims[a]) i = grid.dims[a] - 1;
    idx[a] = int(i);
  }
  return idx;
}

} // namespace travmap
