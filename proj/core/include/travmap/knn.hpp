#pragma once

#include "travmap/geometry.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace travmap {

/// Exact nearest-neighbor index over a fixed point set, backed by a uniform
/// hash grid. Queries return exact results with ties in distance broken by
/// the lower point index, so output never depends on build or thread order.
/// The index holds a span of the caller's points; the caller keeps them alive
/// and unmodified.
class PointGridIndex {
public:
  PointGridIndex(std::span<const Vec3> points, double cell_size);

  std::size_t size() const { return points_.size(); }

  /// Indices of the k nearest points to q (fewer if the set is smaller),
  /// sorted by (distance^2, index). `exclude` drops one point (pass -1 to
  /// keep all). `max_radius` < 0 means unbounded.
  void knn(const Vec3& q, int k, std::ptrdiff_t exclude, double max_radius,
           std::vector<int>& out) const;

  /// All indices within radius of q, sorted by (distance^2, index).
  void radius_search(const Vec3& q, double radius, std::vector<int>& out) const;

private:
  struct CellCoord {
    std::int64_t x, y, z;
  };
  CellCoord cell_of(const Vec3& p) const;
  std::size_t bucket_of(const CellCoord& c) const;

  void collect_cell(const CellCoord& c, const Vec3& q, double max_d2,
                    std::vector<std::pair<double, int>>& cand) const;

  std::span<const Vec3> points_;
  double cell_size_;
  double inv_cell_;
  std::size_t bucket_count_;
  // open-addressed: sorted (hash-key, point index) pairs with bucket offsets
  std::vector<std::uint32_t> bucket_start_;
  std::vector<std::pair<std::uint64_t, std::uint32_t>> entries_;
  // bounding box of occupied cells; sweeps never need to leave it
  CellCoord cell_min_{0, 0, 0};
  CellCoord cell_max_{0, 0, 0};
};

} // namespace travmap
