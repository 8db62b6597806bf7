#include "travmap/knn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace travmap {

namespace {

std::uint64_t avalanche(std::uint64_t h) {
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdull;
  h ^= h >> 33;
  h *= 0xc4ceb9fe1a85ec53ull;
  h ^= h >> 33;
  return h;
}

std::uint64_t cell_key(std::int64_t x, std::int64_t y, std::int64_t z) {
  // each coordinate passes through a full avalanche before the next one is
  // folded in; combining raw products with xor lets sign flips cancel in pairs
  std::uint64_t h = avalanche(std::uint64_t(x) + 0x9e3779b97f4a7c15ull);
  h = avalanche(h ^ std::uint64_t(y));
  return avalanche(h ^ std::uint64_t(z));
}

} // namespace

PointGridIndex::PointGridIndex(std::span<const Vec3> points, double cell_size)
    : points_(points), cell_size_(cell_size), inv_cell_(1.0 / cell_size) {
  bucket_count_ = std::max<std::size_t>(8, points_.size() * 2);
  std::vector<std::uint32_t> counts(bucket_count_ + 1, 0);
  std::vector<std::uint64_t> keys(points_.size());
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const CellCoord c = cell_of(points_[i]);
    if (i == 0) {
      cell_min_ = cell_max_ = c;
    } else {
      cell_min_ = {std::min(cell_min_.x, c.x), std::min(cell_min_.y, c.y),
                   std::min(cell_min_.z, c.z)};
      cell_max_ = {std::max(cell_max_.x, c.x), std::max(cell_max_.y, c.y),
                   std::max(cell_max_.z, c.z)};
    }
    keys[i] = cell_key(c.x, c.y, c.z);
    counts[keys[i] % bucket_count_ + 1]++;
  }
  for (std::size_t b = 0; b < bucket_count_; ++b) counts[b + 1] += counts[b];
  bucket_start_ = counts;
  entries_.resize(points_.size());
  std::vector<std::uint32_t> cursor(bucket_start_.begin(), bucket_start_.end() - 1);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    entries_[cursor[keys[i] % bucket_count_]++] = {keys[i], std::uint32_t(i)};
  }
  // point indices within a bucket stay ascending, which keeps scans deterministic
  for (std::size_t b = 0; b < bucket_count_; ++b) {
    std::sort(entries_.begin() + bucket_start_[b], entries_.begin() + bucket_start_[b + 1]);
  }
}

PointGridIndex::CellCoord PointGridIndex::cell_of(const Vec3& p) const {
  return {std::int64_t(std::floor(p.x() * inv_cell_)), std::int64_t(std::floor(p.y() * inv_cell_)),
          std::int64_t(std::floor(p.z() * inv_cell_))};
}

void PointGridIndex::collect_cell(const CellCoord& c, const Vec3& q, double max_d2,
                                  std::vector<std::pair<double, int>>& cand) const {
  const std::uint64_t key = cell_key(c.x, c.y, c.z);
  const std::size_t b = key % bucket_count_;
  for (std::uint32_t e = bucket_start_[b]; e < bucket_start_[b + 1]; ++e) {
    if (entries_[e].first != key) continue;
    const int i = int(entries_[e].second);
    // a key collision could alias another cell's points onto this key, which
    // would collect them twice; the exact cell check keeps results sound no
    // matter what the hash does
    const CellCoord pc = cell_of(points_[std::size_t(i)]);
    if (pc.x != c.x || pc.y != c.y || pc.z != c.z) continue;
    const double d2 = (points_[std::size_t(i)] - q).squaredNorm();
    if (d2 <= max_d2) cand.emplace_back(d2, i);
  }
}

void PointGridIndex::knn(const Vec3& q, int k, std::ptrdiff_t exclude, double max_radius,
                         std::vector<int>& out) const {
  out.clear();
  if (k <= 0 || points_.empty()) return;

  const double hard_r2 =
      max_radius < 0 ? std::numeric_limits<double>::infinity() : max_radius * max_radius;
  const CellCoord qc = cell_of(q);
  std::vector<std::pair<double, int>> cand;

  // no occupied cell lies beyond this Chebyshev distance from the query cell,
  // so the sweep never needs to pass it no matter how small the cells are
  const std::int64_t last_ring =
      std::max({cell_max_.x - qc.x, qc.x - cell_min_.x, cell_max_.y - qc.y,
                qc.y - cell_min_.y, cell_max_.z - qc.z, qc.z - cell_min_.z,
                std::int64_t(0)});

  for (std::int64_t ring = 0; ring <= last_ring; ++ring) {
    // points in cells of this ring are at least (ring-1)*cell away from q
    const double ring_lo = ring == 0 ? 0.0 : double(ring - 1) * cell_size_;
    const bool have_k = int(cand.size()) >= k + (exclude >= 0 ? 1 : 0);
    if (have_k) {
      std::nth_element(cand.begin(), cand.begin() + k - 1 + (exclude >= 0 ? 1 : 0), cand.end());
      const double kth = cand[std::size_t(k - 1 + (exclude >= 0 ? 1 : 0))].first;
      if (kth <= ring_lo * ring_lo) break;
    }
    if (ring_lo * ring_lo > hard_r2) break;

    // visit only the part of the ring that overlaps occupied cells
    const std::int64_t x0 = std::max(qc.x - ring, cell_min_.x);
    const std::int64_t x1 = std::min(qc.x + ring, cell_max_.x);
    const std::int64_t y0 = std::max(qc.y - ring, cell_min_.y);
    const std::int64_t y1 = std::min(qc.y + ring, cell_max_.y);
    const std::int64_t z0 = std::max(qc.z - ring, cell_min_.z);
    const std::int64_t z1 = std::min(qc.z + ring, cell_max_.z);
    for (std::int64_t z = z0; z <= z1; ++z) {
      for (std::int64_t y = y0; y <= y1; ++y) {
        for (std::int64_t x = x0; x <= x1; ++x) {
          if (std::max({std::llabs(x - qc.x), std::llabs(y - qc.y), std::llabs(z - qc.z)}) !=
              ring) {
            continue;
          }
          collect_cell({x, y, z}, q, hard_r2, cand);
        }
      }
    }
    // every point sits in exactly one cell, so once all are collected the
    // ranking is final
    if (cand.size() >= points_.size()) break;
    if (max_radius >= 0 && double(ring) * cell_size_ > max_radius + cell_size_) break;
  }

  std::sort(cand.begin(), cand.end(),
            [](const auto& a, const auto& b) {
              return a.first != b.first ? a.first < b.first : a.second < b.second;
            });
  for (const auto& [d2, i] : cand) {
    if (exclude >= 0 && i == int(exclude)) continue;
    out.push_back(i);
    if (int(out.size()) == k) break;
  }
}

void PointGridIndex::radius_search(const Vec3& q, double radius, std::vector<int>& out) const {
  out.clear();
  if (radius <= 0 || points_.empty()) return;
  const double r2 = radius * radius;
  const CellCoord qlo = cell_of(q - Vec3::Constant(radius));
  const CellCoord qhi = cell_of(q + Vec3::Constant(radius));
  // clip the search box to cells that actually hold points
  const CellCoord lo{std::max(qlo.x, cell_min_.x), std::max(qlo.y, cell_min_.y),
                     std::max(qlo.z, cell_min_.z)};
  const CellCoord hi{std::min(qhi.x, cell_max_.x), std::min(qhi.y, cell_max_.y),
                     std::min(qhi.z, cell_max_.z)};
  std::vector<std::pair<double, int>> cand;
  for (std::int64_t z = lo.z; z <= hi.z; ++z)
    for (std::int64_t y = lo.y; y <= hi.y; ++y)
      for (std::int64_t x = lo.x; x <= hi.x; ++x) collect_cell({x, y, z}, q, r2, cand);
  std::sort(cand.begin(), cand.end(),
            [](const auto& a, const auto& b) {
              return a.first != b.first ? a.first < b.first : a.second < b.second;
            });
  out.reserve(cand.size());
  for (const auto& [d2, i] : cand) out.push_back(i);
}

} // namespace travmap
