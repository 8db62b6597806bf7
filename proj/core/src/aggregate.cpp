#include "travmap/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <unordered_map>

#include <Eigen/Eigenvalues>

#include "travmap/errors.hpp"
#include "travmap/knn.hpp"
#include "travmap/parallel.hpp"

namespace travmap {

namespace {

struct LeafKey {
  std::int64_t x, y, z;
  bool operator==(const LeafKey&) const = default;
};

struct LeafKeyHash {
  std::size_t operator()(const LeafKey& k) const {
    std::uint64_t h = 1469598103934665603ull;
    for (std::int64_t v : {k.x, k.y, k.z}) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

LeafKey leaf_of(const Vec3& p, double leaf) {
  return {static_cast<std::int64_t>(std::floor(p.x() / leaf)),
          static_cast<std::int64_t>(std::floor(p.y() / leaf)),
          static_cast<std::int64_t>(std::floor(p.z() / leaf))};
}

}  // namespace

GlobalCloud accumulate(std::span<const ScanFrame> scans, const Trajectory& traj,
                       int window, int threads, std::size_t* skipped) {
  if (window < 1) throw Error("aggregation window must be >= 1");
  const std::size_t take = std::min<std::size_t>(scans.size(), std::size_t(window));

  struct Retained {
    const ScanFrame* scan;
    Pose pose;
    std::size_t offset;
  };
  std::vector<Retained> retained;
  std::size_t skip_count = 0;
  std::size_t total = 0;
  for (std::size_t s = 0; s < take; ++s) {
    if (!traj.contains(scans[s].t)) {
      ++skip_count;
      continue;
    }
    retained.push_back({&scans[s], interpolate_pose(traj, scans[s].t), total});
    total += scans[s].points.size();
  }
  if (skipped) *skipped = skip_count;
  if (retained.empty()) throw NoUsableScans();

  GlobalCloud cloud;
  cloud.points.resize(total);
  cloud.viewpoints.resize(total);
  parallel_for(retained.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      const Retained& r = retained[s];
      const Vec3 origin = r.pose.translation;
      for (std::size_t i = 0; i < r.scan->points.size(); ++i) {
        cloud.points[r.offset + i] = transform_point(r.pose, r.scan->points[i]);
        cloud.viewpoints[r.offset + i] = origin;
      }
    }
  });
  return cloud;
}

GlobalCloud voxel_downsample(const GlobalCloud& cloud, double leaf) {
  if (!(leaf > 0.0)) throw Error("downsample leaf must be > 0");

  struct Group {
    Vec3 sum = Vec3::Zero();
    std::size_t count = 0;
    Vec3 centroid = Vec3::Zero();
    double best_d2 = std::numeric_limits<double>::infinity();
    std::size_t best_index = 0;
  };
  std::unordered_map<LeafKey, std::size_t, LeafKeyHash> cell_group;
  cell_group.reserve(cloud.points.size());
  std::vector<Group> groups;  // in first-appearance order
  std::vector<std::uint32_t> group_of(cloud.points.size());

  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const auto [it, inserted] = cell_group.try_emplace(leaf_of(cloud.points[i], leaf),
                                                       groups.size());
    if (inserted) groups.emplace_back();
    Group& g = groups[it->second];
    g.sum += cloud.points[i];
    ++g.count;
    group_of[i] = std::uint32_t(it->second);
  }
  for (Group& g : groups) g.centroid = g.sum / double(g.count);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    Group& g = groups[group_of[i]];
    const double d2 = (cloud.points[i] - g.centroid).squaredNorm();
    if (d2 < g.best_d2) {  // strict: first (lowest-index) member wins ties
      g.best_d2 = d2;
      g.best_index = i;
    }
  }

  GlobalCloud out;
  out.points.reserve(groups.size());
  out.viewpoints.reserve(groups.size());
  const bool has_vp = cloud.viewpoints.size() == cloud.points.size();
  for (const Group& g : groups) {
    out.points.push_back(g.centroid);
    out.viewpoints.push_back(has_vp ? cloud.viewpoints[g.best_index] : Vec3::Zero());
  }
  return out;
}

GlobalCloud estimate_normals(const GlobalCloud& cloud, int k, int threads,
                             std::size_t* degenerate, double index_cell) {
  if (k < 3 || cloud.points.size() < std::size_t(k) + 1) {
    throw TooFewPoints("normal estimation needs k >= 3 and at least k+1 points");
  }
  if (cloud.viewpoints.size() != cloud.points.size()) {
    throw Error("cloud lacks per-point viewpoints");
  }

  double cell = index_cell;
  if (cell <= 0.0) {
    // density heuristic: a cell should hold a handful of points at the
    // cloud's typical horizontal spacing
    Vec3 lo = cloud.points[0], hi = cloud.points[0];
    for (const Vec3& p : cloud.points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    // sort extents so collapsed axes (a line or an axis-aligned plane of
    // points) don't zero out the density estimate
    double e[3] = {hi.x() - lo.x(), hi.y() - lo.y(), hi.z() - lo.z()};
    std::sort(e, e + 3, std::greater<>());
    const double npts = double(cloud.points.size());
    if (e[0] <= 1e-9) {
      cell = 1e-3;  // coincident cloud; any cell works
    } else if (e[1] <= 1e-9 * e[0]) {
      cell = 2.0 * e[0] / npts;  // collinear cloud: match linear spacing
    } else {
      cell = 2.0 * std::sqrt(e[0] * e[1] / npts);  // surface-like cloud
    }
    cell = std::max(cell, 1e-6);
  }

  GlobalCloud out;
  out.points = cloud.points;
  out.viewpoints = cloud.viewpoints;
  out.normals.resize(cloud.points.size());

  const PointGridIndex index(cloud.points, cell);
  const std::size_t chunks = parallel_chunk_count(cloud.points.size());
  std::vector<std::size_t> degenerate_per_chunk(chunks, 0);

  parallel_for(cloud.points.size(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<int> nn;
    const std::size_t chunk = begin / kParallelChunk;
    for (std::size_t i = begin; i < end; ++i) {
      const Vec3& p = cloud.points[i];
      index.knn(p, k, std::ptrdiff_t(i), -1.0, nn);

      Vec3 mean = p;
      for (int j : nn) mean += cloud.points[std::size_t(j)];
      mean /= double(nn.size() + 1);
      Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
      {
        const Vec3 d = p - mean;
        cov += d * d.transpose();
      }
      for (int j : nn) {
        const Vec3 d = cloud.points[std::size_t(j)] - mean;
        cov += d * d.transpose();
      }
      cov /= double(nn.size() + 1);

      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
      Vec3 n;
      if (eig.info() != Eigen::Success || eig.eigenvalues()[1] <= 1e-12) {
        n = Vec3(0, 0, 1);  // collinear or failed neighborhood
        ++degenerate_per_chunk[chunk];
      } else {
        n = eig.eigenvectors().col(0).normalized();
      }
      if (n.dot(cloud.viewpoints[i] - p) < 0.0) n = -n;
      out.normals[i] = n;
    }
  });

  if (degenerate) {
    std::size_t total = 0;
    for (std::size_t c : degenerate_per_chunk) total += c;
    *degenerate = total;
  }
  return out;
}

}  // namespace travmap
