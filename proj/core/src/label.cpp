#include "travmap/label.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <Eigen/Cholesky>

#include "travmap/errors.hpp"
#include "travmap/parallel.hpp"

namespace travmap {

namespace {

constexpr double kPathSampleSpacing = 0.1;  // meters between stamped poses

long clamp_cell(double coord, double lo, double cell, int n) {
  const double f = std::floor((coord - lo) / cell);
  if (f < 0.0) return 0;
  if (f >= double(n)) return n - 1;
  return long(f);
}

void stamp_footprint(const Pose& pose, const VoxelGridSpec& grid, const FootprintSpec& fp,
                     const FeatureGrid& feature_grid, std::vector<std::uint8_t>& hit) {
  const double yaw = pose_yaw(pose);
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double half_len = fp.length / 2.0, half_wid = fp.width / 2.0;
  const double x = pose.translation.x();
  const double y = pose.translation.y();
  const double z = pose.translation.z();

  // candidate window (one cell of slack; membership decided per center below)
  const double r_xy = std::hypot(half_len, half_wid) + grid.voxel_size.head<2>().maxCoeff();
  const double r_z = fp.z_band + grid.voxel_size.z();
  const long i0 = clamp_cell(x - r_xy, grid.min_corner.x(), grid.voxel_size.x(), grid.dims[0]);
  const long i1 = clamp_cell(x + r_xy, grid.min_corner.x(), grid.voxel_size.x(), grid.dims[0]);
  const long j0 = clamp_cell(y - r_xy, grid.min_corner.y(), grid.voxel_size.y(), grid.dims[1]);
  const long j1 = clamp_cell(y + r_xy, grid.min_corner.y(), grid.voxel_size.y(), grid.dims[1]);
  const long k0 = clamp_cell(z - r_z, grid.min_corner.z(), grid.voxel_size.z(), grid.dims[2]);
  const long k1 = clamp_cell(z + r_z, grid.min_corner.z(), grid.voxel_size.z(), grid.dims[2]);

  for (long k = k0; k <= k1; ++k) {
    for (long j = j0; j <= j1; ++j) {
      for (long i = i0; i <= i1; ++i) {
        const Index3 idx{int(i), int(j), int(k)};
        const std::uint32_t linear = grid.linear_index(idx);
        if (hit[linear] || !feature_grid.occupied(linear)) continue;
        const Vec3 center = grid.voxel_center(idx);
        if (center.z() < z - fp.z_band || center.z() > z + fp.z_band) continue;
        const double dx = center.x() - x, dy = center.y() - y;
        const double u = cy * dx + sy * dy;   // along heading
        const double v = -sy * dx + cy * dy;  // across heading
        if (std::abs(u) <= half_len && std::abs(v) <= half_wid) hit[linear] = 1;
      }
    }
  }
}

}  // namespace

std::vector<std::uint32_t> trajectory_voxels(const Trajectory& traj,
                                             const VoxelGridSpec& grid,
                                             const FootprintSpec& fp,
                                             const FeatureGrid& feature_grid) {
  if (!(fp.length > 0.0) || !(fp.width > 0.0) || !(fp.z_band > 0.0)) {
    throw ConfigError("footprint dimensions must be positive");
  }
  if (!(grid == feature_grid.spec)) throw GridSpecMismatch();

  std::vector<std::uint8_t> hit(grid.voxel_count(), 0);
  const auto& samples = traj.samples();
  stamp_footprint(samples.front(), grid, fp, feature_grid, hit);
  for (std::size_t s = 1; s < samples.size(); ++s) {
    const Pose& a = samples[s - 1];
    const Pose& b = samples[s];
    const double dist = (b.translation - a.translation).norm();
    const long subdiv = std::max(1L, long(std::ceil(dist / kPathSampleSpacing)));
    for (long q = 1; q <= subdiv; ++q) {
      const double t = a.t + (b.t - a.t) * (double(q) / double(subdiv));
      stamp_footprint(interpolate_pose(traj, t), grid, fp, feature_grid, hit);
    }
  }

  std::vector<std::uint32_t> out;
  for (std::size_t v = 0; v < hit.size(); ++v) {
    if (hit[v]) out.push_back(std::uint32_t(v));
  }
  if (out.empty()) throw EmptyTrajectoryOverlap();
  return out;
}

ReferenceModel fit_reference(const FeatureGrid& feature_grid,
                             const std::vector<std::uint32_t>& traj_voxels,
                             double lambda) {
  if (traj_voxels.size() < 4) throw TooFewTrajectoryVoxels(traj_voxels.size());
  if (!(lambda > 0.0)) throw ConfigError("covariance regularization lambda must be > 0");

  ReferenceModel model;
  model.lambda = lambda;
  model.sample_count = traj_voxels.size();

  Vec3 sum = Vec3::Zero();
  for (const std::uint32_t v : traj_voxels) sum += feature_grid.means[v];
  model.mu = sum / double(traj_voxels.size());

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const std::uint32_t v : traj_voxels) {
    const Vec3 d = feature_grid.means[v] - model.mu;
    cov += d * d.transpose();
  }
  cov /= double(traj_voxels.size() - 1);  // unbiased
  model.sigma = cov + lambda * Eigen::Matrix3d::Identity();
  return model;
}

double mahalanobis_sq(const Vec3& f, const ReferenceModel& model) {
  const Eigen::LLT<Eigen::Matrix3d> llt(model.sigma);
  if (llt.info() != Eigen::Success) throw SingularCovariance();
  const Vec3 d = f - model.mu;
  const double d2 = d.dot(llt.solve(d));
  return std::max(d2, 0.0);
}

namespace {

// Regularized lower incomplete gamma P(a, x): series expansion below a+1,
// complement of the Lentz continued fraction above.
double gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  const double log_prefactor = -x + a * std::log(x) - std::lgamma(a);
  if (x < a + 1.0) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 1000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(log_prefactor);
  }
  double b = x + 1.0 - a;
  double c = 1e300;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -double(i) * (double(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return 1.0 - std::exp(log_prefactor) * h;
}

}  // namespace

double chi2_threshold(int dof, double alpha) {
  if (dof < 1) throw Error("chi-squared threshold needs dof >= 1");
  if (!(alpha > 0.0) || !(alpha < 1.0)) throw Error("alpha must lie in (0, 1)");
  const double a = double(dof) / 2.0;
  const double target = 1.0 - alpha;

  double lo = 0.0;
  double hi = std::max(double(dof), 1.0);
  while (gamma_p(a, hi / 2.0) < target) {
    hi *= 2.0;
    if (hi > 1e12) break;
  }
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (gamma_p(a, mid / 2.0) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

LabelGrid label_grid(const FeatureGrid& feature_grid,
                     const std::vector<std::uint32_t>& traj_voxels,
                     const ReferenceModel& model, double threshold, int threads) {
  if (!(threshold > 0.0)) throw Error("labeling threshold must be > 0");

  LabelGrid out(feature_grid.spec);
  std::vector<std::uint8_t> driven(feature_grid.spec.voxel_count(), 0);
  for (const std::uint32_t v : traj_voxels) {
    if (v >= driven.size()) throw Error("trajectory voxel index out of range");
    driven[v] = 1;
  }

  // pre-factor the covariance once; the per-voxel solve matches mahalanobis_sq
  const Eigen::LLT<Eigen::Matrix3d> llt(model.sigma);
  if (llt.info() != Eigen::Success) throw SingularCovariance();

  parallel_for(feature_grid.spec.voxel_count(), threads,
               [&](std::size_t begin, std::size_t end) {
                 for (std::size_t v = begin; v < end; ++v) {
                   if (feature_grid.counts[v] == 0) continue;  // stays Unoccupied
                   if (driven[v]) {
                     out.labels[v] = TravLabel::Traversable;
                     continue;
                   }
                   const Vec3 d = feature_grid.means[v] - model.mu;
                   const double d2 = std::max(d.dot(llt.solve(d)), 0.0);
                   out.labels[v] = d2 <= threshold ? TravLabel::PotentiallyTraversable
                                                   : TravLabel::NonTraversable;
                 }
               });
  return out;
}

void write_label_grid(const std::string& path, const LabelGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("failed to open '" + path + "' for writing");
  out << "STNL v1\n";
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "grid %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %d %d %d\n",
                grid.spec.min_corner.x(), grid.spec.min_corner.y(), grid.spec.min_corner.z(),
                grid.spec.max_corner.x(), grid.spec.max_corner.y(), grid.spec.max_corner.z(),
                grid.spec.voxel_size.x(), grid.spec.voxel_size.y(), grid.spec.voxel_size.z(),
                grid.spec.dims[0], grid.spec.dims[1], grid.spec.dims[2]);
  out << buf;
  for (std::size_t v = 0; v < grid.labels.size(); ++v) {
    if (grid.labels[v] == TravLabel::Unoccupied) continue;
    const Index3 idx = grid.spec.from_linear(std::uint32_t(v));
    std::snprintf(buf, sizeof(buf), "%d %d %d %c\n", idx[0], idx[1], idx[2],
                  label_char(grid.labels[v]));
    out << buf;
  }
  if (!out) throw Error("failed while writing '" + path + "'");
}

LabelGrid read_label_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInput(path);
  std::string line;
  if (!std::getline(in, line)) throw MalformedFile(path, 1, "empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "STNL v1") throw MalformedFile(path, 1, "expected 'STNL v1' header");

  if (!std::getline(in, line)) throw MalformedFile(path, 2, "missing grid line");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::istringstream grid_line(line);
  std::string tag;
  Vec3 mn, mx, voxel;
  Index3 dims{};
  grid_line >> tag >> mn.x() >> mn.y() >> mn.z() >> mx.x() >> mx.y() >> mx.z() >>
      voxel.x() >> voxel.y() >> voxel.z() >> dims[0] >> dims[1] >> dims[2];
  if (!grid_line || tag != "grid") throw MalformedFile(path, 2, "malformed grid line");

  VoxelGridSpec spec(mn, mx, voxel);
  if (spec.dims != dims) throw MalformedFile(path, 2, "grid dims inconsistent with extent");

  LabelGrid grid(spec);
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    long i, j, k;
    std::string label_token;
    row >> i >> j >> k >> label_token;
    if (!row || label_token.size() != 1) {
      throw MalformedFile(path, line_no, "expected 'ix iy iz label'");
    }
    if (i < 0 || i >= dims[0] || j < 0 || j >= dims[1] || k < 0 || k >= dims[2]) {
      throw MalformedFile(path, line_no, "voxel index out of range");
    }
    TravLabel label;
    switch (label_token[0]) {
      case 'T': label = TravLabel::Traversable; break;
      case 'P': label = TravLabel::PotentiallyTraversable; break;
      case 'N': label = TravLabel::NonTraversable; break;
      default:
        throw MalformedFile(path, line_no, "unknown label '" + label_token + "'");
    }
    const std::uint32_t linear = spec.linear_index({int(i), int(j), int(k)});
    if (grid.labels[linear] != TravLabel::Unoccupied) {
      throw MalformedFile(path, line_no, "duplicate voxel entry");
    }
    grid.labels[linear] = label;
  }
  return grid;
}

}  // namespace travmap
