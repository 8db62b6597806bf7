#include <doctest.h>

#include <Eigen/Cholesky>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "test_util.hpp"
#include "travmap/errors.hpp"
#include "travmap/label.hpp"

using namespace travmap;

namespace {

// feature grid with every voxel of the z=0.1 slab occupied
FeatureGrid slab_grid(const VoxelGridSpec& spec, int k_slab, const Vec3& base_mean) {
  FeatureGrid grid(spec);
  for (int j = 0; j < spec.dims[1]; ++j) {
    for (int i = 0; i < spec.dims[0]; ++i) {
      const std::uint32_t lin = spec.linear_index({i, j, k_slab});
      grid.counts[lin] = 3;
      grid.means[lin] = base_mean + Vec3(1e-4 * i, 1e-5 * j, 1e-4 * (i + j));
    }
  }
  return grid;
}

Trajectory straight_path(double x0, double x1, double y, double z, double step) {
  std::vector<Pose> poses;
  double t = 0.0;
  for (double x = x0; x <= x1 + 1e-12; x += step, t += 0.1) {
    poses.emplace_back(t, Vec3(x, y, z), Quat::Identity());
  }
  return Trajectory(poses);
}

}  // namespace

TEST_CASE("trajectory_voxels stamps a 4-voxel-wide corridor on a straight path") {
  // grid with 0.2 m voxels; footprint 1.0 x 0.8 m; straight path along x at
  // y=0, z at the slab height
  const VoxelGridSpec spec(Vec3(-4.0, -2.0, -0.4), Vec3(4.0, 2.0, 0.4),
                           Vec3::Constant(0.2));
  const int k_slab = 2;  // z in [0, 0.2), centers 0.1
  const FeatureGrid grid = slab_grid(spec, k_slab, Vec3(0.1, 0.0, -18.0));
  const Trajectory traj = straight_path(-2.0, 2.0, 0.0, 0.1, 0.25);

  const auto voxels = trajectory_voxels(traj, spec, FootprintSpec{}, grid);
  REQUIRE(!voxels.empty());
  CHECK(std::is_sorted(voxels.begin(), voxels.end()));

  // oracle: stamp rectangles [x-0.5, x+0.5] x [-0.4, 0.4] at every sampled x;
  // the union is [-2.5, 2.5] x [-0.4, 0.4]; voxel centers inside it (inclusive)
  std::set<std::uint32_t> want;
  for (int j = 0; j < spec.dims[1]; ++j) {
    for (int i = 0; i < spec.dims[0]; ++i) {
      const Vec3 c = spec.voxel_center({i, j, k_slab});
      if (c.x() >= -2.5 && c.x() <= 2.5 && std::abs(c.y()) <= 0.4) {
        want.insert(spec.linear_index({i, j, k_slab}));
      }
    }
  }
  CHECK(std::set<std::uint32_t>(voxels.begin(), voxels.end()) == want);

  // the corridor is exactly 4 voxels wide: |center_y| <= 0.4 holds for
  // centers -0.3, -0.1, 0.1, 0.3
  std::set<int> ys;
  for (const std::uint32_t lin : voxels) ys.insert(spec.from_linear(lin)[1]);
  CHECK(ys.size() == 4);
}

TEST_CASE("trajectory_voxels honors yaw when stamping the rectangle") {
  const VoxelGridSpec spec(Vec3(-2.0, -2.0, 0.0), Vec3(2.0, 2.0, 0.2),
                           Vec3::Constant(0.2));
  FeatureGrid grid(spec);
  for (std::uint32_t lin = 0; lin < spec.voxel_count(); ++lin) {
    grid.counts[lin] = 1;
    grid.means[lin] = Vec3(0.1, 0, -18);
  }
  // single pose, rotated 90 degrees: length runs along y, width along x
  std::vector<Pose> one;
  one.emplace_back(0.0, Vec3(0, 0, 0.1), Quat(Eigen::AngleAxisd(kPi / 2, Vec3::UnitZ())));
  const Trajectory traj(one);
  FootprintSpec fp;
  fp.length = 1.2;
  fp.width = 0.4;
  const auto voxels = trajectory_voxels(traj, spec, fp, grid);
  for (const std::uint32_t lin : voxels) {
    const Vec3 c = spec.voxel_center(spec.from_linear(lin));
    CHECK(std::abs(c.y()) <= 0.6 + 1e-12);  // half-length along y
    CHECK(std::abs(c.x()) <= 0.2 + 1e-12);  // half-width along x
  }
  CHECK(voxels.size() == 6 * 2);  // centers y in {-0.5..0.5} x in {-0.1, 0.1} (z slab 1 deep)
}

TEST_CASE("trajectory_voxels applies the vertical band inclusively") {
  // binary-exact extents so the band boundaries land exactly on voxel centers
  const VoxelGridSpec spec(Vec3(0, 0, 0), Vec3(0.25, 0.25, 1.25), Vec3::Constant(0.25));
  FeatureGrid grid(spec);
  for (std::uint32_t lin = 0; lin < spec.voxel_count(); ++lin) {
    grid.counts[lin] = 1;
    grid.means[lin] = Vec3::Zero();
  }
  std::vector<Pose> one;
  one.emplace_back(0.0, Vec3(0.125, 0.125, 0.5), Quat::Identity());
  FootprintSpec fp;
  fp.z_band = 0.375;
  // centers: 0.125, 0.375, 0.625, 0.875, 1.125; band is exactly [0.125, 0.875]
  // and both boundary centers must be included
  const auto voxels = trajectory_voxels(Trajectory(one), spec, fp, grid);
  std::set<int> ks;
  for (const std::uint32_t lin : voxels) ks.insert(spec.from_linear(lin)[2]);
  CHECK(ks == std::set<int>{0, 1, 2, 3});
}

TEST_CASE("trajectory_voxels only returns occupied voxels and can come up empty") {
  const VoxelGridSpec spec(Vec3(-1, -1, -1), Vec3(1, 1, 1), Vec3::Constant(0.2));
  const FeatureGrid empty_grid(spec);
  const Trajectory traj = straight_path(-0.5, 0.5, 0.0, 0.0, 0.1);
  CHECK_THROWS_AS(trajectory_voxels(traj, spec, FootprintSpec{}, empty_grid),
                  EmptyTrajectoryOverlap);

  // trajectory fully outside the grid
  const FeatureGrid grid = slab_grid(spec, 5, Vec3::Zero());
  const Trajectory outside = straight_path(30.0, 31.0, 0.0, 0.0, 0.1);
  CHECK_THROWS_AS(trajectory_voxels(outside, spec, FootprintSpec{}, grid),
                  EmptyTrajectoryOverlap);
}

TEST_CASE("trajectory_voxels validates spec agreement and footprint positivity") {
  const VoxelGridSpec a(Vec3(-1, -1, -1), Vec3(1, 1, 1), Vec3::Constant(0.2));
  const VoxelGridSpec b(Vec3(-1, -1, -1), Vec3(1, 1, 1), Vec3::Constant(0.25));
  const FeatureGrid grid(b);
  const Trajectory traj = straight_path(-0.5, 0.5, 0.0, 0.0, 0.1);
  CHECK_THROWS_AS(trajectory_voxels(traj, a, FootprintSpec{}, grid), GridSpecMismatch);

  const FeatureGrid ok(a);
  FootprintSpec bad;
  bad.length = -1.0;
  CHECK_THROWS_AS(trajectory_voxels(traj, a, bad, ok), ConfigError);
}

TEST_CASE("fit_reference reproduces a hand-computed mean and covariance") {
  const VoxelGridSpec spec(Vec3(0, 0, 0), Vec3(0.8, 0.2, 0.2), Vec3::Constant(0.2));
  FeatureGrid grid(spec);
  // four voxels with simple feature vectors
  const Vec3 f0(1, 0, 0), f1(3, 0, 0), f2(1, 2, 2), f3(3, 2, -2);
  const std::vector<Vec3> fs = {f0, f1, f2, f3};
  for (int i = 0; i < 4; ++i) {
    grid.counts[std::size_t(i)] = 1;
    grid.means[std::size_t(i)] = fs[std::size_t(i)];
  }
  const std::vector<std::uint32_t> idx = {0, 1, 2, 3};
  const double lambda = 1e-6;
  const ReferenceModel model = fit_reference(grid, idx, lambda);

  const Vec3 mu(2, 1, 0);
  CHECK((model.mu - mu).norm() < 1e-15);
  // unbiased covariance by hand: sum of outer products / 3 + lambda I
  Eigen::Matrix3d want = Eigen::Matrix3d::Zero();
  for (const Vec3& f : fs) {
    const Vec3 d = f - mu;
    want += d * d.transpose();
  }
  want /= 3.0;
  want += lambda * Eigen::Matrix3d::Identity();
  CHECK((model.sigma - want).norm() < 1e-14);
  CHECK(model.sample_count == 4);
  CHECK(model.lambda == lambda);
}

TEST_CASE("fit_reference needs at least four voxels and a positive lambda") {
  const VoxelGridSpec spec(Vec3(0, 0, 0), Vec3(0.8, 0.2, 0.2), Vec3::Constant(0.2));
  FeatureGrid grid(spec);
  for (int i = 0; i < 4; ++i) {
    grid.counts[std::size_t(i)] = 1;
    grid.means[std::size_t(i)] = Vec3(i, 0, 0);
  }
  CHECK_THROWS_AS(fit_reference(grid, {0, 1, 2}, 1e-6), TooFewTrajectoryVoxels);
  CHECK_THROWS_AS(fit_reference(grid, {0, 1, 2, 3}, 0.0), ConfigError);
  CHECK_NOTHROW(fit_reference(grid, {0, 1, 2, 3}, 1e-6));
}

TEST_CASE("mahalanobis_sq equals the explicit-inverse quadratic form") {
  std::uint64_t s = 2024;
  for (int trial = 0; trial < 1000; ++trial) {
    // random SPD covariance: A A^T + small ridge
    Eigen::Matrix3d A;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) A(r, c) = 2.0 * testutil::uniform01(s) - 1.0;
    ReferenceModel model;
    model.sigma = A * A.transpose() + 0.05 * Eigen::Matrix3d::Identity();
    model.mu = Vec3(testutil::uniform01(s), testutil::uniform01(s), testutil::uniform01(s));
    const Vec3 f(4.0 * testutil::uniform01(s) - 2.0, 4.0 * testutil::uniform01(s) - 2.0,
                 4.0 * testutil::uniform01(s) - 2.0);

    const double got = mahalanobis_sq(f, model);
    const Vec3 d = f - model.mu;
    const double want = d.dot(model.sigma.inverse() * d);
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
    CHECK(got >= 0.0);
  }
}

TEST_CASE("mahalanobis_sq rejects non-positive-definite covariances") {
  ReferenceModel model;
  model.sigma << 1, 0, 0, 0, -1, 0, 0, 0, 1;
  CHECK_THROWS_AS(mahalanobis_sq(Vec3(1, 1, 1), model), SingularCovariance);
}

TEST_CASE("mahalanobis_sq is invariant under affine feature maps") {
  // y = L x + b with model transformed accordingly leaves D^2 unchanged
  std::uint64_t s = 9;
  Eigen::Matrix3d L;
  L << 2, 0.5, 0, 0, 1.5, -0.3, 0, 0, 0.8;
  const Vec3 b(1, -2, 3);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::Matrix3d A;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) A(r, c) = 2.0 * testutil::uniform01(s) - 1.0;
    ReferenceModel m1;
    m1.sigma = A * A.transpose() + 0.1 * Eigen::Matrix3d::Identity();
    m1.mu = Vec3(testutil::uniform01(s), testutil::uniform01(s), testutil::uniform01(s));
    const Vec3 f(testutil::uniform01(s), testutil::uniform01(s), testutil::uniform01(s));

    ReferenceModel m2;
    m2.mu = L * m1.mu + b;
    m2.sigma = L * m1.sigma * L.transpose();
    CHECK(mahalanobis_sq(L * f + b, m2) ==
          doctest::Approx(mahalanobis_sq(f, m1)).epsilon(1e-8));
  }
}

TEST_CASE("chi2_threshold matches published quantiles") {
  CHECK(chi2_threshold(3, 0.05) == doctest::Approx(7.814727903251179).epsilon(1e-9));
  CHECK(chi2_threshold(2, 0.05) == doctest::Approx(5.991464547107979).epsilon(1e-9));
  CHECK(chi2_threshold(1, 0.05) == doctest::Approx(3.841458820694124).epsilon(1e-9));
  CHECK(chi2_threshold(5, 0.01) == doctest::Approx(15.08627246938899).epsilon(1e-9));
}

TEST_CASE("chi2_threshold has the analytic closed form for two dof") {
  // for 2 dof the cdf is 1 - exp(-x/2): quantile(1 - alpha) = -2 ln(alpha)
  CHECK(chi2_threshold(2, std::exp(-1.0)) == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(chi2_threshold(2, 0.5) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));
  // one dof at alpha = P(|Z| > 1) gives exactly 1
  CHECK(chi2_threshold(1, 0.31731050786291415) == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("chi2_threshold is monotone in alpha and dof") {
  CHECK(chi2_threshold(3, 0.01) > chi2_threshold(3, 0.05));
  CHECK(chi2_threshold(3, 0.05) > chi2_threshold(3, 0.5));
  CHECK(chi2_threshold(4, 0.05) > chi2_threshold(3, 0.05));
  CHECK_THROWS_AS(chi2_threshold(0, 0.05), Error);
  CHECK_THROWS_AS(chi2_threshold(3, 0.0), Error);
  CHECK_THROWS_AS(chi2_threshold(3, 1.0), Error);
}

TEST_CASE("label_grid partitions voxels into driven, accepted and rejected") {
  const VoxelGridSpec spec(Vec3(-1, -1, 0), Vec3(1, 1, 0.2), Vec3::Constant(0.2));
  FeatureGrid grid(spec);
  // half the voxels near the reference, half far away; some unoccupied
  std::uint64_t s = 4;
  for (std::uint32_t lin = 0; lin < spec.voxel_count(); ++lin) {
    if (lin % 7 == 3) continue;  // leave unoccupied
    grid.counts[lin] = 2;
    const bool far = lin % 2 == 1;
    grid.means[lin] = far ? Vec3(5.0 + testutil::uniform01(s), 3.0, 3.0)
                          : Vec3(0.01 * testutil::uniform01(s), 0.0, 0.0);
  }
  std::vector<std::uint32_t> driven;
  for (std::uint32_t lin = 0; lin < spec.voxel_count(); lin += 14) {
    if (grid.occupied(lin)) driven.push_back(lin);
  }
  REQUIRE(driven.size() >= 4);
  const ReferenceModel model = fit_reference(grid, driven, 1e-4);
  const double threshold = chi2_threshold(3, 0.05);
  const LabelGrid labels = label_grid(grid, driven, model, threshold);

  REQUIRE(labels.labels.size() == spec.voxel_count());
  for (std::uint32_t lin = 0; lin < spec.voxel_count(); ++lin) {
    const TravLabel l = labels.labels[lin];
    if (!grid.occupied(lin)) {
      CHECK(l == TravLabel::Unoccupied);
      continue;
    }
    if (std::binary_search(driven.begin(), driven.end(), lin)) {
      CHECK(l == TravLabel::Traversable);
      continue;
    }
    const double d2 = mahalanobis_sq(grid.means[lin], model);
    CHECK(l == (d2 <= threshold ? TravLabel::PotentiallyTraversable
                                : TravLabel::NonTraversable));
  }
}

TEST_CASE("label_grid includes the threshold boundary in the accepted class") {
  const VoxelGridSpec spec(Vec3(0, 0, 0), Vec3(1.0, 0.2, 0.2), Vec3::Constant(0.2));
  FeatureGrid grid(spec);
  ReferenceModel model;  // identity covariance, zero mean
  model.sample_count = 4;
  const double threshold = 4.0;
  // voxel 0..3 are "driven" context; voxel 4 sits exactly at D^2 = 4
  for (int i = 0; i < 5; ++i) grid.counts[std::size_t(i)] = 1;
  grid.means[4] = Vec3(2.0, 0.0, 0.0);  // D^2 = 4 exactly
  const std::vector<std::uint32_t> driven = {0, 1, 2, 3};
  const LabelGrid labels = label_grid(grid, driven, model, threshold);
  CHECK(labels.labels[4] == TravLabel::PotentiallyTraversable);
}

TEST_CASE("label_grid is thread-count invariant") {
  const VoxelGridSpec spec(Vec3(-2, -2, 0), Vec3(2, 2, 0.4), Vec3::Constant(0.2));
  FeatureGrid grid(spec);
  std::uint64_t s = 31;
  for (std::uint32_t lin = 0; lin < spec.voxel_count(); ++lin) {
    if (lin % 3 == 0) continue;
    grid.counts[lin] = 1;
    grid.means[lin] = Vec3(testutil::uniform01(s), testutil::uniform01(s),
                           4.0 * testutil::uniform01(s));
  }
  const std::vector<std::uint32_t> driven = {1, 2, 4, 5, 7, 8};
  const ReferenceModel model = fit_reference(grid, driven, 1e-3);
  const double threshold = chi2_threshold(3, 0.05);
  const LabelGrid a = label_grid(grid, driven, model, threshold, 1);
  const LabelGrid b = label_grid(grid, driven, model, threshold, 3);
  CHECK(a.labels == b.labels);
}

TEST_CASE("label grid file round-trips and validates") {
  testutil::TempDir dir("stnl");
  const VoxelGridSpec spec(Vec3(-0.6, -0.4, 0), Vec3(0.6, 0.4, 0.4), Vec3::Constant(0.2));
  LabelGrid grid(spec);
  grid.labels[spec.linear_index({0, 0, 0})] = TravLabel::Traversable;
  grid.labels[spec.linear_index({1, 2, 0})] = TravLabel::PotentiallyTraversable;
  grid.labels[spec.linear_index({5, 3, 1})] = TravLabel::NonTraversable;

  const std::string p = dir.file("g.stnl");
  write_label_grid(p, grid);
  const LabelGrid back = read_label_grid(p);
  CHECK(back.spec == grid.spec);
  CHECK(back.labels == grid.labels);

  SUBCASE("header is the documented text format") {
    const std::string bytes = testutil::read_bytes(p);
    CHECK(bytes.rfind("STNL v1\n", 0) == 0);
    CHECK(bytes.find("grid ") != std::string::npos);
  }
  SUBCASE("duplicate rows are rejected") {
    std::string bytes = testutil::read_bytes(p);
    bytes += "0 0 0 T\n";
    testutil::write_text(p, bytes);
    CHECK_THROWS_AS(read_label_grid(p), MalformedFile);
  }
  SUBCASE("unknown labels are rejected") {
    std::string bytes = testutil::read_bytes(p);
    bytes += "2 2 1 X\n";
    testutil::write_text(p, bytes);
    CHECK_THROWS_AS(read_label_grid(p), MalformedFile);
  }
  SUBCASE("out-of-range indices are rejected") {
    std::string bytes = testutil::read_bytes(p);
    bytes += "99 0 0 T\n";
    testutil::write_text(p, bytes);
    CHECK_THROWS_AS(read_label_grid(p), MalformedFile);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_label_grid(dir.file("none.stnl")), MissingInput);
  }
}
