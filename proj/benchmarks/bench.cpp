// Microbenchmarks for the heavy pipeline stages, run on a procedurally
// generated undulating ground patch so results are reproducible.

#include <benchmark/benchmark.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "travmap/aggregate.hpp"
#include "travmap/features.hpp"
#include "travmap/geometry.hpp"
#include "travmap/label.hpp"
#include "travmap/surface.hpp"
#include "travmap/synth.hpp"

namespace {

using namespace travmap;

GlobalCloud make_ground_cloud(double half_extent, double step) {
  GlobalCloud cloud;
  for (double x = -half_extent; x <= half_extent; x += step) {
    for (double y = -half_extent; y <= half_extent; y += step) {
      const double z = 0.05 * std::sin(1.3 * x) * std::sin(0.9 * y);
      cloud.points.emplace_back(x, y, z);
      cloud.viewpoints.emplace_back(0.0, 0.0, 1.5);
    }
  }
  return cloud;
}

const GlobalCloud& dense_cloud() {
  static const GlobalCloud cloud = make_ground_cloud(4.0, 0.02);  // ~160k points
  return cloud;
}

const GlobalCloud& surface_cloud() {
  static const GlobalCloud cloud = [] {
    GlobalCloud c = voxel_downsample(make_ground_cloud(4.0, 0.04), 0.05);
    return estimate_normals(c, 16);
  }();
  return cloud;
}

void BM_VoxelDownsample(benchmark::State& state) {
  for (auto _ : state) {
    GlobalCloud out = voxel_downsample(dense_cloud(), 0.05);
    benchmark::DoNotOptimize(out.points.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(dense_cloud().size()));
}
BENCHMARK(BM_VoxelDownsample)->Unit(benchmark::kMillisecond);

void BM_EstimateNormals(benchmark::State& state) {
  const GlobalCloud base = voxel_downsample(dense_cloud(), 0.05);
  for (auto _ : state) {
    GlobalCloud out = estimate_normals(base, 16, int(state.range(0)));
    benchmark::DoNotOptimize(out.normals.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(base.size()));
}
BENCHMARK(BM_EstimateNormals)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

void BM_Reconstruct(benchmark::State& state) {
  ReconstructionParams params;
  for (auto _ : state) {
    TriMesh mesh = reconstruct(surface_cloud(), params, int(state.range(0)));
    benchmark::DoNotOptimize(mesh.vertices.data());
  }
}
BENCHMARK(BM_Reconstruct)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

void BM_VertexFeatures(benchmark::State& state) {
  static const TriMesh mesh = [] {
    ReconstructionParams params;
    return vertex_normals(reconstruct(surface_cloud(), params));
  }();
  for (auto _ : state) {
    auto feats = vertex_features(mesh, kDefaultFeatureNeighbors, int(state.range(0)));
    benchmark::DoNotOptimize(feats.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(mesh.vertices.size()));
}
BENCHMARK(BM_VertexFeatures)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

void BM_LabelGrid(benchmark::State& state) {
  const VoxelGridSpec spec(Vec3(-6.4, -6.4, -1.6), Vec3(6.4, 6.4, 1.6), Vec3::Constant(0.2));
  FeatureGrid grid(spec);
  for (int j = 0; j < spec.dims[1]; ++j) {
    for (int i = 0; i < spec.dims[0]; ++i) {
      const Index3 idx = {i, j, spec.dims[2] / 2};
      const std::uint32_t lin = spec.linear_index(idx);
      grid.counts[lin] = 4;
      grid.means[lin] = Vec3(0.01 * i, 0.002 * j, -18.0 + 0.001 * (i + j));
    }
  }
  std::vector<std::uint32_t> driven;
  for (int i = 0; i < spec.dims[0]; ++i)
    driven.push_back(spec.linear_index({i, spec.dims[1] / 2, spec.dims[2] / 2}));
  const ReferenceModel model = fit_reference(grid, driven);
  const double threshold = chi2_threshold(3, kDefaultAlpha);
  for (auto _ : state) {
    LabelGrid labels = label_grid(grid, driven, model, threshold);
    benchmark::DoNotOptimize(labels.labels.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(spec.voxel_count()));
}
BENCHMARK(BM_LabelGrid)->Unit(benchmark::kMillisecond);

void BM_VirtualScan(benchmark::State& state) {
  TerrainSpec terrain;
  TerrainRegion region;
  region.kind = RegionKind::Flat;
  region.x0 = -30;
  region.y0 = -30;
  region.x1 = 30;
  region.y1 = 30;
  terrain.regions.push_back(region);
  const Pose pose(0.0, Vec3(0, 0, 1.0), Quat::Identity());
  const LidarModel lidar;
  for (auto _ : state) {
    ScanFrame frame = virtual_scan(terrain, pose, lidar, 7, int(state.range(0)));
    benchmark::DoNotOptimize(frame.points.data());
  }
}
BENCHMARK(BM_VirtualScan)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
