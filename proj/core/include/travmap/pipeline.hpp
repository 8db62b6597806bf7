#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "travmap/geometry.hpp"
#include "travmap/label.hpp"
#include "travmap/synth.hpp"

namespace travmap {

// Knobs of a full labeling run, loadable from a flat key=value file ('#'
// comments allowed, unknown keys rejected). Every numeric default matches the
// documented pipeline defaults; paths have no default.
struct PipelineConfig {
  // inputs and outputs
  std::string scan_index;  // csv listing `t,file`; scan paths resolve against its directory
  std::string trajectory;  // trajectory csv
  std::string output_dir;

  // label grid
  Vec3 grid_min = Vec3(-25.6, -25.6, -2.0);
  Vec3 grid_max = Vec3(25.6, 25.6, 4.4);
  double voxel_size = 0.2;

  // aggregation
  int window = 20;   // consecutive scans fused around the keyframe
  double leaf = 0.05;
  int normal_k = 16;

  // reconstruction
  double lattice = 0.1;
  double support = 0.3;
  int mls_neighbors = 8;
  std::string backend = "mls";

  // features and labeling
  int feature_k = 16;
  FootprintSpec footprint;
  double alpha = kDefaultAlpha;
  double lambda = kDefaultLambda;

  // run control
  int frame = -1;  // keyframe index into the scan list; -1 = middle scan
  bool ego = true; // grid the scene in the keyframe's yaw-aligned local frame
  int threads = 0; // 0 = hardware concurrency
  std::uint64_t seed = 0;

  static PipelineConfig from_file(const std::string& path);

  // The config as (key, value) pairs, round-trip exact; echoed into the run
  // manifest so a run can be reproduced from it.
  std::vector<std::pair<std::string, std::string>> key_values() const;

  VoxelGridSpec grid() const;
  void validate() const;  // throws ConfigError
};

struct StageTiming {
  std::string stage;
  double ms = 0.0;
};

struct PipelineResult {
  std::string labels_path;
  std::string features_path;
  std::string mesh_path;
  std::string manifest_path;
  std::size_t count_t = 0, count_p = 0, count_n = 0, count_u = 0;
  double threshold = 0.0;
  std::vector<StageTiming> timings;
};

// aggregate -> reconstruct -> features -> label for one keyframe; writes
// labels.stnl, features.stnf, mesh.ply and manifest.json into output_dir.
PipelineResult run_label_pipeline(const PipelineConfig& config);

struct SequenceArtifacts {
  std::string trajectory_csv;
  std::string scan_index_csv;
  std::vector<std::string> scan_files;
};

// Renders a synthetic scene to pipeline inputs: trajectory.csv, scans.csv and
// one binary PLY per pose under <out_dir>/scans/.
SequenceArtifacts generate_sequence(const SceneSpec& scene, const std::string& out_dir,
                                    int threads = 0);

}  // namespace travmap
