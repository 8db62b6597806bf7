#include "travmap/pipeline.hpp"

#include "travmap/aggregate.hpp"
#include "travmap/errors.hpp"
#include "travmap/features.hpp"
#include "travmap/ingest.hpp"
#include "travmap/ply.hpp"
#include "travmap/surface.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Geometry>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <utility>

namespace travmap {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v, const std::string& key, const std::string& path,
                    std::size_t line) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(x))
    throw MalformedFile(path, line, "invalid number for '" + key + "': " + v);
  return x;
}

long long parse_int(const std::string& v, const std::string& key, const std::string& path,
                    std::size_t line) {
  errno = 0;
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
    throw MalformedFile(path, line, "invalid integer for '" + key + "': " + v);
  return x;
}

std::uint64_t parse_uint(const std::string& v, const std::string& key, const std::string& path,
                         std::size_t line) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || v[0] == '-' || end != v.c_str() + v.size() || errno == ERANGE)
    throw MalformedFile(path, line, "invalid unsigned integer for '" + key + "': " + v);
  return x;
}

bool parse_bool(const std::string& v, const std::string& key, const std::string& path,
                std::size_t line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw MalformedFile(path, line, "invalid boolean for '" + key + "' (use true/false): " + v);
}

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void apply_key(PipelineConfig& c, const std::string& key, const std::string& value,
               const std::string& path, std::size_t line) {
  auto d = [&] { return parse_double(value, key, path, line); };
  auto i = [&] { return int(parse_int(value, key, path, line)); };
  if (key == "scan_index") c.scan_index = value;
  else if (key == "trajectory") c.trajectory = value;
  else if (key == "output_dir") c.output_dir = value;
  else if (key == "grid_min_x") c.grid_min.x() = d();
  else if (key == "grid_min_y") c.grid_min.y() = d();
  else if (key == "grid_min_z") c.grid_min.z() = d();
  else if (key == "grid_max_x") c.grid_max.x() = d();
  else if (key == "grid_max_y") c.grid_max.y() = d();
  else if (key == "grid_max_z") c.grid_max.z() = d();
  else if (key == "voxel_size") c.voxel_size = d();
  else if (key == "window") c.window = i();
  else if (key == "leaf") c.leaf = d();
  else if (key == "normal_k") c.normal_k = i();
  else if (key == "lattice") c.lattice = d();
  else if (key == "support") c.support = d();
  else if (key == "mls_neighbors") c.mls_neighbors = i();
  else if (key == "backend") c.backend = value;
  else if (key == "feature_k") c.feature_k = i();
  else if (key == "footprint_length") c.footprint.length = d();
  else if (key == "footprint_width") c.footprint.width = d();
  else if (key == "z_band") c.footprint.z_band = d();
  else if (key == "alpha") c.alpha = d();
  else if (key == "lambda") c.lambda = d();
  else if (key == "frame") c.frame = i();
  else if (key == "ego") c.ego = parse_bool(value, key, path, line);
  else if (key == "threads") c.threads = i();
  else if (key == "seed") c.seed = parse_uint(value, key, path, line);
  else throw MalformedFile(path, line, "unknown key '" + key + "'");
}

// Wall-clock laps between pipeline stages.
class StageClock {
public:
  explicit StageClock(std::vector<StageTiming>& out) : out_(out), last_(Clock::now()) {}

  void lap(const std::string& stage) {
    const auto now = Clock::now();
    out_.push_back({stage, std::chrono::duration<double, std::milli>(now - last_).count()});
    last_ = now;
  }

private:
  using Clock = std::chrono::steady_clock;
  std::vector<StageTiming>& out_;
  Clock::time_point last_;
};

}  // namespace

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInput(path);
  PipelineConfig cfg;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw MalformedFile(path, lineno, "expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw MalformedFile(path, lineno, "empty key");
    if (!seen.insert(key).second)
      throw MalformedFile(path, lineno, "duplicate key '" + key + "'");
    apply_key(cfg, key, value, path, lineno);
  }
  cfg.validate();
  return cfg;
}

std::vector<std::pair<std::string, std::string>> PipelineConfig::key_values() const {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("scan_index", scan_index);
  kv.emplace_back("trajectory", trajectory);
  kv.emplace_back("output_dir", output_dir);
  kv.emplace_back("grid_min_x", fmt_double(grid_min.x()));
  kv.emplace_back("grid_min_y", fmt_double(grid_min.y()));
  kv.emplace_back("grid_min_z", fmt_double(grid_min.z()));
  kv.emplace_back("grid_max_x", fmt_double(grid_max.x()));
  kv.emplace_back("grid_max_y", fmt_double(grid_max.y()));
  kv.emplace_back("grid_max_z", fmt_double(grid_max.z()));
  kv.emplace_back("voxel_size", fmt_double(voxel_size));
  kv.emplace_back("window", std::to_string(window));
  kv.emplace_back("leaf", fmt_double(leaf));
  kv.emplace_back("normal_k", std::to_string(normal_k));
  kv.emplace_back("lattice", fmt_double(lattice));
  kv.emplace_back("support", fmt_double(support));
  kv.emplace_back("mls_neighbors", std::to_string(mls_neighbors));
  kv.emplace_back("backend", backend);
  kv.emplace_back("feature_k", std::to_string(feature_k));
  kv.emplace_back("footprint_length", fmt_double(footprint.length));
  kv.emplace_back("footprint_width", fmt_double(footprint.width));
  kv.emplace_back("z_band", fmt_double(footprint.z_band));
  kv.emplace_back("alpha", fmt_double(alpha));
  kv.emplace_back("lambda", fmt_double(lambda));
  kv.emplace_back("frame", std::to_string(frame));
  kv.emplace_back("ego", ego ? "true" : "false");
  kv.emplace_back("threads", std::to_string(threads));
  kv.emplace_back("seed", std::to_string(seed));
  return kv;
}

VoxelGridSpec PipelineConfig::grid() const {
  return VoxelGridSpec(grid_min, grid_max, Vec3::Constant(voxel_size));
}

void PipelineConfig::validate() const {
  if (scan_index.empty()) throw ConfigError("scan_index is required");
  if (trajectory.empty()) throw ConfigError("trajectory is required");
  if (output_dir.empty()) throw ConfigError("output_dir is required");
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw ConfigError(std::string(name) + " must be positive, got " + fmt_double(v));
  };
  positive(voxel_size, "voxel_size");
  positive(leaf, "leaf");
  positive(lattice, "lattice");
  positive(support, "support");
  positive(footprint.length, "footprint_length");
  positive(footprint.width, "footprint_width");
  positive(footprint.z_band, "z_band");
  positive(lambda, "lambda");
  for (int a = 0; a < 3; ++a)
    if (!(grid_max[a] > grid_min[a]))
      throw ConfigError("grid_max must exceed grid_min on every axis");
  if (window < 1) throw ConfigError("window must be >= 1");
  if (normal_k < 3) throw ConfigError("normal_k must be >= 3");
  if (mls_neighbors < 1) throw ConfigError("mls_neighbors must be >= 1");
  if (feature_k < 4) throw ConfigError("feature_k must be >= 4");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (frame < -1) throw ConfigError("frame must be >= 0, or -1 for the middle scan");
  if (threads < 0) throw ConfigError("threads must be >= 0");
  if (backend.empty()) throw ConfigError("backend must be non-empty");
  grid();  // validates the voxelization of the extent
}

PipelineResult run_label_pipeline(const PipelineConfig& config) {
  config.validate();

  PipelineResult result;
  StageClock clock(result.timings);
  const VoxelGridSpec grid = config.grid();

  Trajectory traj = load_trajectory(config.trajectory);
  const std::vector<ScanIndexEntry> index = load_scan_index(config.scan_index);
  if (index.empty())
    throw MalformedFile(config.scan_index, 1, "scan index lists no scans");
  clock.lap("load_inputs");

  const int n = int(index.size());
  const int key = config.frame < 0 ? n / 2 : config.frame;
  if (key >= n)
    throw ConfigError("frame " + std::to_string(key) + " out of range; sequence has " +
                      std::to_string(n) + " scans");
  const double t_key = index[key].t;
  if (!traj.contains(t_key))
    throw Error("keyframe timestamp " + fmt_double(t_key) + " outside trajectory span");

  int start = key - config.window / 2;
  start = std::clamp(start, 0, std::max(0, n - config.window));
  const int count = std::min(config.window, n - start);

  const fs::path base = fs::path(config.scan_index).parent_path();
  std::vector<ScanFrame> scans;
  scans.reserve(std::size_t(count));
  std::size_t raw_points = 0;
  for (int s = start; s < start + count; ++s) {
    fs::path file(index[s].file);
    if (file.is_relative()) file = base / file;
    ScanFrame frame = load_scan(file.string(), scan_format_for(file.string()));
    frame.t = index[s].t;
    raw_points += frame.points.size();
    scans.push_back(std::move(frame));
  }
  clock.lap("load_scans");

  std::size_t skipped = 0;
  GlobalCloud cloud = accumulate(scans, traj, config.window, config.threads, &skipped);
  scans.clear();
  scans.shrink_to_fit();
  clock.lap("accumulate");

  // Re-grid the scene in the keyframe's yaw-aligned local frame so the label
  // box travels with the robot: x' = Rz(-yaw) (x - t_key).
  Trajectory working = traj;
  if (config.ego) {
    const Pose key_pose = interpolate_pose(traj, t_key);
    const double yaw = pose_yaw(key_pose);
    const Quat unyaw(Eigen::AngleAxisd(-yaw, Vec3::UnitZ()));
    const Vec3 origin = key_pose.translation;
    for (Vec3& p : cloud.points) p = unyaw * (p - origin);
    for (Vec3& v : cloud.viewpoints) v = unyaw * (v - origin);
    std::vector<Pose> samples = traj.samples();
    for (Pose& s : samples) {
      s.translation = unyaw * (s.translation - origin);
      s.rotation = (unyaw * s.rotation).normalized();
    }
    working = Trajectory(std::move(samples));
    clock.lap("ego_transform");
  }

  cloud = voxel_downsample(cloud, config.leaf);
  const std::size_t downsampled_points = cloud.size();
  clock.lap("downsample");

  std::size_t degenerate = 0;
  cloud = estimate_normals(cloud, config.normal_k, config.threads, &degenerate);
  clock.lap("normals");

  ReconstructionParams rp;
  rp.lattice_spacing = config.lattice;
  rp.support_radius = config.support;
  rp.neighbors = config.mls_neighbors;
  rp.backend = config.backend;
  rp.has_clip = true;
  rp.clip_min = grid.min_corner - Vec3::Constant(0.5);
  rp.clip_max = grid.max_corner + Vec3::Constant(0.5);
  TriMesh mesh = reconstruct(cloud, rp, config.threads);
  clock.lap("reconstruct");

  std::size_t isolated = 0;
  mesh = vertex_normals(mesh, &isolated);
  clock.lap("vertex_normals");

  const std::vector<VertexFeatures> feats =
      vertex_features(mesh, config.feature_k, config.threads);
  clock.lap("features");

  const FeatureGrid fgrid = voxelize_features(feats, mesh, grid);
  clock.lap("voxelize");

  const std::vector<std::uint32_t> driven =
      trajectory_voxels(working, grid, config.footprint, fgrid);
  const ReferenceModel model = fit_reference(fgrid, driven, config.lambda);
  result.threshold = chi2_threshold(3, config.alpha);
  clock.lap("fit_reference");

  const LabelGrid labels = label_grid(fgrid, driven, model, result.threshold, config.threads);
  for (TravLabel l : labels.labels) {
    switch (l) {
      case TravLabel::Traversable: ++result.count_t; break;
      case TravLabel::PotentiallyTraversable: ++result.count_p; break;
      case TravLabel::NonTraversable: ++result.count_n; break;
      case TravLabel::Unoccupied: ++result.count_u; break;
    }
  }
  clock.lap("label");

  const fs::path out(config.output_dir);
  fs::create_directories(out);
  result.labels_path = (out / "labels.stnl").string();
  result.features_path = (out / "features.stnf").string();
  result.mesh_path = (out / "mesh.ply").string();
  result.manifest_path = (out / "manifest.json").string();
  write_label_grid(result.labels_path, labels);
  write_feature_grid(result.features_path, fgrid);
  write_mesh_ply(result.mesh_path, mesh, /*binary=*/true);
  clock.lap("write_artifacts");

  json manifest;
  json jcfg = json::object();
  for (const auto& [k, v] : config.key_values()) jcfg[k] = v;
  manifest["config"] = jcfg;
  manifest["counts"] = {{"T", result.count_t},
                        {"P", result.count_p},
                        {"N", result.count_n},
                        {"U", result.count_u}};
  manifest["threshold"] = result.threshold;
  manifest["reference"] = {
      {"mu", {model.mu.x(), model.mu.y(), model.mu.z()}},
      {"sigma",
       {{model.sigma(0, 0), model.sigma(0, 1), model.sigma(0, 2)},
        {model.sigma(1, 0), model.sigma(1, 1), model.sigma(1, 2)},
        {model.sigma(2, 0), model.sigma(2, 1), model.sigma(2, 2)}}},
      {"samples", model.sample_count},
      {"lambda", model.lambda}};
  manifest["grid"] = {{"dims", {grid.dims[0], grid.dims[1], grid.dims[2]}},
                      {"occupied", fgrid.occupied_count()},
                      {"driven", driven.size()}};
  manifest["stats"] = {{"keyframe", key},
                       {"keyframe_t", t_key},
                       {"scans_used", count},
                       {"scans_skipped", skipped},
                       {"raw_points", raw_points},
                       {"downsampled_points", downsampled_points},
                       {"degenerate_normals", degenerate},
                       {"isolated_vertices", isolated},
                       {"vertices", mesh.vertices.size()},
                       {"faces", mesh.faces.size()}};
  json jtime = json::object();
  for (const StageTiming& st : result.timings) jtime[st.stage] = st.ms;
  manifest["timings_ms"] = jtime;
  manifest["artifacts"] = {{"labels", "labels.stnl"},
                           {"features", "features.stnf"},
                           {"mesh", "mesh.ply"}};
  std::ofstream mf(result.manifest_path);
  if (!mf) throw Error("cannot write " + result.manifest_path);
  mf << manifest.dump(2) << "\n";
  return result;
}

SequenceArtifacts generate_sequence(const SceneSpec& scene, const std::string& out_dir,
                                    int threads) {
  validate_terrain(scene.terrain);
  const Trajectory traj = gen_trajectory(scene.terrain, scene.path, scene.speed, scene.clearance);

  const fs::path out(out_dir);
  fs::create_directories(out / "scans");

  SequenceArtifacts art;
  art.trajectory_csv = (out / "trajectory.csv").string();
  write_trajectory(art.trajectory_csv, traj);

  std::vector<ScanIndexEntry> entries;
  const std::vector<Pose>& samples = traj.samples();
  for (std::size_t k = 0; k < samples.size(); ++k) {
    // distinct noise stream per scan, stable under resumption or reordering
    const std::uint64_t scan_seed =
        scene.terrain.seed ^ ((std::uint64_t(k) + 1) * 0xA0761D6478BD642Full);
    ScanFrame frame = virtual_scan(scene.terrain, samples[k], scene.lidar, scan_seed, threads);
    if (frame.points.empty()) continue;
    char name[32];
    std::snprintf(name, sizeof name, "scan_%06zu.ply", k);
    const std::string rel = std::string("scans/") + name;
    PlyData ply;
    ply.points = std::move(frame.points);
    write_ply((out / rel).string(), ply, /*binary=*/true);
    entries.push_back({samples[k].t, rel});
    art.scan_files.push_back((out / rel).string());
  }
  if (entries.empty()) throw Error("no ray returned; the sensor never saw the terrain");
  art.scan_index_csv = (out / "scans.csv").string();
  write_scan_index(art.scan_index_csv, entries);
  return art;
}

}  // namespace travmap
