#include <doctest.h>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "test_util.hpp"
#include "travmap/errors.hpp"
#include "travmap/features.hpp"
#include "travmap/ingest.hpp"
#include "travmap/pipeline.hpp"
#include "travmap/surface.hpp"

using namespace travmap;

namespace {

// small flat scene that runs the whole pipeline in a couple of seconds
SceneSpec smoke_scene() {
  SceneSpec scene;
  TerrainRegion r;
  r.kind = RegionKind::Flat;
  r.x0 = -15;
  r.y0 = -10;
  r.x1 = 15;
  r.y1 = 10;
  r.z0 = 0.0;
  scene.terrain.regions.push_back(r);
  scene.terrain.seed = 11;
  scene.path = {{-4, 0}, {4, 0}};
  scene.speed = 2.0;
  scene.clearance = 0.2;
  scene.lidar.rings = 16;
  scene.lidar.elev_min = -40.0 * kPi / 180.0;
  scene.lidar.elev_max = -5.0 * kPi / 180.0;
  scene.lidar.azimuth_step = 2.0 * kPi / 180.0;
  scene.lidar.max_range = 20.0;
  scene.lidar.noise_sigma = 0.005;
  return scene;
}

std::string config_text(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string text;
  for (const auto& [k, v] : kv) {
    text += k;
    text += " = ";
    text += v;
    text += "\n";
  }
  return text;
}

}  // namespace

TEST_CASE("pipeline config round-trips through its key=value file form") {
  testutil::TempDir dir("cfg");
  PipelineConfig cfg;
  cfg.scan_index = "seq/scans.csv";
  cfg.trajectory = "seq/trajectory.csv";
  cfg.output_dir = "out";
  cfg.grid_min = Vec3(-3.3, -4.4, -1.1);
  cfg.grid_max = Vec3(3.3, 4.4, 1.1);
  cfg.voxel_size = 0.11;
  cfg.window = 7;
  cfg.leaf = 0.033;
  cfg.normal_k = 12;
  cfg.lattice = 0.09;
  cfg.support = 0.27;
  cfg.mls_neighbors = 9;
  cfg.backend = "mls";
  cfg.feature_k = 11;
  cfg.footprint.length = 1.25;
  cfg.footprint.width = 0.75;
  cfg.footprint.z_band = 0.35;
  cfg.alpha = 0.025;
  cfg.lambda = 3e-7;
  cfg.frame = 4;
  cfg.ego = false;
  cfg.threads = 2;
  cfg.seed = 987654321;

  const std::string path = dir.file("run.cfg");
  testutil::write_text(path, config_text(cfg.key_values()));
  const PipelineConfig back = PipelineConfig::from_file(path);

  CHECK(back.scan_index == cfg.scan_index);
  CHECK(back.trajectory == cfg.trajectory);
  CHECK(back.output_dir == cfg.output_dir);
  CHECK(back.grid_min == cfg.grid_min);
  CHECK(back.grid_max == cfg.grid_max);
  CHECK(back.voxel_size == cfg.voxel_size);
  CHECK(back.window == cfg.window);
  CHECK(back.leaf == cfg.leaf);
  CHECK(back.normal_k == cfg.normal_k);
  CHECK(back.lattice == cfg.lattice);
  CHECK(back.support == cfg.support);
  CHECK(back.mls_neighbors == cfg.mls_neighbors);
  CHECK(back.backend == cfg.backend);
  CHECK(back.feature_k == cfg.feature_k);
  CHECK(back.footprint.length == cfg.footprint.length);
  CHECK(back.footprint.width == cfg.footprint.width);
  CHECK(back.footprint.z_band == cfg.footprint.z_band);
  CHECK(back.alpha == cfg.alpha);
  CHECK(back.lambda == cfg.lambda);
  CHECK(back.frame == cfg.frame);
  CHECK(back.ego == cfg.ego);
  CHECK(back.threads == cfg.threads);
  CHECK(back.seed == cfg.seed);
}

TEST_CASE("pipeline config file parsing is strict but tolerant of comments") {
  testutil::TempDir dir("cfgparse");

  SUBCASE("comments, blank lines and whitespace are fine") {
    const std::string p = dir.file("ok.cfg");
    testutil::write_text(p,
                         "# a comment\n"
                         "\n"
                         "  scan_index = a.csv  \n"
                         "trajectory=b.csv\n"
                         "output_dir = out # trailing comment\n"
                         "window = 5\n");
    const PipelineConfig cfg = PipelineConfig::from_file(p);
    CHECK(cfg.scan_index == "a.csv");
    CHECK(cfg.trajectory == "b.csv");
    CHECK(cfg.output_dir == "out");
    CHECK(cfg.window == 5);
    CHECK(cfg.voxel_size == 0.2);  // untouched default
  }
  SUBCASE("unknown keys are rejected") {
    const std::string p = dir.file("unknown.cfg");
    testutil::write_text(p, "scan_index = a\nwibble = 3\n");
    CHECK_THROWS_AS(PipelineConfig::from_file(p), MalformedFile);
  }
  SUBCASE("duplicate keys are rejected") {
    const std::string p = dir.file("dup.cfg");
    testutil::write_text(p, "window = 5\nwindow = 6\n");
    CHECK_THROWS_AS(PipelineConfig::from_file(p), MalformedFile);
  }
  SUBCASE("malformed numbers are rejected") {
    const std::string p = dir.file("badnum.cfg");
    testutil::write_text(p, "voxel_size = fast\n");
    CHECK_THROWS_AS(PipelineConfig::from_file(p), MalformedFile);
    testutil::write_text(p, "window = 5.5\n");
    CHECK_THROWS_AS(PipelineConfig::from_file(p), MalformedFile);
    testutil::write_text(p, "ego = maybe\n");
    CHECK_THROWS_AS(PipelineConfig::from_file(p), MalformedFile);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(PipelineConfig::from_file(dir.file("absent.cfg")), MissingInput);
  }
}

TEST_CASE("pipeline config validation catches bad values") {
  PipelineConfig cfg;
  cfg.scan_index = "a";
  cfg.trajectory = "b";
  cfg.output_dir = "c";
  CHECK_NOTHROW(cfg.validate());

  SUBCASE("paths are required") {
    PipelineConfig c = cfg;
    c.scan_index.clear();
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("grid must not be empty") {
    PipelineConfig c = cfg;
    c.grid_max.x() = c.grid_min.x();
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("positive scalars") {
    PipelineConfig c = cfg;
    c.voxel_size = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = cfg;
    c.leaf = -0.1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = cfg;
    c.support = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("neighbor counts") {
    PipelineConfig c = cfg;
    c.normal_k = 2;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = cfg;
    c.feature_k = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("alpha in (0,1)") {
    PipelineConfig c = cfg;
    c.alpha = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.alpha = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("frame below -1") {
    PipelineConfig c = cfg;
    c.frame = -2;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("grid accessor matches the extent fields") {
    const VoxelGridSpec g = cfg.grid();
    CHECK(g.min_corner == cfg.grid_min);
    CHECK(g.max_corner == cfg.grid_max);
    CHECK(g.dims[0] == 256);
    CHECK(g.dims[1] == 256);
    CHECK(g.dims[2] == 32);
  }
}

TEST_CASE("generate_sequence writes a loadable trajectory and scan set") {
  testutil::TempDir dir("seq");
  const SceneSpec scene = smoke_scene();
  const SequenceArtifacts art = generate_sequence(scene, dir.file("seq"));

  REQUIRE(std::filesystem::exists(art.trajectory_csv));
  REQUIRE(std::filesystem::exists(art.scan_index_csv));

  const Trajectory traj = load_trajectory(art.trajectory_csv);
  // 8 m at 2 m/s = 4 s -> 41 poses
  CHECK(traj.samples().size() == 41);

  const auto index = load_scan_index(art.scan_index_csv);
  CHECK(index.size() == art.scan_files.size());
  CHECK(index.size() == traj.samples().size());  // every pose produced returns

  // every listed scan exists, parses, and has sensible content
  const std::filesystem::path base = std::filesystem::path(art.scan_index_csv).parent_path();
  for (std::size_t i = 0; i < index.size(); ++i) {
    CHECK(index[i].t == traj.samples()[i].t);
    const std::string scan_path = (base / index[i].file).string();
    const ScanFrame frame = load_scan(scan_path, scan_format_for(scan_path));
    CHECK(frame.points.size() > 500);
  }
}

TEST_CASE("run_label_pipeline produces consistent artifacts end to end") {
  testutil::TempDir dir("run");
  const SceneSpec scene = smoke_scene();
  const SequenceArtifacts art = generate_sequence(scene, dir.file("seq"));

  PipelineConfig cfg;
  cfg.scan_index = art.scan_index_csv;
  cfg.trajectory = art.trajectory_csv;
  cfg.output_dir = dir.file("out");
  cfg.grid_min = Vec3(-12.8, -6.4, -2.0);
  cfg.grid_max = Vec3(12.8, 6.4, 1.2);
  cfg.threads = 1;

  const PipelineResult res = run_label_pipeline(cfg);

  const LabelGrid labels = read_label_grid(res.labels_path);
  const FeatureGrid feats = read_feature_grid(res.features_path);
  REQUIRE(labels.spec == cfg.grid());
  REQUIRE(feats.spec == cfg.grid());

  // label counts in the result match the grid contents
  std::size_t t = 0, p = 0, n = 0, u = 0;
  for (const TravLabel l : labels.labels) {
    if (l == TravLabel::Traversable) ++t;
    if (l == TravLabel::PotentiallyTraversable) ++p;
    if (l == TravLabel::NonTraversable) ++n;
    if (l == TravLabel::Unoccupied) ++u;
  }
  CHECK(t == res.count_t);
  CHECK(p == res.count_p);
  CHECK(n == res.count_n);
  CHECK(u == res.count_u);
  CHECK(t + p + n + u == labels.labels.size());
  CHECK(t > 0);
  CHECK(p > 0);

  // labels are only assigned to occupied feature voxels
  for (std::size_t v = 0; v < labels.labels.size(); ++v) {
    CHECK((labels.labels[v] == TravLabel::Unoccupied) == (feats.counts[v] == 0));
  }

  // manifest echoes the config exactly and reports matching counts
  std::ifstream min(res.manifest_path);
  REQUIRE(min.good());
  const nlohmann::json manifest = nlohmann::json::parse(min);
  for (const auto& [k, v] : cfg.key_values()) {
    CHECK(manifest.at("config").at(k).get<std::string>() == v);
  }
  CHECK(manifest.at("counts").at("T").get<std::size_t>() == t);
  CHECK(manifest.at("counts").at("P").get<std::size_t>() == p);
  CHECK(manifest.at("counts").at("N").get<std::size_t>() == n);
  CHECK(manifest.at("counts").at("U").get<std::size_t>() == u);
  CHECK(manifest.at("threshold").get<double>() == res.threshold);

  // the mesh artifact parses and is non-trivial
  const TriMesh mesh = read_mesh_ply(res.mesh_path);
  CHECK(mesh.vertices.size() > 1000);
  CHECK(!mesh.faces.empty());

  SUBCASE("a second run with more threads is byte-identical") {
    PipelineConfig cfg2 = cfg;
    cfg2.output_dir = dir.file("out2");
    cfg2.threads = 3;
    run_label_pipeline(cfg2);
    CHECK(testutil::read_bytes(dir.file("out2") + "/labels.stnl") ==
          testutil::read_bytes(dir.file("out") + "/labels.stnl"));
    CHECK(testutil::read_bytes(dir.file("out2") + "/features.stnf") ==
          testutil::read_bytes(dir.file("out") + "/features.stnf"));
  }
}

TEST_CASE("run_label_pipeline validates the keyframe index") {
  testutil::TempDir dir("frame");
  const SceneSpec scene = smoke_scene();
  const SequenceArtifacts art = generate_sequence(scene, dir.file("seq"));
  PipelineConfig cfg;
  cfg.scan_index = art.scan_index_csv;
  cfg.trajectory = art.trajectory_csv;
  cfg.output_dir = dir.file("out");
  cfg.frame = 100000;
  CHECK_THROWS_AS(run_label_pipeline(cfg), ConfigError);
}

TEST_CASE("run_label_pipeline reports missing inputs") {
  testutil::TempDir dir("missing");
  PipelineConfig cfg;
  cfg.scan_index = dir.file("absent/scans.csv");
  cfg.trajectory = dir.file("absent/trajectory.csv");
  cfg.output_dir = dir.file("out");
  CHECK_THROWS_AS(run_label_pipeline(cfg), MissingInput);
}
