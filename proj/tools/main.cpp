// Command-line front end: synthesize sequences, run the labeling pipeline,
// compare label grids, and export colored meshes for inspection.

#include <CLI11.hpp>

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "travmap/errors.hpp"
#include "travmap/eval.hpp"
#include "travmap/label.hpp"
#include "travmap/pipeline.hpp"
#include "travmap/ply.hpp"
#include "travmap/surface.hpp"
#include "travmap/synth.hpp"

namespace {

namespace fs = std::filesystem;
using namespace travmap;

std::array<std::uint8_t, 3> label_color(TravLabel l) {
  switch (l) {
    case TravLabel::Traversable: return {0, 255, 0};
    case TravLabel::PotentiallyTraversable: return {0, 0, 255};
    case TravLabel::NonTraversable: return {255, 0, 255};
    case TravLabel::Unoccupied: break;
  }
  return {128, 128, 128};
}

void print_label_result(const PipelineResult& res) {
  std::cout << "labels:   " << res.labels_path << "\n"
            << "features: " << res.features_path << "\n"
            << "mesh:     " << res.mesh_path << "\n"
            << "manifest: " << res.manifest_path << "\n";
  char line[192];
  std::snprintf(line, sizeof line, "T=%zu P=%zu N=%zu U=%zu threshold=%.6f", res.count_t,
                res.count_p, res.count_n, res.count_u, res.threshold);
  std::cout << line << "\n";
}

int cmd_synth(const std::string& scene_path, const std::string& out_dir, bool has_seed,
              std::uint64_t seed, int threads) {
  SceneSpec scene = load_scene(scene_path);
  if (has_seed) scene.terrain.seed = seed;
  const SequenceArtifacts art = generate_sequence(scene, out_dir, threads);
  std::cout << "trajectory: " << art.trajectory_csv << "\n"
            << "scan index: " << art.scan_index_csv << "\n"
            << "scans:      " << art.scan_files.size() << "\n";
  return 0;
}

int cmd_label(const std::string& config_path, bool has_frame, int frame, bool has_threads,
              int threads) {
  PipelineConfig cfg = PipelineConfig::from_file(config_path);
  if (has_frame) cfg.frame = frame;
  if (has_threads) cfg.threads = threads;
  print_label_result(run_label_pipeline(cfg));
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path,
             const std::string& out_path, int threads) {
  const LabelGrid pred = read_label_grid(pred_path);
  const LabelGrid gt = read_label_grid(gt_path);
  const ConfusionStats stats = confusion(pred, gt, threads);
  const std::string report = metrics_json(stats);
  std::cout << report << "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw Error("cannot write " + out_path);
    out << report << "\n";
  }
  return 0;
}

int cmd_export(const std::string& labels_path, const std::string& mesh_path,
               const std::string& out_path, bool ascii) {
  const LabelGrid grid = read_label_grid(labels_path);
  const TriMesh mesh = read_mesh_ply(mesh_path);
  PlyData ply;
  ply.points = mesh.vertices;
  ply.normals = mesh.vertex_normals;
  ply.faces = mesh.faces;
  ply.colors.resize(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const auto idx = voxel_index(mesh.vertices[i], grid.spec);
    const TravLabel l =
        idx ? grid.labels[grid.spec.linear_index(*idx)] : TravLabel::Unoccupied;
    ply.colors[i] = label_color(l);
  }
  write_ply(out_path, ply, !ascii);
  std::cout << "colored mesh: " << out_path << "\n";
  return 0;
}

int cmd_pipeline(const std::string& scene_path, const std::string& out_dir, bool has_seed,
                 std::uint64_t seed, int threads) {
  SceneSpec scene = load_scene(scene_path);
  if (has_seed) scene.terrain.seed = seed;
  const fs::path root(out_dir);
  const SequenceArtifacts art = generate_sequence(scene, (root / "seq").string(), threads);
  std::cout << "sequence: " << art.scan_files.size() << " scans under "
            << (root / "seq").string() << "\n";

  PipelineConfig cfg;
  cfg.scan_index = art.scan_index_csv;
  cfg.trajectory = art.trajectory_csv;
  cfg.output_dir = (root / "run").string();
  cfg.threads = threads;
  const PipelineResult res = run_label_pipeline(cfg);
  print_label_result(res);

  const LabelGrid labels = read_label_grid(res.labels_path);
  const ConfusionStats stats = confusion(labels, labels, threads);
  std::cout << metrics_json(stats) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic traversability ground-truth pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "travmap 0.1.0");

  std::string synth_scene, synth_out;
  std::uint64_t synth_seed = 0;
  int synth_threads = 0;
  CLI::App* synth = app.add_subcommand("synth", "render a scene to scans + trajectory");
  synth->add_option("--scene", synth_scene, "scene description (json)")
      ->required()
      ->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "override the scene seed");
  synth->add_option("--threads", synth_threads, "worker threads (0 = all cores)");

  std::string label_config;
  int label_frame = -1, label_threads = 0;
  CLI::App* label = app.add_subcommand("label", "run the labeling pipeline on a sequence");
  label->add_option("--config", label_config, "pipeline config (key=value lines)")
      ->required()
      ->check(CLI::ExistingFile);
  label->add_option("--frame", label_frame, "keyframe index (-1 = middle scan)");
  label->add_option("--threads", label_threads, "worker threads (0 = all cores)");

  std::string eval_pred, eval_gt, eval_out;
  int eval_threads = 0;
  CLI::App* eval = app.add_subcommand("eval", "compare two label grids");
  eval->add_option("--pred", eval_pred, "predicted labels (stnl)")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--gt", eval_gt, "ground-truth labels (stnl)")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--out", eval_out, "also write the json report here");
  eval->add_option("--threads", eval_threads, "worker threads (0 = all cores)");

  std::string export_labels, export_mesh, export_out;
  bool export_ascii = false;
  CLI::App* exp = app.add_subcommand("export", "color a mesh by voxel label");
  exp->add_option("--labels", export_labels, "label grid (stnl)")
      ->required()
      ->check(CLI::ExistingFile);
  exp->add_option("--mesh", export_mesh, "mesh to color (ply)")
      ->required()
      ->check(CLI::ExistingFile);
  exp->add_option("--out", export_out, "colored mesh output (ply)")->required();
  exp->add_flag("--ascii", export_ascii, "write ascii instead of binary");

  std::string pipe_scene, pipe_out;
  std::uint64_t pipe_seed = 0;
  int pipe_threads = 0;
  CLI::App* pipe = app.add_subcommand("pipeline", "synth + label + self-eval in one run");
  pipe->add_option("--scene", pipe_scene, "scene description (json)")
      ->required()
      ->check(CLI::ExistingFile);
  pipe->add_option("--out", pipe_out, "output directory")->required();
  pipe->add_option("--seed", pipe_seed, "override the scene seed");
  pipe->add_option("--threads", pipe_threads, "worker threads (0 = all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(synth))
      return cmd_synth(synth_scene, synth_out, synth->count("--seed") > 0, synth_seed,
                       synth_threads);
    if (app.got_subcommand(label))
      return cmd_label(label_config, label->count("--frame") > 0, label_frame,
                       label->count("--threads") > 0, label_threads);
    if (app.got_subcommand(eval)) return cmd_eval(eval_pred, eval_gt, eval_out, eval_threads);
    if (app.got_subcommand(exp))
      return cmd_export(export_labels, export_mesh, export_out, export_ascii);
    if (app.got_subcommand(pipe))
      return cmd_pipeline(pipe_scene, pipe_out, pipe->count("--seed") > 0, pipe_seed,
                          pipe_threads);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const MalformedFile& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const MissingInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const GridSpecMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  }
  return 0;
}
