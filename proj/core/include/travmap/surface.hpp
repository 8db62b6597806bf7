#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "travmap/aggregate.hpp"
#include "travmap/geometry.hpp"

namespace travmap {

// Triangle mesh with faces oriented toward the positive side of the implicit
// function (upward for terrain sheets reconstructed from upward normals).
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> faces;
  std::vector<Vec3> vertex_normals;  // empty until vertex_normals() is run

  bool has_normals() const { return !vertex_normals.empty(); }
};

struct ReconstructionParams {
  double lattice_spacing = 0.1;   // node pitch of the sampling lattice, meters
  double support_radius = 0.3;    // nodes farther than this from every point carry no data
  int neighbors = 8;              // oriented points averaged per lattice node
  std::string backend = "mls";

  // Optional axis-aligned clip: the lattice is restricted to the intersection
  // of the (padded) cloud bounds with [clip_min, clip_max].
  bool has_clip = false;
  Vec3 clip_min = Vec3::Zero();
  Vec3 clip_max = Vec3::Zero();
};

// Builds a triangle mesh approximating the surface sampled by an oriented
// cloud. The default "mls" backend evaluates a signed moving-least-squares
// field on a regular lattice — the projection of each node onto the plane of
// the Gaussian-weighted average of its nearest oriented points — and extracts
// the zero level set. Field value exactly 0 counts as inside. Throws
// InsufficientPoints (< 100 points), EmptySurface (level set never crossed)
// and ConfigError (unknown backend).
TriMesh reconstruct(const GlobalCloud& cloud, const ReconstructionParams& params,
                    int threads = 0);

// Alternative reconstruction implementations (e.g. a screened-Poisson solver)
// can be registered under a name and selected via ReconstructionParams.
using ReconstructionBackend =
    std::function<TriMesh(const GlobalCloud&, const ReconstructionParams&, int)>;
void register_reconstruction_backend(const std::string& name, ReconstructionBackend backend);
std::vector<std::string> reconstruction_backend_names();

// Per-vertex normal = normalized sum of the (unit) normals of incident faces,
// all faces weighted equally. Vertices with no incident face get (0,0,1);
// their count is reported via `isolated`.
TriMesh vertex_normals(const TriMesh& mesh, std::size_t* isolated = nullptr);

// Keeps faces with at least one vertex inside the grid box (half-open, same
// membership rule as voxel_index), drops unreferenced vertices, reindexes.
// Vertex coordinates are never modified.
TriMesh crop_mesh(const TriMesh& mesh, const VoxelGridSpec& grid);

// Mesh file I/O (PLY, ascii or binary little-endian; positions, optional
// normals, triangle faces).
TriMesh read_mesh_ply(const std::string& path);
void write_mesh_ply(const std::string& path, const TriMesh& mesh, bool binary);

}  // namespace travmap
