#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "travmap/geometry.hpp"

namespace travmap {

// In-memory form of a PLY file restricted to the layouts this project reads
// and writes: one `vertex` element carrying positions plus optional normals,
// intensity and 8-bit colors, and an optional `face` element of triangles.
// Unknown vertex properties are skipped on read.
struct PlyData {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;                        // empty, or one per point
  std::vector<double> intensities;                  // empty, or one per point
  std::vector<std::array<std::uint8_t, 3>> colors;  // empty, or one per point
  std::vector<std::array<std::uint32_t, 3>> faces;  // empty for plain clouds

  bool has_normals() const { return !normals.empty(); }
  bool has_intensity() const { return !intensities.empty(); }
  bool has_colors() const { return !colors.empty(); }
};

// Reads an ascii or binary_little_endian PLY file. Throws MalformedFile on
// anything outside the supported subset (big-endian data, non-triangle faces,
// truncated bodies) and MissingInput if the file cannot be opened.
PlyData read_ply(const std::string& path);

// Writes positions (and whichever optional attributes are present) as double
// precision. Faces are emitted when non-empty. `binary` selects
// binary_little_endian, otherwise ascii with round-trip-exact formatting.
void write_ply(const std::string& path, const PlyData& data, bool binary);

}  // namespace travmap
