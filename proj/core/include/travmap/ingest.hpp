#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "travmap/geometry.hpp"

namespace travmap {

// One LiDAR frame in the sensor frame, prior to any global alignment.
struct ScanFrame {
  double t = 0.0;
  std::vector<Vec3> points;
  std::vector<double> intensities;  // empty, or one per point

  bool has_intensity() const { return !intensities.empty(); }
};

enum class ScanFormat { Ply, XyzCsv };

// Picks the format from the file extension: .ply -> Ply, anything else xyz-csv.
ScanFormat scan_format_for(const std::string& path);

// Loads every finite point of a scan file, preserving order. Rows (or PLY
// vertices) containing non-finite coordinates are dropped; the count of
// dropped rows is written to `dropped` when given. The frame timestamp is the
// caller's to assign. Throws MissingInput, MalformedFile, or EmptyScan.
ScanFrame load_scan(const std::string& path, ScanFormat format,
                    std::size_t* dropped = nullptr);

// A time-ordered pose sequence; timestamps are strictly increasing.
class Trajectory {
public:
  explicit Trajectory(std::vector<Pose> samples);

  const std::vector<Pose>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  double t_begin() const { return samples_.front().t; }
  double t_end() const { return samples_.back().t; }
  bool contains(double t) const { return t >= t_begin() && t <= t_end(); }

private:
  std::vector<Pose> samples_;
};

// Reads a csv with header exactly `t,x,y,z,qw,qx,qy,qz`. Quaternions are
// renormalized. Throws MalformedFile and NonMonotonicTimestamps.
Trajectory load_trajectory(const std::string& path);

// Writes the matching csv with round-trip-exact float formatting.
void write_trajectory(const std::string& path, const Trajectory& traj);

// Spherical linear interpolation with the shortest-arc sign convention,
// falling back to normalized linear interpolation when the (sign-corrected)
// quaternion dot product exceeds 1 - 1e-9. Result is unit-norm.
Quat slerp(const Quat& a, const Quat& b, double u);

// Pose at time t: translation interpolated linearly, rotation by slerp
// between the bracketing samples. Exact sample hits return the stored pose.
// Throws OutOfRange outside [t_begin, t_end].
Pose interpolate_pose(const Trajectory& traj, double t);

// Entry of a scan-sequence index: a timestamp and a scan file path (relative
// paths are interpreted against the index file's directory by callers).
struct ScanIndexEntry {
  double t = 0.0;
  std::string file;
};

// Reads a csv with header exactly `t,file` listing the scans of a sequence in
// time order. Throws MalformedFile on bad rows or non-increasing timestamps.
std::vector<ScanIndexEntry> load_scan_index(const std::string& path);

void write_scan_index(const std::string& path, const std::vector<ScanIndexEntry>& entries);

}  // namespace travmap
