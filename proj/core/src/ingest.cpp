#include "travmap/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <utility>

#include "travmap/errors.hpp"
#include "travmap/ply.hpp"

namespace travmap {

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInput(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

// strtod over the whole token (leading/trailing blanks tolerated); "nan" and
// "inf" lex successfully and are handled by the caller's finiteness policy.
bool lex_double(const std::string& token, double& out) {
  const char* s = token.c_str();
  char* end = nullptr;
  out = std::strtod(s, &end);
  if (end == s) return false;
  while (*end == ' ' || *end == '\t') ++end;
  return *end == '\0';
}

ScanFrame load_scan_ply(const std::string& path, std::size_t* dropped) {
  const PlyData ply = read_ply(path);
  ScanFrame frame;
  frame.points.reserve(ply.points.size());
  if (ply.has_intensity()) frame.intensities.reserve(ply.points.size());
  std::size_t drop_count = 0;
  for (std::size_t i = 0; i < ply.points.size(); ++i) {
    const Vec3& p = ply.points[i];
    const double intensity = ply.has_intensity() ? ply.intensities[i] : 0.0;
    if (!p.allFinite() || !std::isfinite(intensity)) {
      ++drop_count;
      continue;
    }
    frame.points.push_back(p);
    if (ply.has_intensity()) frame.intensities.push_back(intensity);
  }
  if (dropped) *dropped = drop_count;
  if (frame.points.empty()) throw EmptyScan(path);
  return frame;
}

ScanFrame load_scan_csv(const std::string& path, std::size_t* dropped) {
  const auto lines = read_lines(path);
  ScanFrame frame;
  std::size_t drop_count = 0;
  std::size_t schema_fields = 0;  // 0 until the first non-empty row fixes it
  for (std::size_t li = 0; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const auto fields = split_csv(lines[li]);
    if (fields.size() != 3 && fields.size() != 4) {
      throw MalformedFile(path, li + 1, "expected x,y,z[,intensity], got " +
                                            std::to_string(fields.size()) + " fields");
    }
    if (schema_fields == 0) schema_fields = fields.size();
    if (fields.size() != schema_fields) {
      throw MalformedFile(path, li + 1, "inconsistent column count");
    }
    double v[4] = {0, 0, 0, 0};
    for (std::size_t f = 0; f < fields.size(); ++f) {
      if (!lex_double(fields[f], v[f])) {
        throw MalformedFile(path, li + 1, "non-numeric field '" + fields[f] + "'");
      }
    }
    bool finite = true;
    for (std::size_t f = 0; f < fields.size(); ++f) finite = finite && std::isfinite(v[f]);
    if (!finite) {
      ++drop_count;
      continue;
    }
    frame.points.emplace_back(v[0], v[1], v[2]);
    if (schema_fields == 4) frame.intensities.push_back(v[3]);
  }
  if (dropped) *dropped = drop_count;
  if (frame.points.empty()) throw EmptyScan(path);
  return frame;
}

}  // namespace

ScanFormat scan_format_for(const std::string& path) {
  const std::size_t dot = path.rfind('.');
  if (dot != std::string::npos) {
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });
    if (ext == "ply") return ScanFormat::Ply;
  }
  return ScanFormat::XyzCsv;
}

ScanFrame load_scan(const std::string& path, ScanFormat format, std::size_t* dropped) {
  if (format == ScanFormat::Ply) return load_scan_ply(path, dropped);
  return load_scan_csv(path, dropped);
}

Trajectory::Trajectory(std::vector<Pose> samples) : samples_(std::move(samples)) {
  if (samples_.empty()) throw Error("trajectory has no samples");
  for (std::size_t i = 1; i < samples_.size(); ++i) {
    if (!(samples_[i].t > samples_[i - 1].t)) throw NonMonotonicTimestamps(i);
  }
}

Trajectory load_trajectory(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "t,x,y,z,qw,qx,qy,qz") {
    throw MalformedFile(path, 1, "expected header 't,x,y,z,qw,qx,qy,qz'");
  }
  std::vector<Pose> samples;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const auto fields = split_csv(lines[li]);
    if (fields.size() != 8) {
      throw MalformedFile(path, li + 1,
                          "expected 8 fields, got " + std::to_string(fields.size()));
    }
    double v[8];
    for (std::size_t f = 0; f < 8; ++f) {
      if (!lex_double(fields[f], v[f]) || !std::isfinite(v[f])) {
        throw MalformedFile(path, li + 1, "bad numeric field '" + fields[f] + "'");
      }
    }
    const Quat q(v[4], v[5], v[6], v[7]);
    if (q.norm() < 1e-12) {
      throw MalformedFile(path, li + 1, "zero-norm quaternion");
    }
    if (!samples.empty() && !(v[0] > samples.back().t)) {
      throw NonMonotonicTimestamps(samples.size());
    }
    samples.emplace_back(v[0], Vec3(v[1], v[2], v[3]), q);  // Pose ctor renormalizes
  }
  if (samples.empty()) throw MalformedFile(path, lines.size(), "no trajectory samples");
  return Trajectory(std::move(samples));
}

void write_trajectory(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("failed to open '" + path + "' for writing");
  out << "t,x,y,z,qw,qx,qy,qz\n";
  char buf[288];
  for (const Pose& p : traj.samples()) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  p.t, p.translation.x(), p.translation.y(), p.translation.z(),
                  p.rotation.w(), p.rotation.x(), p.rotation.y(), p.rotation.z());
    out << buf;
  }
  if (!out) throw Error("failed while writing '" + path + "'");
}

Quat slerp(const Quat& a, const Quat& b, double u) {
  Eigen::Vector4d va(a.w(), a.x(), a.y(), a.z());
  Eigen::Vector4d vb(b.w(), b.x(), b.y(), b.z());
  double dot = va.dot(vb);
  if (dot < 0.0) {  // shortest arc: q and -q are the same rotation
    vb = -vb;
    dot = -dot;
  }
  Eigen::Vector4d v;
  if (dot > 1.0 - 1e-9) {
    v = (1.0 - u) * va + u * vb;  // near-parallel: sin(omega) ~ 0
  } else {
    const double omega = std::acos(std::min(dot, 1.0));
    const double s = std::sin(omega);
    v = (std::sin((1.0 - u) * omega) / s) * va + (std::sin(u * omega) / s) * vb;
  }
  v.normalize();
  return Quat(v[0], v[1], v[2], v[3]);
}

Pose interpolate_pose(const Trajectory& traj, double t) {
  const auto& s = traj.samples();
  if (t < s.front().t || t > s.back().t) throw OutOfRange(t);
  const auto it = std::lower_bound(s.begin(), s.end(), t,
                                   [](const Pose& p, double q) { return p.t < q; });
  if (it->t == t) return *it;
  const Pose& hi = *it;
  const Pose& lo = *(it - 1);
  const double u = (t - lo.t) / (hi.t - lo.t);
  const Vec3 translation = (1.0 - u) * lo.translation + u * hi.translation;
  return Pose(t, translation, slerp(lo.rotation, hi.rotation, u));
}

std::vector<ScanIndexEntry> load_scan_index(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "t,file") {
    throw MalformedFile(path, 1, "expected header 't,file'");
  }
  std::vector<ScanIndexEntry> entries;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const auto fields = split_csv(lines[li]);
    if (fields.size() != 2) {
      throw MalformedFile(path, li + 1,
                          "expected 2 fields, got " + std::to_string(fields.size()));
    }
    ScanIndexEntry e;
    if (!lex_double(fields[0], e.t) || !std::isfinite(e.t) || e.t < 0.0) {
      throw MalformedFile(path, li + 1, "bad timestamp '" + fields[0] + "'");
    }
    if (fields[1].empty()) throw MalformedFile(path, li + 1, "empty file field");
    e.file = fields[1];
    if (!entries.empty() && !(e.t > entries.back().t)) {
      throw MalformedFile(path, li + 1, "scan timestamps must be strictly increasing");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_scan_index(const std::string& path, const std::vector<ScanIndexEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("failed to open '" + path + "' for writing");
  out << "t,file\n";
  char buf[64];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof(buf), "%.17g,", e.t);
    out << buf << e.file << '\n';
  }
  if (!out) throw Error("failed while writing '" + path + "'");
}

}  // namespace travmap
