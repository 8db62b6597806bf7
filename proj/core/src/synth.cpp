#include "travmap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "travmap/errors.hpp"
#include "travmap/parallel.hpp"

namespace travmap {

namespace {

const TerrainRegion* region_at(const TerrainSpec& spec, double x, double y) {
  for (const TerrainRegion& r : spec.regions) {
    if (r.contains(x, y)) return &r;  // interiors are disjoint; first edge-match wins
  }
  return nullptr;
}

// height gradient of the smooth region kinds; walls and flats are 0
Eigen::Vector2d height_gradient(const TerrainRegion& r, double x, double y) {
  switch (r.kind) {
    case RegionKind::Ramp: {
      const double g = std::tan(r.beta);
      return {g * std::cos(r.heading), g * std::sin(r.heading)};
    }
    case RegionKind::Rough: {
      const double w = 2.0 * kPi / r.wavelength;
      return {r.amplitude * w * std::cos(w * x) * std::sin(w * y),
              r.amplitude * w * std::sin(w * x) * std::cos(w * y)};
    }
    case RegionKind::Flat:
    case RegionKind::Wall:
      return {0.0, 0.0};
  }
  return {0.0, 0.0};
}

// --- deterministic per-ray noise -----------------------------------------

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double unit_double(std::uint64_t bits) {
  return double(bits >> 11) * 0x1.0p-53;  // [0, 1)
}

// One standard-normal draw from a (seed, ray) pair via Box-Muller; avoids the
// implementation-defined stream of std::normal_distribution.
double seeded_gaussian(std::uint64_t seed, std::uint64_t ray) {
  std::uint64_t state = seed ^ (0xD1B54A32D192ED03ull * (ray + 1));
  const double u1 = std::max(unit_double(splitmix64(state)), 0x1.0p-60);
  const double u2 = unit_double(splitmix64(state));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

}  // namespace

void validate_terrain(const TerrainSpec& spec) {
  if (spec.regions.empty()) throw ConfigError("terrain needs at least one region");
  for (std::size_t i = 0; i < spec.regions.size(); ++i) {
    const TerrainRegion& r = spec.regions[i];
    const std::string where = "region " + std::to_string(i);
    if (!(r.x0 < r.x1) || !(r.y0 < r.y1)) {
      throw ConfigError(where + ": extent rectangle is empty");
    }
    for (double v : {r.x0, r.x1, r.y0, r.y1, r.z0, r.beta, r.heading, r.amplitude,
                     r.wavelength, r.height, r.thickness}) {
      if (!std::isfinite(v)) throw ConfigError(where + ": non-finite parameter");
    }
    switch (r.kind) {
      case RegionKind::Flat:
        break;
      case RegionKind::Ramp:
        if (!(r.beta > 0.0) || !(r.beta < 60.0 * kPi / 180.0)) {
          throw ConfigError(where + ": ramp grade must lie in (0, 60) degrees");
        }
        break;
      case RegionKind::Rough:
        if (!(r.amplitude >= 0.0)) throw ConfigError(where + ": negative amplitude");
        if (!(r.wavelength > 0.0)) throw ConfigError(where + ": wavelength must be > 0");
        break;
      case RegionKind::Wall:
        if (!(r.height > 0.0)) throw ConfigError(where + ": wall height must be > 0");
        if (!(r.thickness > 0.0)) throw ConfigError(where + ": wall thickness must be > 0");
        break;
    }
  }
  for (std::size_t i = 0; i < spec.regions.size(); ++i) {
    for (std::size_t j = i + 1; j < spec.regions.size(); ++j) {
      const TerrainRegion& a = spec.regions[i];
      const TerrainRegion& b = spec.regions[j];
      const bool overlap = a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1;
      if (overlap) {
        throw ConfigError("regions " + std::to_string(i) + " and " + std::to_string(j) +
                          " overlap");
      }
    }
  }
}

double terrain_height(const TerrainSpec& spec, double x, double y) {
  const TerrainRegion* r = region_at(spec, x, y);
  if (!r) throw OutsideTerrain(x, y);
  switch (r->kind) {
    case RegionKind::Flat:
      return r->z0;
    case RegionKind::Ramp: {
      const double s = (x - r->x0) * std::cos(r->heading) + (y - r->y0) * std::sin(r->heading);
      return r->z0 + std::tan(r->beta) * s;
    }
    case RegionKind::Rough: {
      const double w = 2.0 * kPi / r->wavelength;
      return r->z0 + r->amplitude * std::sin(w * x) * std::sin(w * y);
    }
    case RegionKind::Wall: {
      // raised band across the rectangle's long axis, centered on it
      const bool along_x = (r->x1 - r->x0) >= (r->y1 - r->y0);
      const double d = along_x ? std::abs(y - 0.5 * (r->y0 + r->y1))
                               : std::abs(x - 0.5 * (r->x0 + r->x1));
      return r->z0 + (d <= r->thickness / 2.0 ? r->height : 0.0);
    }
  }
  throw OutsideTerrain(x, y);
}

double analytic_slope(const TerrainSpec& spec, double x, double y) {
  const TerrainRegion* r = region_at(spec, x, y);
  if (!r) throw OutsideTerrain(x, y);
  const Eigen::Vector2d g = height_gradient(*r, x, y);
  return std::acos(1.0 / std::sqrt(1.0 + g.squaredNorm()));
}

ScanFrame virtual_scan(const TerrainSpec& spec, const Pose& pose,
                       const LidarModel& lidar, std::uint64_t seed, int threads) {
  if (lidar.rings < 1 || !(lidar.azimuth_step > 0.0) || !(lidar.max_range > 0.0)) {
    throw ConfigError("lidar model parameters out of range");
  }
  const int n_az = std::max(1, int(std::llround(2.0 * kPi / lidar.azimuth_step)));
  const std::size_t n_rays = std::size_t(lidar.rings) * std::size_t(n_az);
  constexpr double kMarchStep = 0.05;
  constexpr double kBisectTol = 1e-4;

  // signed height of the ray point above the terrain; false outside regions
  const Vec3 origin = pose.translation;
  auto above = [&](const Vec3& dir_world, double s, double& out) {
    const Vec3 p = origin + s * dir_world;
    const TerrainRegion* r = region_at(spec, p.x(), p.y());
    if (!r) return false;
    out = p.z() - terrain_height(spec, p.x(), p.y());
    return true;
  };

  std::vector<double> ranges(n_rays, -1.0);
  std::vector<Vec3> dirs_sensor(n_rays);

  parallel_for(n_rays, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t ray = begin; ray < end; ++ray) {
      const int ring = int(ray / std::size_t(n_az));
      const int az = int(ray % std::size_t(n_az));
      const double elev =
          lidar.rings > 1
              ? lidar.elev_min + double(ring) * (lidar.elev_max - lidar.elev_min) /
                                     double(lidar.rings - 1)
              : lidar.elev_min;
      const double azimuth = double(az) * lidar.azimuth_step;
      const Vec3 dir(std::cos(elev) * std::cos(azimuth),
                     std::cos(elev) * std::sin(azimuth), std::sin(elev));
      dirs_sensor[ray] = dir;
      const Vec3 dir_world = pose.rotation * dir;

      double prev_s = 0.0, prev_diff = 0.0;
      bool prev_ok = above(dir_world, 0.0, prev_diff);
      if (prev_ok && prev_diff <= 0.0) prev_ok = false;  // sensor at/below ground

      for (double s = kMarchStep; s <= lidar.max_range; s += kMarchStep) {
        double diff = 0.0;
        if (!above(dir_world, s, diff)) {
          prev_ok = false;
          continue;
        }
        if (prev_ok && diff <= 0.0) {
          // bracketed crossing: bisect [prev_s, s]
          double lo = prev_s, hi = s;
          while (hi - lo > kBisectTol) {
            const double mid = 0.5 * (lo + hi);
            double dmid = 0.0;
            if (!above(dir_world, mid, dmid)) break;  // grazing a region edge
            (dmid <= 0.0 ? hi : lo) = mid;
          }
          double range = 0.5 * (lo + hi);
          if (lidar.noise_sigma > 0.0) {
            range += lidar.noise_sigma * seeded_gaussian(seed, ray);
          }
          if (range > 0.0) ranges[ray] = range;
          break;
        }
        prev_ok = diff > 0.0;
        prev_s = s;
        prev_diff = diff;
      }
    }
  });

  ScanFrame frame;
  frame.t = pose.t;
  for (std::size_t ray = 0; ray < n_rays; ++ray) {
    if (ranges[ray] < 0.0) continue;
    frame.points.push_back(dirs_sensor[ray] * ranges[ray]);
  }
  return frame;
}

Trajectory gen_trajectory(const TerrainSpec& spec,
                          const std::vector<Eigen::Vector2d>& path, double speed,
                          double clearance) {
  if (path.size() < 2) throw ConfigError("trajectory path needs at least 2 points");
  if (!(speed > 0.0)) throw ConfigError("trajectory speed must be > 0");
  if (!(clearance >= 0.0)) throw ConfigError("trajectory clearance must be >= 0");

  std::vector<double> cumulative{0.0};
  for (std::size_t i = 1; i < path.size(); ++i) {
    const double len = (path[i] - path[i - 1]).norm();
    if (!(len > 0.0)) throw ConfigError("trajectory path has coincident consecutive points");
    cumulative.push_back(cumulative.back() + len);
  }
  const double total = cumulative.back();

  constexpr double kDt = 0.1;  // 10 Hz
  const long n = long(std::floor(total / speed / kDt + 1e-9)) + 1;

  std::vector<Pose> poses;
  poses.reserve(std::size_t(n));
  for (long k = 0; k < n; ++k) {
    const double t = double(k) * kDt;
    const double s = std::min(speed * t, total);
    // segment entered at arc length s (the corner itself belongs to the next segment)
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), s);
    std::size_t seg = std::min(std::size_t(it - cumulative.begin()), path.size() - 1);
    const Eigen::Vector2d a = path[seg - 1];
    const Eigen::Vector2d b = path[seg];
    const double u = (s - cumulative[seg - 1]) / (cumulative[seg] - cumulative[seg - 1]);
    const Eigen::Vector2d xy = a + u * (b - a);
    const Eigen::Vector2d tangent = (b - a).normalized();
    const double yaw = std::atan2(tangent.y(), tangent.x());
    const double z = terrain_height(spec, xy.x(), xy.y()) + clearance;
    poses.emplace_back(t, Vec3(xy.x(), xy.y(), z),
                       Quat(std::cos(yaw / 2.0), 0.0, 0.0, std::sin(yaw / 2.0)));
  }
  return Trajectory(std::move(poses));
}

namespace {

using nlohmann::json;

void require_keys(const json& obj, std::initializer_list<const char*> allowed,
                  const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* k) { return key == k; }) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

double num(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError("missing key '" + std::string(key) + "' in " + where);
  if (!obj[key].is_number()) throw ConfigError("key '" + std::string(key) + "' in " + where + " must be a number");
  return obj[key].get<double>();
}

double num_or(const json& obj, const char* key, double fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) throw ConfigError("key '" + std::string(key) + "' in " + where + " must be a number");
  return obj[key].get<double>();
}

constexpr double kDeg = kPi / 180.0;

}  // namespace

SceneSpec load_scene(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInput(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("scene file " + path + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("scene file must hold a JSON object");
  require_keys(doc, {"seed", "regions", "path", "speed", "clearance", "lidar"}, "scene");

  SceneSpec scene;
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
    scene.terrain.seed = doc["seed"].get<std::uint64_t>();
  }

  if (!doc.contains("regions") || !doc["regions"].is_array()) {
    throw ConfigError("scene needs a 'regions' array");
  }
  std::size_t index = 0;
  for (const json& jr : doc["regions"]) {
    const std::string where = "regions[" + std::to_string(index++) + "]";
    if (!jr.is_object()) throw ConfigError(where + " must be an object");
    if (!jr.contains("kind") || !jr["kind"].is_string()) {
      throw ConfigError(where + " needs a string 'kind'");
    }
    const std::string kind = jr["kind"].get<std::string>();
    TerrainRegion r;
    if (!jr.contains("rect") || !jr["rect"].is_array() || jr["rect"].size() != 4) {
      throw ConfigError(where + " needs 'rect': [x0, y0, x1, y1]");
    }
    for (const json& v : jr["rect"]) {
      if (!v.is_number()) throw ConfigError(where + ": rect entries must be numbers");
    }
    r.x0 = jr["rect"][0].get<double>();
    r.y0 = jr["rect"][1].get<double>();
    r.x1 = jr["rect"][2].get<double>();
    r.y1 = jr["rect"][3].get<double>();
    r.z0 = num_or(jr, "z0", 0.0, where);

    if (kind == "flat") {
      r.kind = RegionKind::Flat;
      require_keys(jr, {"kind", "rect", "z0"}, where);
    } else if (kind == "ramp") {
      r.kind = RegionKind::Ramp;
      require_keys(jr, {"kind", "rect", "z0", "beta_deg", "heading_deg"}, where);
      r.beta = num(jr, "beta_deg", where) * kDeg;
      r.heading = num_or(jr, "heading_deg", 0.0, where) * kDeg;
    } else if (kind == "rough") {
      r.kind = RegionKind::Rough;
      require_keys(jr, {"kind", "rect", "z0", "amplitude", "wavelength"}, where);
      r.amplitude = num(jr, "amplitude", where);
      r.wavelength = num(jr, "wavelength", where);
    } else if (kind == "wall") {
      r.kind = RegionKind::Wall;
      require_keys(jr, {"kind", "rect", "z0", "height", "thickness"}, where);
      r.height = num(jr, "height", where);
      r.thickness = num(jr, "thickness", where);
    } else {
      throw ConfigError(where + ": unknown kind '" + kind + "'");
    }
    scene.terrain.regions.push_back(r);
  }
  validate_terrain(scene.terrain);

  if (!doc.contains("path") || !doc["path"].is_array() || doc["path"].size() < 2) {
    throw ConfigError("scene needs a 'path' array of >= 2 [x, y] points");
  }
  for (const json& jp : doc["path"]) {
    if (!jp.is_array() || jp.size() != 2 || !jp[0].is_number() || !jp[1].is_number()) {
      throw ConfigError("path entries must be [x, y] number pairs");
    }
    scene.path.emplace_back(jp[0].get<double>(), jp[1].get<double>());
  }
  scene.speed = num_or(doc, "speed", 1.0, "scene");
  scene.clearance = num_or(doc, "clearance", 0.2, "scene");
  if (!(scene.speed > 0.0)) throw ConfigError("speed must be > 0");
  if (!(scene.clearance >= 0.0)) throw ConfigError("clearance must be >= 0");

  if (doc.contains("lidar")) {
    const json& jl = doc["lidar"];
    if (!jl.is_object()) throw ConfigError("'lidar' must be an object");
    require_keys(jl,
                 {"rings", "elev_min_deg", "elev_max_deg", "azimuth_step_deg",
                  "max_range", "noise_sigma"},
                 "lidar");
    LidarModel& L = scene.lidar;
    if (jl.contains("rings")) {
      if (!jl["rings"].is_number_integer()) throw ConfigError("lidar.rings must be an integer");
      L.rings = jl["rings"].get<int>();
      if (L.rings < 1) throw ConfigError("lidar.rings must be >= 1");
    }
    L.elev_min = num_or(jl, "elev_min_deg", L.elev_min / kDeg, "lidar") * kDeg;
    L.elev_max = num_or(jl, "elev_max_deg", L.elev_max / kDeg, "lidar") * kDeg;
    L.azimuth_step = num_or(jl, "azimuth_step_deg", L.azimuth_step / kDeg, "lidar") * kDeg;
    L.max_range = num_or(jl, "max_range", L.max_range, "lidar");
    L.noise_sigma = num_or(jl, "noise_sigma", L.noise_sigma, "lidar");
    if (!(L.azimuth_step > 0.0) || !(L.max_range > 0.0) || !(L.noise_sigma >= 0.0) ||
        !(L.elev_max >= L.elev_min)) {
      throw ConfigError("lidar parameters out of range");
    }
  }
  return scene;
}

}  // namespace travmap
