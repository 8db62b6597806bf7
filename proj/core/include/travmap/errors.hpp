#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace travmap {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// ---- file ingestion ----

class MalformedFile : public Error {
public:
  MalformedFile(const std::string& path, std::size_t line, const std::string& reason)
      : Error(path + ":" + std::to_string(line) + ": " + reason), line(line) {}
  std::size_t line;
};

class EmptyScan : public Error {
public:
  explicit EmptyScan(const std::string& path) : Error("scan contains no points: " + path) {}
};

class MissingInput : public Error {
public:
  explicit MissingInput(const std::string& path) : Error("missing input: " + path), path(path) {}
  std::string path;
};

class NonMonotonicTimestamps : public Error {
public:
  explicit NonMonotonicTimestamps(std::size_t index)
      : Error("trajectory timestamps not strictly increasing at sample " + std::to_string(index)),
        index(index) {}
  std::size_t index;
};

class OutOfRange : public Error {
public:
  explicit OutOfRange(double t)
      : Error("query time " + std::to_string(t) + " outside trajectory span"), t(t) {}
  double t;
};

// ---- aggregation / reconstruction ----

class NoUsableScans : public Error {
public:
  NoUsableScans() : Error("all scans fall outside the trajectory span") {}
};

class TooFewPoints : public Error {
public:
  using Error::Error;
};

class InsufficientPoints : public Error {
public:
  using Error::Error;
};

class EmptySurface : public Error {
public:
  EmptySurface() : Error("implicit function never crosses zero; no surface extracted") {}
};

// ---- features / labeling ----

class NonUnitNormal : public Error {
public:
  explicit NonUnitNormal(double norm)
      : Error("normal has norm " + std::to_string(norm) + ", expected 1 within 1e-6") {}
};

class TooFewVertices : public Error {
public:
  using Error::Error;
};

class EmptyTrajectoryOverlap : public Error {
public:
  EmptyTrajectoryOverlap() : Error("trajectory footprint covers no occupied voxel of the grid") {}
};

class TooFewTrajectoryVoxels : public Error {
public:
  explicit TooFewTrajectoryVoxels(std::size_t n)
      : Error("reference fit needs at least 4 trajectory voxels, got " + std::to_string(n)) {}
};

class SingularCovariance : public Error {
public:
  SingularCovariance() : Error("covariance not positive definite") {}
};

// ---- evaluation ----

class GridSpecMismatch : public Error {
public:
  GridSpecMismatch() : Error("prediction and ground-truth grids have different specs") {}
};

class UndefinedMetric : public Error {
public:
  using Error::Error;
};

// ---- synthesis / configuration ----

class OutsideTerrain : public Error {
public:
  OutsideTerrain(double x, double y)
      : Error("point (" + std::to_string(x) + ", " + std::to_string(y) +
              ") lies outside every terrain region") {}
};

class ConfigError : public Error {
public:
  using Error::Error;
};

} // namespace travmap
