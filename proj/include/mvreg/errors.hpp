#pragma once

#include <stdexcept>
#include <string>

namespace mvreg {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// geometry
struct AngleNearPi : Error {
  using Error::Error;
};
struct NotSymmetric : Error {
  using Error::Error;
};

// stats / plane
struct EmptyInput : Error {
  using Error::Error;
};
struct DegenerateCluster : Error {
  using Error::Error;
};

// objective
struct CholeskyFailure : Error {
  using Error::Error;
};

// solver
struct InvalidProblem : Error {
  using Error::Error;
};
struct SingularNormalEquations : Error {
  using Error::Error;
};

// voxelmap / pipeline / metrics
struct LengthMismatch : Error {
  using Error::Error;
};
struct NoActiveVoxels : Error {
  using Error::Error;
};

// io
struct ParseError : Error {
  using Error::Error;
};
struct UnsupportedFormat : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct NonUnitQuaternion : Error {
  using Error::Error;
};

}  // namespace mvreg
