#pragma once

#include <filesystem>
#include <vector>

#include "mvreg/geometry.hpp"
#include "mvreg/types.hpp"

namespace mvreg {

/// ASCII or binary_little_endian PLY. Vertex x/y/z may be float or double;
/// any other properties (including lists) are skipped. Point order is
/// preserved. Throws IoError, ParseError, or UnsupportedFormat; never
/// crashes on arbitrary bytes.
PointCloud read_ply(const std::filesystem::path& path);

/// ASCII PLY with double-precision x y z, shortest round-trip formatting,
/// so write followed by read reproduces the doubles bit for bit.
void write_ply(const std::filesystem::path& path, const PointCloud& points);

/// Trajectory text format, one pose per line:
///   index tx ty tz qx qy qz qw
/// Quaternion is scalar-last. Lines starting with '#' are comments. Read
/// renormalizes the quaternion and rejects norms off by more than 1e-3.
std::vector<Posed> read_trajectory(const std::filesystem::path& path);

void write_trajectory(const std::filesystem::path& path, const std::vector<Posed>& poses);

}  // namespace mvreg
