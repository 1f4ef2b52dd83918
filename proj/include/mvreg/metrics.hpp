#pragma once

#include <iosfwd>
#include <vector>

#include "mvreg/geometry.hpp"
#include "mvreg/types.hpp"

namespace mvreg {

/// Relative pose error over adjacent frame pairs. Table-style summaries
/// include both mean and RMS since either convention appears in the wild.
struct RpeResult {
  std::vector<double> trans_errors;  // meters, one per adjacent pair
  std::vector<double> rot_errors;    // radians
  double mean_trans = 0.0;
  double mean_rot = 0.0;
  double rms_trans = 0.0;
  double rms_rot = 0.0;
};

RpeResult rpe(const std::vector<Posed>& estimated, const std::vector<Posed>& reference);

enum class AlignMode {
  Translation,  // subtract centroid difference (the default convention here)
  Rigid,        // full SE(3) fit of estimate onto reference
};

struct ApeResult {
  std::vector<double> errors;  // meters, one per frame
  double mean = 0.0;
  double rms = 0.0;
};

ApeResult ape(const std::vector<Posed>& estimated, const std::vector<Posed>& reference,
              AlignMode mode = AlignMode::Translation);

/// Distance from each reconstructed point to its nearest ground-truth point.
struct StructuralResult {
  std::vector<double> distances;  // meters, one per reconstructed point
  double mean = 0.0;
  double median = 0.0;
  double p95 = 0.0;
};

StructuralResult structural_error(const PointCloud& reconstructed, const PointCloud& ground_truth);

// CSV exports, one data row per pair/frame/point, header row always present.
void write_rpe_csv(std::ostream& out, const RpeResult& result);
void write_ape_csv(std::ostream& out, const ApeResult& result);
void write_structural_csv(std::ostream& out, const StructuralResult& result);

}  // namespace mvreg
