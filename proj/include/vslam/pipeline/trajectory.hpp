#pragma once

#include <string>
#include <vector>

#include "vslam/geometry/alignment.hpp"
#include "vslam/geometry/se3.hpp"

namespace vslam {

struct TimedPose {
  double timestamp = 0.0;
  Se3Pose pose_wc;
  bool gap_before = false;  // tracking was reset right before this pose
};

using Trajectory = std::vector<TimedPose>;

// TUM lines "timestamp tx ty tz qx qy qz qw": timestamp with 9 decimals,
// the rest with 9 significant digits. Gaps are written as "# gap" lines.
void WriteTum(const std::string& path, const Trajectory& trajectory);
std::string FormatTum(const Trajectory& trajectory);
Trajectory ReadTum(const std::string& path);
Trajectory ParseTum(const std::string& text);

// Pairs (est index, gt index) by nearest timestamp within max_dt.
std::vector<std::pair<int, int>> Associate(const Trajectory& est, const Trajectory& gt, double max_dt);

enum class AlignMode { kSe3, kSim3 };
AlignMode ParseAlignMode(const std::string& s);

struct EvalResult {
  int pairs = 0;
  double ate_rmse = 0.0;   // meters
  double rpe_trans = 0.0;  // percent
  double rpe_rot = 0.0;    // degrees per meter
  double path_length = 0.0;  // of the associated ground truth
  Similarity3 alignment;
  std::string ToReport() const;
};

// Umeyama alignment of the associated positions, ATE, and RPE over segment
// lengths of 100..800 m (KITTI) or, for paths shorter than 100 m, 10..80%
// of the path length. Throws std::runtime_error with fewer than 3 pairs.
EvalResult Evaluate(const Trajectory& est, const Trajectory& gt, AlignMode align, double max_dt = 0.005);

// Absolute trajectory error of already associated positions under the best
// alignment.
double AlignedRmse(const std::vector<Vec3>& est, const std::vector<Vec3>& gt, bool with_scale,
                   Similarity3* alignment = nullptr);

// Top-down overlay of the aligned estimate and the ground truth, projected
// on the two axes along which the ground truth extends the most.
std::string PlotSvg(const Trajectory& est, const Trajectory& gt, const EvalResult& eval,
                    double max_dt = 0.005);

}  // namespace vslam
