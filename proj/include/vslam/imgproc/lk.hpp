#pragma once

#include <optional>

#include "vslam/common/types.hpp"
#include "vslam/imgproc/pyramid.hpp"

namespace vslam {

struct LkOptions {
  int window = 9;
  int max_iterations = 30;
  double epsilon = 0.01;
  // Minimum eigenvalue of the Hessian with intensities in [0, 1], averaged
  // over the window pixels.
  double min_eigenvalue = 1e-4;
  double border = 4.0;
  // Points whose final mean absolute patch difference (intensities in
  // [0, 1]) exceeds this are lost. Disabled when <= 0.
  double max_residual = 0.0;
};

// Translation-only inverse-compositional Lucas-Kanade, coarse to fine from
// first_level down to last_level. Positions are level-0 pixels. Returns the
// tracked position or nothing when the point is lost. `residual` receives
// the mean absolute patch difference at the final position.
std::optional<Vec2> LkTrack(const ImagePyramid& prev, const ImagePyramid& cur, const Vec2& prev_pt,
                            const Vec2& initial_guess, int first_level, int last_level,
                            const LkOptions& options = {}, double* residual = nullptr);

}  // namespace vslam
