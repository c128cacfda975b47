#pragma once

#include <span>
#include <vector>

#include "vslam/common/random.hpp"
#include "vslam/common/types.hpp"
#include "vslam/geometry/camera.hpp"
#include "vslam/geometry/epipolar.hpp"
#include "vslam/geometry/se3.hpp"

namespace vslam {

// Minimal absolute pose from three world points and their bearings (any
// positive scale). Returns up to four candidate T_cw; empty when the world
// points are collinear or the configuration has no real solution.
std::vector<Se3Pose> SolveP3P(std::span<const Vec3> points_w, std::span<const Vec3> bearings);

struct P3PRansacResult {
  bool success = false;
  Se3Pose pose_cw;
  std::vector<bool> inliers;
  int num_inliers = 0;
};

// P3P inside RANSAC. Each sample uses three points for the model and a
// fourth one to disambiguate the candidate poses. Inliers are scored on
// undistorted reprojection error.
P3PRansacResult EstimatePoseP3PRansac(std::span<const Vec3> points_w,
                                      std::span<const Vec2> undist_px, const CameraModel& camera,
                                      const RansacOptions& options, Rng& rng);

}  // namespace vslam
