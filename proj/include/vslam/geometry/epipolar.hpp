#pragma once

#include <array>
#include <span>
#include <vector>

#include "vslam/common/random.hpp"
#include "vslam/common/types.hpp"
#include "vslam/geometry/camera.hpp"
#include "vslam/geometry/se3.hpp"

namespace vslam {

struct RansacOptions {
  double threshold_px = 3.0;
  double confidence = 0.99;
  int max_iterations = 200;
  int min_inliers = 5;
};

// Point-to-epipolar-line distance in pixels, for b^T E a = 0. The larger of
// the two one-sided distances, each scaled by the mean focal length.
double EpipolarDistance(const Mat3& essential, const Vec3& bearing_a, const Vec3& bearing_b,
                        const CameraModel& camera);

// Essential matrix of the relative pose T_ba (x_b = R x_a + t).
Mat3 EssentialFromPose(const Se3Pose& t_ba);

// Minimal five-point solver. Returns every real solution (up to 10).
std::vector<Mat3> SolveEssentialFivePoint(std::span<const Vec3> bearings_a,
                                          std::span<const Vec3> bearings_b);

// The four (R, t) candidates of an essential matrix, |t| = 1.
std::array<Se3Pose, 4> DecomposeEssential(const Mat3& essential);

struct RelativePose {
  Se3Pose t_ba;
  int num_cheiral = 0;
};

// Picks the decomposition with the most correspondences in front of both
// cameras. Only entries with mask[i] set participate.
RelativePose RecoverPose(const Mat3& essential, std::span<const Vec3> bearings_a,
                         std::span<const Vec3> bearings_b, const std::vector<bool>& mask);

struct EssentialRansacResult {
  bool success = false;
  Mat3 essential = Mat3::Zero();
  std::vector<bool> inliers;
  int num_inliers = 0;
  int iterations = 0;
};

EssentialRansacResult EstimateEssentialRansac(std::span<const Vec3> bearings_a,
                                              std::span<const Vec3> bearings_b,
                                              const CameraModel& camera,
                                              const RansacOptions& options, Rng& rng);

// Number of RANSAC iterations needed for `confidence` given an inlier ratio.
int RequiredIterations(double inlier_ratio, int sample_size, double confidence, int max_iterations);

}  // namespace vslam
