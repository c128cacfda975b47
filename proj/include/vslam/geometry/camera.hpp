#pragma once

#include <array>
#include <optional>
#include <string>

#include "vslam/common/types.hpp"
#include "vslam/geometry/se3.hpp"

namespace vslam {

enum class DistortionModel { kNone, kRadTan, kFisheye };

std::string ToString(DistortionModel model);
DistortionModel ParseDistortionModel(const std::string& tag);

// Minimum camera-frame depth for a point to count as observable.
inline constexpr double kMinDepth = 1e-6;

// Pinhole intrinsics plus a lens distortion model. "Undistorted pixels" are
// pinhole pixels K * (x/z, y/z, 1); "raw pixels" are the distorted image
// coordinates where features are detected and tracked.
struct CameraModel {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  DistortionModel distortion = DistortionModel::kNone;
  // radtan: k1 k2 p1 p2; fisheye: k1 k2 k3 k4.
  std::array<double, 4> coeffs{0.0, 0.0, 0.0, 0.0};

  // Pinhole projection of a camera-frame point to undistorted pixels.
  std::optional<Vec2> ProjectUndistorted(const Vec3& p_cam) const;
  // Projection to raw (distorted) pixels.
  std::optional<Vec2> ProjectDistorted(const Vec3& p_cam) const;
  // Bearing on the normalized plane: ((u - cx)/fx, (v - cy)/fy, 1).
  Vec3 Unproject(const Vec2& undist_px) const;
  Vec2 NormalizedToPixel(const Vec2& xy) const { return {fx * xy.x() + cx, fy * xy.y() + cy}; }

  Vec2 Distort(const Vec2& undist_px) const;
  Vec2 Undistort(const Vec2& raw_px) const;

  // d(pi(p)) / dp for the pinhole part.
  Mat23 ProjectionJacobian(const Vec3& p_cam) const;

  bool InImage(const Vec2& raw_px, double border = 0.0) const;
  double MeanFocal() const { return 0.5 * (fx + fy); }
  bool HasDistortion() const { return distortion != DistortionModel::kNone; }
};

// Left and right camera plus the fixed right-from-left extrinsic.
struct StereoRig {
  CameraModel left;
  CameraModel right;
  Se3Pose t_rl;

  // E such that b_r^T E b_l = 0 for normalized-plane bearings.
  Mat3 Essential() const;
  double Baseline() const { return t_rl.translation().norm(); }
};

// Projects a world point to undistorted pixels. Empty when the point is
// behind the camera (depth <= kMinDepth).
std::optional<Vec2> Project(const CameraModel& camera, const Se3Pose& pose_cw, const Vec3& point_w);
std::optional<Vec2> ProjectDistorted(const CameraModel& camera, const Se3Pose& pose_cw,
                                     const Vec3& point_w);

Vec3 Unproject(const CameraModel& camera, const Vec2& undist_px);

}  // namespace vslam
