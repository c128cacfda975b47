#pragma once

#include "vslam/common/random.hpp"
#include "vslam/common/types.hpp"
#include "vslam/geometry/camera.hpp"
#include "vslam/geometry/se3.hpp"

namespace vslam::test {

Se3Pose RandomPose(Rng& rng, double rot_sigma = 1.0, double trans_sigma = 1.0);

CameraModel PinholeCamera(int width = 640, int height = 480, double f = 400.0);
CameraModel RadTanCamera();
CameraModel FisheyeCamera();

// A point in camera frame with depth in [zmin, zmax] whose projection falls
// inside the image.
Vec3 RandomVisiblePoint(Rng& rng, const CameraModel& camera, double zmin, double zmax);

}  // namespace vslam::test

#include "vslam/imgproc/image.hpp"

namespace vslam::test {

// Random Gaussian-blob texture, rendered analytically so that a subpixel
// shift of the whole pattern is exact.
GrayImage RandomDotImage(int width, int height, std::uint64_t seed, const Vec2& shift = Vec2::Zero(),
                         int dots = 2500, double sigma = 1.6);

}  // namespace vslam::test
