#include "test_util.hpp"

namespace vslam::test {

Se3Pose RandomPose(Rng& rng, double rot_sigma, double trans_sigma) {
  Vec3 phi(rng.Normal(), rng.Normal(), rng.Normal());
  Vec3 t(rng.Normal(), rng.Normal(), rng.Normal());
  return Se3Pose(ExpSO3Quat(rot_sigma * phi), trans_sigma * t);
}

CameraModel PinholeCamera(int width, int height, double f) {
  CameraModel c;
  c.fx = f;
  c.fy = f * 1.01;
  c.cx = 0.5 * width - 2.5;
  c.cy = 0.5 * height + 1.5;
  c.width = width;
  c.height = height;
  return c;
}

CameraModel RadTanCamera() {
  CameraModel c = PinholeCamera(752, 480, 458.0);
  c.distortion = DistortionModel::kRadTan;
  c.coeffs = {-0.28340811, 0.07395907, 0.00019359, 1.76187114e-05};
  return c;
}

CameraModel FisheyeCamera() {
  CameraModel c = PinholeCamera(640, 480, 280.0);
  c.distortion = DistortionModel::kFisheye;
  c.coeffs = {-0.0134, 0.0338, -0.0415, 0.0173};
  return c;
}

Vec3 RandomVisiblePoint(Rng& rng, const CameraModel& camera, double zmin, double zmax) {
  const Vec2 px(rng.Uniform(0.0, camera.width - 1.0), rng.Uniform(0.0, camera.height - 1.0));
  const double z = rng.Uniform(zmin, zmax);
  return z * camera.Unproject(camera.Undistort(px));
}

}  // namespace vslam::test

#include <algorithm>
#include <cmath>
#include <vector>

namespace vslam::test {

GrayImage RandomDotImage(int width, int height, std::uint64_t seed, const Vec2& shift, int dots,
                         double sigma) {
  Rng rng(seed);
  std::vector<double> acc(std::size_t(width) * height, 0.0);
  const int reach = static_cast<int>(std::ceil(3.5 * sigma));
  for (int i = 0; i < dots; ++i) {
    const double x = rng.Uniform(-10, width + 10) + shift.x();
    const double y = rng.Uniform(-10, height + 10) + shift.y();
    const double amp = rng.Uniform(-90, 90);
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    for (int v = y0 - reach; v <= y0 + reach + 1; ++v) {
      if (v < 0 || v >= height) continue;
      for (int u = x0 - reach; u <= x0 + reach + 1; ++u) {
        if (u < 0 || u >= width) continue;
        const double d2 = (u - x) * (u - x) + (v - y) * (v - y);
        acc[std::size_t(v) * width + u] += amp * std::exp(-0.5 * d2 / (sigma * sigma));
      }
    }
  }
  GrayImage img(width, height);
  for (std::size_t i = 0; i < acc.size(); ++i) {
    img.data[i] = static_cast<std::uint8_t>(std::clamp(std::lround(128.0 + acc[i]), 0L, 255L));
  }
  return img;
}

}  // namespace vslam::test
