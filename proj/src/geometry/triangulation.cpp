#include "vslam/geometry/triangulation.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

#include "vslam/geometry/camera.hpp"

namespace vslam {

double ParallaxDeg(const Se3Pose& pose_a_cw, const Se3Pose& pose_b_cw, const Vec3& bearing_a,
                   const Vec3& bearing_b) {
  const Vec3 ray_a = pose_a_cw.quaternion().conjugate() * bearing_a;
  const Vec3 ray_b = pose_b_cw.quaternion().conjugate() * bearing_b;
  const double c = ray_a.dot(ray_b) / (ray_a.norm() * ray_b.norm());
  return std::acos(std::clamp(c, -1.0, 1.0)) * kRadToDeg;
}

std::optional<Vec3> Triangulate(const Se3Pose& pose_a_cw, const Se3Pose& pose_b_cw,
                                const Vec3& bearing_a, const Vec3& bearing_b,
                                double min_parallax_deg) {
  if (ParallaxDeg(pose_a_cw, pose_b_cw, bearing_a, bearing_b) < min_parallax_deg) {
    return std::nullopt;
  }
  Eigen::Matrix<double, 3, 4> pa;
  Eigen::Matrix<double, 3, 4> pb;
  pa << pose_a_cw.rotation(), pose_a_cw.translation();
  pb << pose_b_cw.rotation(), pose_b_cw.translation();

  Mat4 a;
  a.row(0) = bearing_a.x() * pa.row(2) - bearing_a.z() * pa.row(0);
  a.row(1) = bearing_a.y() * pa.row(2) - bearing_a.z() * pa.row(1);
  a.row(2) = bearing_b.x() * pb.row(2) - bearing_b.z() * pb.row(0);
  a.row(3) = bearing_b.y() * pb.row(2) - bearing_b.z() * pb.row(1);

  // Row scaling improves conditioning without changing the solution.
  for (int r = 0; r < 4; ++r) {
    const double n = a.row(r).norm();
    if (n > 0.0) a.row(r) /= n;
  }
  Eigen::JacobiSVD<Mat4> svd(a, Eigen::ComputeFullV);
  const Vec4 h = svd.matrixV().col(3);
  if (std::abs(h.w()) < 1e-14) return std::nullopt;
  const Vec3 point = h.head<3>() / h.w();

  const double za = (pose_a_cw * point).z();
  const double zb = (pose_b_cw * point).z();
  if (za <= kMinDepth || zb <= kMinDepth) return std::nullopt;
  return point;
}

}  // namespace vslam
