#include "vslam/geometry/camera.hpp"

#include <cmath>
#include <stdexcept>

namespace vslam {

std::string ToString(DistortionModel model) {
  switch (model) {
    case DistortionModel::kRadTan: return "radtan";
    case DistortionModel::kFisheye: return "fisheye";
    default: return "none";
  }
}

DistortionModel ParseDistortionModel(const std::string& tag) {
  if (tag == "radtan") return DistortionModel::kRadTan;
  if (tag == "fisheye") return DistortionModel::kFisheye;
  if (tag == "none" || tag.empty()) return DistortionModel::kNone;
  throw std::invalid_argument("unknown distortion model '" + tag + "'");
}

namespace {

// Distortion on the normalized plane, with its 2x2 Jacobian.
Vec2 DistortNormalized(const CameraModel& cam, const Vec2& p, Mat2* jac) {
  const double x = p.x();
  const double y = p.y();
  const auto& k = cam.coeffs;
  if (cam.distortion == DistortionModel::kRadTan) {
    const double r2 = x * x + y * y;
    const double radial = 1.0 + k[0] * r2 + k[1] * r2 * r2;
    const double p1 = k[2];
    const double p2 = k[3];
    const Vec2 out(x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x),
                   y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y);
    if (jac) {
      const double drad = k[0] + 2.0 * k[1] * r2;  // d radial / d r2
      (*jac)(0, 0) = radial + x * drad * 2.0 * x + 2.0 * p1 * y + p2 * 6.0 * x;
      (*jac)(0, 1) = x * drad * 2.0 * y + 2.0 * p1 * x + p2 * 2.0 * y;
      (*jac)(1, 0) = y * drad * 2.0 * x + p1 * 2.0 * x + 2.0 * p2 * y;
      (*jac)(1, 1) = radial + y * drad * 2.0 * y + p1 * 6.0 * y + 2.0 * p2 * x;
    }
    return out;
  }
  if (cam.distortion == DistortionModel::kFisheye) {
    const double r = std::sqrt(x * x + y * y);
    if (r < 1e-12) {
      if (jac) jac->setIdentity();
      return p;
    }
    const double th = std::atan(r);
    const double th2 = th * th;
    const double poly = 1.0 + th2 * (k[0] + th2 * (k[1] + th2 * (k[2] + th2 * k[3])));
    const double thd = th * poly;
    const double s = thd / r;
    if (jac) {
      const double dthd_dth =
          1.0 + th2 * (3.0 * k[0] + th2 * (5.0 * k[1] + th2 * (7.0 * k[2] + th2 * 9.0 * k[3])));
      const double dth_dr = 1.0 / (1.0 + r * r);
      const double ds_dr = (dthd_dth * dth_dr * r - thd) / (r * r);
      const Vec2 dr_dp(x / r, y / r);
      *jac = s * Mat2::Identity() + p * (ds_dr * dr_dp.transpose());
    }
    return s * p;
  }
  if (jac) jac->setIdentity();
  return p;
}

}  // namespace

std::optional<Vec2> CameraModel::ProjectUndistorted(const Vec3& p_cam) const {
  if (p_cam.z() <= kMinDepth) return std::nullopt;
  const double inv_z = 1.0 / p_cam.z();
  return Vec2(fx * p_cam.x() * inv_z + cx, fy * p_cam.y() * inv_z + cy);
}

std::optional<Vec2> CameraModel::ProjectDistorted(const Vec3& p_cam) const {
  auto px = ProjectUndistorted(p_cam);
  if (!px) return std::nullopt;
  return Distort(*px);
}

Vec3 CameraModel::Unproject(const Vec2& undist_px) const {
  return Vec3((undist_px.x() - cx) / fx, (undist_px.y() - cy) / fy, 1.0);
}

Vec2 CameraModel::Distort(const Vec2& undist_px) const {
  if (!HasDistortion()) return undist_px;
  const Vec2 n((undist_px.x() - cx) / fx, (undist_px.y() - cy) / fy);
  return NormalizedToPixel(DistortNormalized(*this, n, nullptr));
}

Vec2 CameraModel::Undistort(const Vec2& raw_px) const {
  if (!HasDistortion()) return raw_px;
  const Vec2 target((raw_px.x() - cx) / fx, (raw_px.y() - cy) / fy);
  Vec2 n = target;
  const double tol = 1e-8 / MeanFocal();
  for (int it = 0; it < 20; ++it) {
    Mat2 jac;
    const Vec2 err = DistortNormalized(*this, n, &jac) - target;
    const Vec2 step = jac.partialPivLu().solve(err);
    n -= step;
    if (step.norm() < tol) break;
  }
  return NormalizedToPixel(n);
}

Mat23 CameraModel::ProjectionJacobian(const Vec3& p) const {
  const double iz = 1.0 / p.z();
  const double iz2 = iz * iz;
  Mat23 j;
  j << fx * iz, 0.0, -fx * p.x() * iz2, 0.0, fy * iz, -fy * p.y() * iz2;
  return j;
}

bool CameraModel::InImage(const Vec2& px, double border) const {
  return px.x() >= border && px.y() >= border && px.x() <= width - 1 - border &&
         px.y() <= height - 1 - border;
}

Mat3 StereoRig::Essential() const { return Hat(t_rl.translation()) * t_rl.rotation(); }

std::optional<Vec2> Project(const CameraModel& camera, const Se3Pose& pose_cw, const Vec3& point_w) {
  return camera.ProjectUndistorted(pose_cw * point_w);
}

std::optional<Vec2> ProjectDistorted(const CameraModel& camera, const Se3Pose& pose_cw,
                                     const Vec3& point_w) {
  return camera.ProjectDistorted(pose_cw * point_w);
}

Vec3 Unproject(const CameraModel& camera, const Vec2& undist_px) { return camera.Unproject(undist_px); }

}  // namespace vslam
