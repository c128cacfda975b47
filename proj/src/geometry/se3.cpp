#include "vslam/geometry/se3.hpp"

#include <cmath>

namespace vslam {

Mat3 Hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Quat ExpSO3Quat(const Vec3& phi) {
  const double theta = phi.norm();
  if (theta < 1e-10) {
    Quat q(1.0, 0.5 * phi.x(), 0.5 * phi.y(), 0.5 * phi.z());
    q.normalize();
    return q;
  }
  const double half = 0.5 * theta;
  const Vec3 v = std::sin(half) / theta * phi;
  return Quat(std::cos(half), v.x(), v.y(), v.z());
}

Mat3 ExpSO3(const Vec3& phi) { return ExpSO3Quat(phi).toRotationMatrix(); }

Vec3 LogSO3(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  const Vec3 v = q.vec();
  const double sin_half = v.norm();
  if (sin_half < 1e-10) {
    // theta ~ 2 sin_half, axis*theta ~ 2 v / w.
    return 2.0 / q.w() * v;
  }
  const double theta = 2.0 * std::atan2(sin_half, q.w());
  return theta / sin_half * v;
}

Vec3 LogSO3(const Mat3& R) { return LogSO3(Quat(R)); }

Mat3 LeftJacobianSO3(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 K = Hat(phi);
  if (theta < 1e-6) return Mat3::Identity() + 0.5 * K + K * K / 6.0;
  const double t2 = theta * theta;
  return Mat3::Identity() + (1.0 - std::cos(theta)) / t2 * K +
         (theta - std::sin(theta)) / (t2 * theta) * K * K;
}

Mat3 LeftJacobianInvSO3(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 K = Hat(phi);
  if (theta < 1e-6) return Mat3::Identity() - 0.5 * K + K * K / 12.0;
  const double t2 = theta * theta;
  const double coeff =
      1.0 / t2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() - 0.5 * K + coeff * K * K;
}

Se3Pose::Se3Pose(const Quat& q, const Vec3& t) : q_(q.normalized()), t_(t) {}

Se3Pose::Se3Pose(const Mat3& R, const Vec3& t) : q_(Quat(R).normalized()), t_(t) {}

Se3Pose Se3Pose::FromMatrix(const Mat4& m) {
  return Se3Pose(Mat3(m.block<3, 3>(0, 0)), Vec3(m.block<3, 1>(0, 3)));
}

Se3Pose Se3Pose::Exp(const Vec6& xi) {
  const Vec3 rho = xi.head<3>();
  const Vec3 phi = xi.tail<3>();
  return Se3Pose(ExpSO3Quat(phi), LeftJacobianSO3(phi) * rho);
}

Vec6 Se3Pose::Log() const {
  Vec6 xi;
  const Vec3 phi = LogSO3(q_);
  xi.head<3>() = LeftJacobianInvSO3(phi) * t_;
  xi.tail<3>() = phi;
  return xi;
}

Mat4 Se3Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.block<3, 3>(0, 0) = rotation();
  m.block<3, 1>(0, 3) = t_;
  return m;
}

Se3Pose Se3Pose::inverse() const {
  const Quat qi = q_.conjugate();
  return Se3Pose(qi, -(qi * t_));
}

Se3Pose Se3Pose::operator*(const Se3Pose& other) const {
  return Se3Pose(q_ * other.q_, q_ * other.t_ + t_);
}

Mat6 Se3Pose::Adjoint() const {
  Mat6 ad = Mat6::Zero();
  const Mat3 R = rotation();
  ad.block<3, 3>(0, 0) = R;
  ad.block<3, 3>(0, 3) = Hat(t_) * R;
  ad.block<3, 3>(3, 3) = R;
  return ad;
}

Mat6 SmallAdjoint(const Vec6& xi) {
  Mat6 ad = Mat6::Zero();
  const Mat3 rho_hat = Hat(xi.head<3>());
  const Mat3 phi_hat = Hat(xi.tail<3>());
  ad.block<3, 3>(0, 0) = phi_hat;
  ad.block<3, 3>(0, 3) = rho_hat;
  ad.block<3, 3>(3, 3) = phi_hat;
  return ad;
}

double RotationDistance(const Se3Pose& a, const Se3Pose& b) {
  return LogSO3(a.quaternion().conjugate() * b.quaternion()).norm();
}

}  // namespace vslam
