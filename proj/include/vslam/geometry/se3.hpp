#pragma once

#include "vslam/common/types.hpp"

namespace vslam {

Mat3 Hat(const Vec3& v);

// SO(3) exponential / logarithm on rotation vectors.
Mat3 ExpSO3(const Vec3& phi);
Quat ExpSO3Quat(const Vec3& phi);
Vec3 LogSO3(const Quat& q);
Vec3 LogSO3(const Mat3& R);

// Left Jacobian of SO(3) and its inverse.
Mat3 LeftJacobianSO3(const Vec3& phi);
Mat3 LeftJacobianInvSO3(const Vec3& phi);

// Rigid transform. Tangent vectors are ordered (rho, phi): translational
// part first. The rotation is stored as a unit quaternion and renormalized
// after every composition.
class Se3Pose {
 public:
  Se3Pose() : q_(Quat::Identity()), t_(Vec3::Zero()) {}
  Se3Pose(const Quat& q, const Vec3& t);
  Se3Pose(const Mat3& R, const Vec3& t);

  static Se3Pose Identity() { return {}; }
  static Se3Pose FromMatrix(const Mat4& m);
  static Se3Pose Exp(const Vec6& xi);

  Vec6 Log() const;

  const Quat& quaternion() const { return q_; }
  Mat3 rotation() const { return q_.toRotationMatrix(); }
  const Vec3& translation() const { return t_; }
  Mat4 matrix() const;

  Se3Pose inverse() const;
  Se3Pose operator*(const Se3Pose& other) const;
  Vec3 operator*(const Vec3& p) const { return q_ * p + t_; }

  // Ad_T, such that T * Exp(xi) * T^-1 = Exp(Ad_T xi).
  Mat6 Adjoint() const;

 private:
  Quat q_;
  Vec3 t_;
};

// ad(xi): matrix form of the Lie bracket [xi, .] on se(3).
Mat6 SmallAdjoint(const Vec6& xi);

// Rotation angle between two poses in radians.
double RotationDistance(const Se3Pose& a, const Se3Pose& b);

}  // namespace vslam
