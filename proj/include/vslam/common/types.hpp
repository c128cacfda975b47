#pragma once

#include <cstdint>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace vslam {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat26 = Eigen::Matrix<double, 2, 6>;
using Quat = Eigen::Quaterniond;

using KeypointId = std::int64_t;
using KeyframeId = std::int64_t;
using PointId = std::int64_t;

inline constexpr KeypointId kInvalidId = -1;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDegToRad = kPi / 180.0;
inline constexpr double kRadToDeg = 180.0 / kPi;

// 95% quantile of the chi-square distribution with 2 degrees of freedom.
inline constexpr double kChi2Inv95TwoDof = 5.991;

}  // namespace vslam
