#pragma once

#include <span>

#include "vslam/common/types.hpp"
#include "vslam/geometry/se3.hpp"

namespace vslam {

// dst ~ scale * R * src + t.
struct Similarity3 {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 operator*(const Vec3& p) const { return scale * (rotation * p) + translation; }
  Se3Pose ApplyTo(const Se3Pose& pose) const;
};

// Least-squares similarity (or rigid, with_scale = false) alignment of two
// point sets. Needs >= 3 points; degenerate sets give an arbitrary rotation
// about the degenerate axis.
Similarity3 Umeyama(std::span<const Vec3> src, std::span<const Vec3> dst, bool with_scale);

}  // namespace vslam
