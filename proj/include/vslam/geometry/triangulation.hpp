#pragma once

#include <optional>

#include "vslam/common/types.hpp"
#include "vslam/geometry/se3.hpp"

namespace vslam {

// Linear two-view DLT followed by cheirality and parallax checks. Bearings
// are normalized-plane coordinates (any positive scale works). Returns the
// world point, or nothing when the configuration is degenerate: a depth
// <= kMinDepth in either view or a ray angle below min_parallax_deg.
std::optional<Vec3> Triangulate(const Se3Pose& pose_a_cw, const Se3Pose& pose_b_cw,
                                const Vec3& bearing_a, const Vec3& bearing_b,
                                double min_parallax_deg = 1.0);

// Angle in degrees between the two viewing rays in the world frame.
double ParallaxDeg(const Se3Pose& pose_a_cw, const Se3Pose& pose_b_cw, const Vec3& bearing_a,
                   const Vec3& bearing_b);

}  // namespace vslam
