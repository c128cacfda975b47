#include "vslam/frontend/keypoint.hpp"

namespace vslam {

void MotionModel::Update(const Se3Pose& pose_wc, double timestamp) {
  if (valid_) {
    const double dt = timestamp - prev_timestamp_;
    if (dt > 0.0) {
      velocity_ = prev_pose_wc_.inverse() * pose_wc;
      prev_dt_ = dt;
      has_velocity_ = true;
    }
  }
  prev_pose_wc_ = pose_wc;
  prev_timestamp_ = timestamp;
  valid_ = true;
}

Se3Pose MotionModel::Predict(double timestamp) const {
  if (!valid_ || !has_velocity_) return prev_pose_wc_;
  const double dt = timestamp - prev_timestamp_;
  const double ratio = prev_dt_ > 0.0 ? dt / prev_dt_ : 1.0;
  if (std::abs(ratio - 1.0) < 1e-9) return prev_pose_wc_ * velocity_;
  return prev_pose_wc_ * Se3Pose::Exp(ratio * velocity_.Log());
}

}  // namespace vslam
