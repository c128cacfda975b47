#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <vector>

#include "vslam/common/types.hpp"
#include "vslam/geometry/camera.hpp"
#include "vslam/geometry/se3.hpp"
#include "vslam/imgproc/brief.hpp"
#include "vslam/imgproc/pyramid.hpp"

namespace vslam {

// A tracked feature. The id is the track id: it is assigned at detection
// and kept for as long as the feature is tracked, in frames and keyframes.
struct Keypoint {
  KeypointId id = kInvalidId;
  Vec2 raw_px = Vec2::Zero();
  Vec2 undist_px = Vec2::Zero();
  Vec3 bearing = Vec3::UnitZ();  // normalized-plane coordinates of undist_px
  bool is_3d = false;
  PointId map_point_id = kInvalidId;

  bool has_desc = false;
  BriefDescriptor desc;

  // Right-view match, filled by stereo matching on keyframes.
  bool is_stereo = false;
  Vec2 right_raw_px = Vec2::Zero();
  Vec2 right_undist_px = Vec2::Zero();

  // Sets the raw position and the derived undistorted position and bearing.
  void SetRaw(const CameraModel& camera, const Vec2& raw) {
    raw_px = raw;
    undist_px = camera.Undistort(raw);
    bearing = camera.Unproject(undist_px);
  }
};

// Keypoints are stored sorted by id.
inline const Keypoint* FindKeypoint(const std::vector<Keypoint>& kps, KeypointId id) {
  auto it = std::lower_bound(kps.begin(), kps.end(), id,
                             [](const Keypoint& k, KeypointId v) { return k.id < v; });
  return it != kps.end() && it->id == id ? &*it : nullptr;
}

inline Keypoint* FindKeypoint(std::vector<Keypoint>& kps, KeypointId id) {
  auto it = std::lower_bound(kps.begin(), kps.end(), id,
                             [](const Keypoint& k, KeypointId v) { return k.id < v; });
  return it != kps.end() && it->id == id ? &*it : nullptr;
}

struct Frame {
  std::int64_t index = 0;
  double timestamp = 0.0;
  std::shared_ptr<const ImagePyramid> pyramid;
  std::shared_ptr<const ImagePyramid> right_pyramid;
  std::vector<Keypoint> keypoints;  // sorted by id
  Se3Pose pose_wc;

  const Keypoint* Find(KeypointId id) const { return FindKeypoint(keypoints, id); }
};

// Constant-velocity model: the last frame-to-frame increment, rescaled by
// the ratio of time steps.
class MotionModel {
 public:
  bool valid() const { return valid_; }
  void Reset() { valid_ = false; has_velocity_ = false; }
  void Update(const Se3Pose& pose_wc, double timestamp);
  Se3Pose Predict(double timestamp) const;
  // Applies a world-frame correction T_new_old to the stored pose.
  void ApplyCorrection(const Se3Pose& correction) { prev_pose_wc_ = correction * prev_pose_wc_; }

  const Se3Pose& prev_pose() const { return prev_pose_wc_; }

 private:
  bool valid_ = false;
  bool has_velocity_ = false;
  Se3Pose prev_pose_wc_;
  Se3Pose velocity_;  // T_prev,cur
  double prev_timestamp_ = 0.0;
  double prev_dt_ = 0.0;
};

}  // namespace vslam
