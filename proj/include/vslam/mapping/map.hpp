#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

#include "vslam/common/types.hpp"
#include "vslam/frontend/keypoint.hpp"
#include "vslam/geometry/camera.hpp"
#include "vslam/geometry/se3.hpp"
#include "vslam/imgproc/brief.hpp"

namespace vslam {

inline constexpr int kMaxPointDescriptors = 10;

// Landmark anchored in the keyframe that first observed it:
// position = T_w,anchor * (unproject(anchor_px) / inv_depth).
struct MapPoint {
  PointId id = kInvalidId;
  KeyframeId anchor_kf = kInvalidId;
  Vec2 anchor_px = Vec2::Zero();
  double inv_depth = 1.0;
  std::vector<BriefDescriptor> descriptors;  // most recent last
  std::map<KeyframeId, KeypointId> observers;
  Vec3 position = Vec3::Zero();  // cached world position
};

struct Keyframe {
  KeyframeId id = kInvalidId;
  std::int64_t frame_index = 0;
  double timestamp = 0.0;
  Se3Pose pose_wc;
  std::vector<Keypoint> keypoints;  // sorted by id
  std::shared_ptr<const ImagePyramid> pyramid;
  std::shared_ptr<const ImagePyramid> right_pyramid;
  // Correction epoch the tracker was in when it computed pose_wc.
  std::int64_t epoch = 0;

  Se3Pose pose_cw() const { return pose_wc.inverse(); }
  const Keypoint* Find(KeypointId kp) const { return FindKeypoint(keypoints, kp); }
  Keypoint* Find(KeypointId kp) { return FindKeypoint(keypoints, kp); }
};

// Keyframe -> (neighbour -> number of shared left-view point observations).
class CovisibilityGraph {
 public:
  void Increment(KeyframeId a, KeyframeId b, int delta);
  int Count(KeyframeId a, KeyframeId b) const;
  const std::map<KeyframeId, int>& Neighbours(KeyframeId a) const;
  void RemoveKeyframe(KeyframeId a);
  const std::map<KeyframeId, std::map<KeyframeId, int>>& counts() const { return counts_; }

 private:
  std::map<KeyframeId, std::map<KeyframeId, int>> counts_;
};

// What the tracker needs from the map, published as an immutable snapshot.
struct MapSnapshot {
  struct TrackedPoint {
    PointId id = kInvalidId;
    Vec3 position = Vec3::Zero();
  };
  std::uint64_t version = 0;
  // Track id -> landmark, for tracks present in the most recent keyframes.
  std::unordered_map<KeypointId, TrackedPoint> tracks;
  // corrections[e - 1] maps epoch e - 1 world coordinates to epoch e.
  std::vector<Se3Pose> corrections;
  KeyframeId last_kf = kInvalidId;
  Se3Pose last_kf_pose;
  std::vector<Keypoint> last_kf_keypoints;
  std::size_t num_keyframes = 0;
  std::size_t num_points = 0;

  std::int64_t epoch() const { return static_cast<std::int64_t>(corrections.size()); }
  const TrackedPoint* Find(KeypointId kp) const {
    auto it = tracks.find(kp);
    return it == tracks.end() ? nullptr : &it->second;
  }
};

// The shared map. Methods do not lock; callers hold mutex() (shared for
// reads, exclusive for writes).
class Map {
 public:
  std::shared_mutex& mutex() const { return mutex_; }

  // Inserts a keyframe. Landmark associations on its keypoints are cleared;
  // the caller re-establishes them through AddObservation.
  Keyframe& AddKeyframe(Keyframe kf);
  // Removes a keyframe, re-anchoring the points it anchored and recording a
  // parent link so trajectories referencing it can still be resolved.
  void RemoveKeyframe(KeyframeId id);
  Keyframe* GetKeyframe(KeyframeId id);
  const Keyframe* GetKeyframe(KeyframeId id) const;
  bool HasKeyframe(KeyframeId id) const { return keyframes_.count(id) > 0; }
  const std::map<KeyframeId, Keyframe>& keyframes() const { return keyframes_; }
  // Sets a keyframe pose and refreshes the points it anchors.
  void SetKeyframePose(KeyframeId id, const Se3Pose& pose_wc);

  // Creates a landmark anchored at (kf, kp) with the given inverse depth and
  // adds the anchor observation.
  PointId CreatePoint(KeyframeId anchor_kf, KeypointId kp, double inv_depth);
  MapPoint* GetPoint(PointId id);
  const MapPoint* GetPoint(PointId id) const;
  const std::map<PointId, MapPoint>& points() const { return points_; }
  void RemovePoint(PointId id);
  // Fails (returns false) when the keypoint is missing or already
  // associated, or when the keyframe already observes the point.
  bool AddObservation(PointId point, KeyframeId kf, KeypointId kp);
  void RemoveObservation(PointId point, KeyframeId kf);
  // Moves every observation of `drop` onto `keep` and deletes `drop`.
  void MergePoints(PointId keep, PointId drop);
  // Changes the anchor, keeping the world position.
  void Reanchor(PointId point, KeyframeId new_anchor);
  void SetInverseDepth(PointId point, double inv_depth);
  std::set<PointId> PointsAnchoredIn(KeyframeId kf) const;

  Vec3 AnchorPosition(const MapPoint& p) const;
  const CovisibilityGraph& covisibility() const { return covis_; }
  // Exact covisibility recomputed from observer sets.
  CovisibilityGraph BruteForceCovisibility() const;

  // Keyframes containing a given track, in id order.
  const std::vector<KeyframeId>* TrackKeyframes(KeypointId kp) const;
  std::optional<PointId> PointOfTrack(KeypointId kp) const;

  // Pose of a keyframe, also for removed ones (through parent links).
  std::optional<Se3Pose> ResolvePose(KeyframeId id) const;

  // Loop-closure bookkeeping.
  std::int64_t epoch() const { return static_cast<std::int64_t>(corrections_.size()); }
  void PushCorrection(const Se3Pose& correction) { corrections_.push_back(correction); }
  const std::vector<Se3Pose>& corrections() const { return corrections_; }
  bool loop_closed() const { return !corrections_.empty(); }
  // Keyframes that must not be removed while a verification is in flight.
  void Lock(KeyframeId id) { ++locked_[id]; }
  void Unlock(KeyframeId id);
  bool IsLocked(KeyframeId id) const { return locked_.count(id) > 0; }

  std::shared_ptr<MapSnapshot> MakeSnapshot(int recent_keyframes = 5) const;

  const CameraModel& camera() const { return camera_; }
  void set_camera(const CameraModel& c) { camera_ = c; }

 private:
  void RecomputePosition(MapPoint& p);

  mutable std::shared_mutex mutex_;
  CameraModel camera_;
  std::map<KeyframeId, Keyframe> keyframes_;
  std::map<PointId, MapPoint> points_;
  std::map<KeyframeId, std::set<PointId>> anchored_;
  std::unordered_map<KeypointId, PointId> track_to_point_;
  std::unordered_map<KeypointId, std::vector<KeyframeId>> track_kfs_;
  std::map<KeyframeId, std::pair<KeyframeId, Se3Pose>> removed_parent_;  // T_parent,removed
  std::map<KeyframeId, int> locked_;
  std::vector<Se3Pose> corrections_;
  CovisibilityGraph covis_;
  PointId next_point_id_ = 0;
  mutable std::uint64_t snapshot_version_ = 0;
};

// Latest-snapshot holder shared between producer threads and the tracker.
class SnapshotBox {
 public:
  void Publish(std::shared_ptr<const MapSnapshot> s) {
    std::lock_guard<std::mutex> lock(mutex_);
    snapshot_ = std::move(s);
  }
  std::shared_ptr<const MapSnapshot> Get() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return snapshot_;
  }

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const MapSnapshot> snapshot_ = std::make_shared<MapSnapshot>();
};

}  // namespace vslam
