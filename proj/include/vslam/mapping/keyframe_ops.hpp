#pragma once

#include <atomic>

#include "vslam/geometry/camera.hpp"
#include "vslam/imgproc/lk.hpp"
#include "vslam/mapping/map.hpp"

namespace vslam {

// Links the keypoints of a freshly inserted keyframe to the landmarks of
// their tracks. Returns the number of observations added.
int AssociateTracks(Map& map, KeyframeId kf);

struct StereoMatchOptions {
  LkOptions lk;
  double backward_threshold_px = 0.5;
  double max_epipolar_px = 2.0;
  // Grid used for the neighbouring-cell depth prior of 2D keypoints.
  int cell_size = 35;
  int min_neighbours = 3;
  // Retries of unmatched keypoints seeded by freshly matched neighbours.
  int refine_passes = 2;
};

struct StereoMatchStats {
  int attempted = 0;
  int matched = 0;
};

// The initial right-view position of a keypoint: the projection of its
// landmark, else of the keypoint at the mean depth of the 3D keypoints in
// the neighbouring cells (when at least min_neighbours), else the left
// position.
Vec2 StereoGuess(const Keyframe& kf, const Keypoint& kp, const StereoRig& rig, const Map& map,
                 const StereoMatchOptions& options);

// Right-view LK matching of every keypoint of kf. Fills is_stereo and the
// right positions. Keypoints that fail are retried from the mean depth of
// their matched neighbours.
StereoMatchStats StereoMatch(Keyframe& kf, const StereoRig& rig, const Map& map,
                             const StereoMatchOptions& options = {});

struct TriangulationOptions {
  double stereo_min_parallax_deg = 0.1;
  double temporal_min_parallax_deg = 1.0;
  double max_reprojection_px = 2.4476;  // sqrt of the 95% chi-square bound
};

struct TriangulationStats {
  int stereo = 0;
  int temporal = 0;
  int failed = 0;
};

// Creates landmarks for 2D keypoints of kf: from the rig for stereo
// matches (anchored in kf), else between the first keyframe of the track
// and kf (anchored in the first one, observed by every keyframe of the
// track that reprojects it within the bound).
TriangulationStats TriangulateNewPoints(Map& map, KeyframeId kf, const StereoRig* rig,
                                        const TriangulationOptions& options = {});

struct LocalMapOptions {
  double search_radius_px = 2.0;
  int max_descriptor_distance = 50;
};

struct LocalMapStats {
  int candidates = 0;
  int added = 0;
  bool aborted = false;
};

// Re-tracking: local-map points (observed by covisible keyframes but not by
// kf) matched to unassociated keypoints of kf within the search radius
// when a descriptor of the point is close enough. Checks `abort` between
// points.
LocalMapStats TrackLocalMap(Map& map, KeyframeId kf, const LocalMapOptions& options = {},
                            const std::atomic<bool>* abort = nullptr);

}  // namespace vslam
