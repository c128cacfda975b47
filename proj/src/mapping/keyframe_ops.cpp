#include "vslam/mapping/keyframe_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vslam/geometry/epipolar.hpp"
#include "vslam/geometry/triangulation.hpp"
#include "vslam/imgproc/features.hpp"

namespace vslam {

int AssociateTracks(Map& map, KeyframeId kf_id) {
  Keyframe* kf = map.GetKeyframe(kf_id);
  if (!kf) return 0;
  int added = 0;
  std::vector<std::pair<PointId, KeypointId>> links;
  for (const Keypoint& kp : kf->keypoints) {
    if (auto p = map.PointOfTrack(kp.id)) links.emplace_back(*p, kp.id);
  }
  for (const auto& [p, kp] : links) added += map.AddObservation(p, kf_id, kp);
  return added;
}

namespace {

// Mean of the depths over keypoints lying in the cell of kp or one of its 8
// neighbours; `depth` returns a non-positive value for keypoints without one.
template <typename DepthFn>
std::optional<double> NeighbourDepth(const Keyframe& kf, const Keypoint& kp, const CellGrid& grid,
                                     int min_neighbours, DepthFn depth) {
  const int cell = grid.CellOf(kp.raw_px);
  std::vector<int> cells = grid.Neighbours(cell);
  cells.push_back(cell);
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < kf.keypoints.size(); ++i) {
    const Keypoint& other = kf.keypoints[i];
    if (other.id == kp.id) continue;
    if (std::find(cells.begin(), cells.end(), grid.CellOf(other.raw_px)) == cells.end()) continue;
    const double z = depth(i);
    if (z <= kMinDepth) continue;
    sum += z;
    ++n;
  }
  if (n < min_neighbours) return std::nullopt;
  return sum / n;
}

double LandmarkDepth(const Keyframe& kf, const Se3Pose& pose_cw, const Map& map, std::size_t i) {
  const Keypoint& k = kf.keypoints[i];
  if (k.map_point_id == kInvalidId) return 0.0;
  const MapPoint* p = map.GetPoint(k.map_point_id);
  return p ? (pose_cw * p->position).z() : 0.0;
}

Vec2 ProjectAtDepth(const StereoRig& rig, const Keypoint& kp, double z, const Vec2& fallback) {
  const auto px = rig.right.ProjectDistorted(rig.t_rl * (kp.bearing * z));
  return px ? *px : fallback;
}

}  // namespace

Vec2 StereoGuess(const Keyframe& kf, const Keypoint& kp, const StereoRig& rig, const Map& map,
                 const StereoMatchOptions& options) {
  const Se3Pose pose_cw = kf.pose_cw();
  if (kp.map_point_id != kInvalidId) {
    if (const MapPoint* p = map.GetPoint(kp.map_point_id)) {
      if (auto px = rig.right.ProjectDistorted(rig.t_rl * (pose_cw * p->position))) return *px;
    }
  }
  const CellGrid grid(rig.left.width, rig.left.height, options.cell_size);
  const auto z = NeighbourDepth(kf, kp, grid, options.min_neighbours, [&](std::size_t i) {
    return LandmarkDepth(kf, pose_cw, map, i);
  });
  return z ? ProjectAtDepth(rig, kp, *z, kp.raw_px) : kp.raw_px;
}

StereoMatchStats StereoMatch(Keyframe& kf, const StereoRig& rig, const Map& map,
                             const StereoMatchOptions& options) {
  StereoMatchStats stats;
  if (!kf.pyramid || !kf.right_pyramid) return stats;
  const Mat3 e = rig.Essential();
  const Se3Pose pose_cw = kf.pose_cw();
  const std::size_t n = kf.keypoints.size();
  std::vector<Vec2> guesses(n);
  std::vector<double> depth(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    guesses[i] = StereoGuess(kf, kf.keypoints[i], rig, map, options);
    kf.keypoints[i].is_stereo = false;
  }
  stats.attempted = static_cast<int>(n);

  auto match = [&](std::size_t i) {
    Keypoint& kp = kf.keypoints[i];
    const auto right = LkTrack(*kf.pyramid, *kf.right_pyramid, kp.raw_px, guesses[i],
                               kDefaultPyramidLevels - 1, 0, options.lk);
    if (!right) return;
    const auto back = LkTrack(*kf.right_pyramid, *kf.pyramid, *right, kp.raw_px, 0, 0, options.lk);
    if (!back || (*back - kp.raw_px).norm() > options.backward_threshold_px) return;
    const Vec2 right_undist = rig.right.Undistort(*right);
    const Vec3 right_bearing = rig.right.Unproject(right_undist);
    if (EpipolarDistance(e, kp.bearing, right_bearing, rig.right) > options.max_epipolar_px) return;
    kp.is_stereo = true;
    kp.right_raw_px = *right;
    kp.right_undist_px = right_undist;
    ++stats.matched;
    if (auto pl = Triangulate(Se3Pose(), rig.t_rl, kp.bearing, right_bearing, 0.0)) {
      depth[i] = pl->z();
    }
  };
  for (std::size_t i = 0; i < n; ++i) match(i);

  // Unmatched keypoints retry from the depth of their matched neighbours
  // when that moves the guess.
  const CellGrid grid(rig.left.width, rig.left.height, options.cell_size);
  for (int pass = 0; pass < options.refine_passes; ++pass) {
    std::vector<std::size_t> retry;
    for (std::size_t i = 0; i < n; ++i) {
      const Keypoint& kp = kf.keypoints[i];
      if (kp.is_stereo) continue;
      const auto z = NeighbourDepth(kf, kp, grid, options.min_neighbours, [&](std::size_t j) {
        return depth[j] > 0.0 ? depth[j] : LandmarkDepth(kf, pose_cw, map, j);
      });
      if (!z) continue;
      const Vec2 g = ProjectAtDepth(rig, kp, *z, kp.raw_px);
      if ((g - guesses[i]).norm() < 1.0) continue;
      guesses[i] = g;
      retry.push_back(i);
    }
    if (retry.empty()) break;
    for (std::size_t i : retry) match(i);
  }
  return stats;
}

namespace {

bool Reprojects(const CameraModel& cam, const Se3Pose& pose_cw, const Vec3& pw, const Vec2& px,
                double max_px) {
  const Vec3 pc = pose_cw * pw;
  if (pc.z() <= kMinDepth) return false;
  return (*cam.ProjectUndistorted(pc) - px).norm() <= max_px;
}

}  // namespace

TriangulationStats TriangulateNewPoints(Map& map, KeyframeId kf_id, const StereoRig* rig,
                                        const TriangulationOptions& options) {
  TriangulationStats stats;
  Keyframe* kf = map.GetKeyframe(kf_id);
  if (!kf) return stats;
  const CameraModel& cam = map.camera();
  const Se3Pose kf_cw = kf->pose_cw();
  std::vector<KeypointId> ids;
  for (const Keypoint& kp : kf->keypoints) {
    if (kp.map_point_id == kInvalidId) ids.push_back(kp.id);
  }
  for (KeypointId id : ids) {
    kf = map.GetKeyframe(kf_id);
    const Keypoint* kp = kf->Find(id);
    if (!kp || kp->map_point_id != kInvalidId) continue;

    if (rig && kp->is_stereo) {
      const Vec3 br = rig->right.Unproject(kp->right_undist_px);
      const auto pl = Triangulate(Se3Pose(), rig->t_rl, kp->bearing, br,
                                  options.stereo_min_parallax_deg);
      if (pl && Reprojects(cam, Se3Pose(), *pl, kp->undist_px, options.max_reprojection_px) &&
          Reprojects(rig->right, rig->t_rl, *pl, kp->right_undist_px,
                     options.max_reprojection_px)) {
        if (map.CreatePoint(kf_id, id, 1.0 / pl->z()) != kInvalidId) {
          ++stats.stereo;
          continue;
        }
      }
    }

    const std::vector<KeyframeId>* track = map.TrackKeyframes(id);
    if (!track || track->size() < 2 || track->front() == kf_id) {
      ++stats.failed;
      continue;
    }
    const KeyframeId first_id = track->front();
    const Keyframe* first = map.GetKeyframe(first_id);
    const Keypoint* fkp = first ? first->Find(id) : nullptr;
    if (!fkp) {
      ++stats.failed;
      continue;
    }
    const Se3Pose first_cw = first->pose_cw();
    const auto pw = Triangulate(first_cw, kf_cw, fkp->bearing, kp->bearing,
                                options.temporal_min_parallax_deg);
    if (!pw || !Reprojects(cam, first_cw, *pw, fkp->undist_px, options.max_reprojection_px) ||
        !Reprojects(cam, kf_cw, *pw, kp->undist_px, options.max_reprojection_px)) {
      ++stats.failed;
      continue;
    }
    const double z_first = (first_cw * *pw).z();
    const std::vector<KeyframeId> observers = *track;
    const PointId pid = map.CreatePoint(first_id, id, 1.0 / z_first);
    if (pid == kInvalidId) {
      ++stats.failed;
      continue;
    }
    const Vec3 pos = map.GetPoint(pid)->position;
    for (KeyframeId o : observers) {
      if (o == first_id) continue;
      const Keyframe* okf = map.GetKeyframe(o);
      const Keypoint* okp = okf ? okf->Find(id) : nullptr;
      if (!okp || okp->map_point_id != kInvalidId) continue;
      if (o != kf_id &&
          !Reprojects(cam, okf->pose_cw(), pos, okp->undist_px, options.max_reprojection_px)) {
        continue;
      }
      map.AddObservation(pid, o, id);
    }
    ++stats.temporal;
  }
  return stats;
}

LocalMapStats TrackLocalMap(Map& map, KeyframeId kf_id, const LocalMapOptions& options,
                            const std::atomic<bool>* abort) {
  LocalMapStats stats;
  const Keyframe* kf = map.GetKeyframe(kf_id);
  if (!kf) return stats;
  const CameraModel& cam = map.camera();

  std::set<PointId> local;
  for (const auto& [nb, count] : map.covisibility().Neighbours(kf_id)) {
    const Keyframe* other = map.GetKeyframe(nb);
    if (!other) continue;
    for (const Keypoint& kp : other->keypoints) {
      if (kp.map_point_id != kInvalidId) local.insert(kp.map_point_id);
    }
  }

  // Unassociated described keypoints bucketed on a grid of the search radius.
  const double r = options.search_radius_px;
  const int cols = static_cast<int>(std::ceil(cam.width / r)) + 1;
  const int rows = static_cast<int>(std::ceil(cam.height / r)) + 1;
  std::unordered_map<int, std::vector<KeypointId>> buckets;
  auto bucket_of = [&](const Vec2& px) {
    const int c = std::clamp(static_cast<int>(px.x() / r), 0, cols - 1);
    const int rr = std::clamp(static_cast<int>(px.y() / r), 0, rows - 1);
    return rr * cols + c;
  };
  for (const Keypoint& kp : kf->keypoints) {
    if (kp.map_point_id == kInvalidId && kp.has_desc) buckets[bucket_of(kp.undist_px)].push_back(kp.id);
  }

  const Se3Pose cw = kf->pose_cw();
  for (PointId pid : local) {
    if (abort && abort->load(std::memory_order_relaxed)) {
      stats.aborted = true;
      break;
    }
    const MapPoint* p = map.GetPoint(pid);
    if (!p || p->observers.count(kf_id) || p->descriptors.empty()) continue;
    const Vec3 pc = cw * p->position;
    if (pc.z() <= kMinDepth) continue;
    const Vec2 px = *cam.ProjectUndistorted(pc);
    if (!cam.InImage(cam.Distort(px))) continue;
    const int b0 = bucket_of(px);
    const int bc = b0 % cols, br = b0 / cols;
    KeypointId best = kInvalidId;
    int best_dist = std::numeric_limits<int>::max();
    kf = map.GetKeyframe(kf_id);
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const int c = bc + dc, rr = br + dr;
        if (c < 0 || rr < 0 || c >= cols || rr >= rows) continue;
        auto it = buckets.find(rr * cols + c);
        if (it == buckets.end()) continue;
        for (KeypointId kid : it->second) {
          const Keypoint* kp = kf->Find(kid);
          if (!kp || kp->map_point_id != kInvalidId) continue;
          if ((kp->undist_px - px).norm() > r) continue;
          ++stats.candidates;
          int d = std::numeric_limits<int>::max();
          for (const auto& desc : p->descriptors) d = std::min(d, HammingDistance(desc, kp->desc));
          if (d < best_dist || (d == best_dist && kid < best)) {
            best_dist = d;
            best = kid;
          }
        }
      }
    }
    if (best != kInvalidId && best_dist <= options.max_descriptor_distance) {
      stats.added += map.AddObservation(pid, kf_id, best);
    }
  }
  return stats;
}

}  // namespace vslam
