#include "vslam/mapping/mapper.hpp"

namespace vslam {

MappingStats ProcessKeyframe(Map& map, Keyframe kf, const std::optional<StereoRig>& rig,
                             const MapperOptions& options, const std::atomic<bool>* abort) {
  MappingStats stats;
  stats.kf = kf.id;
  // Corrections committed since the tracker computed the pose.
  for (std::int64_t e = kf.epoch; e < map.epoch(); ++e) kf.pose_wc = map.corrections()[e] * kf.pose_wc;
  kf.epoch = map.epoch();
  const KeyframeId id = kf.id;
  const bool stereo = rig && kf.right_pyramid;
  map.AddKeyframe(std::move(kf));
  stats.associated = AssociateTracks(map, id);
  if (stereo) stats.stereo = StereoMatch(*map.GetKeyframe(id), *rig, map, options.stereo);
  stats.triangulation = TriangulateNewPoints(map, id, stereo ? &*rig : nullptr, options.triangulation);
  stats.local_map = TrackLocalMap(map, id, options.local_map, abort);
  return stats;
}

}  // namespace vslam
