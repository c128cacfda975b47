#include "vslam/pipeline/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "vslam/common/keyvalue.hpp"
#include "vslam/common/log.hpp"

namespace vslam {

namespace {

// One visitor drives parsing and formatting so both always list the same
// keys.
struct Field {
  std::string key;
  std::function<void(const KeyValues&)> read;
  std::function<std::string()> write;
};

template <typename T>
std::string Show(const T& v) {
  std::ostringstream s;
  s.precision(17);
  s << std::boolalpha << v;
  return s.str();
}

template <typename T>
Field Make(const std::string& key, T& ref) {
  return {key, [key, &ref](const KeyValues& kv) { kv.Get(key, ref); }, [&ref] { return Show(ref); }};
}

Field MakeDetector(const std::string& key, DetectorType& ref) {
  return {key,
          [key, &ref](const KeyValues& kv) {
            std::string s;
            kv.Get(key, s);
            if (s.empty()) return;
            if (s == "fast") {
              ref = DetectorType::kFast;
            } else if (s == "shitomasi") {
              ref = DetectorType::kShiTomasi;
            } else {
              throw std::runtime_error("unknown detector: " + s);
            }
          },
          [&ref] { return std::string(ref == DetectorType::kFast ? "fast" : "shitomasi"); }};
}

Field MakeDistortion(const std::string& key, DistortionModel& ref) {
  return {key,
          [key, &ref](const KeyValues& kv) {
            std::string s;
            kv.Get(key, s);
            if (!s.empty()) ref = ParseDistortionModel(s);
          },
          [&ref] { return ToString(ref); }};
}

void AddRansac(std::vector<Field>& f, const std::string& prefix, RansacOptions& r) {
  f.push_back(Make(prefix + ".threshold_px", r.threshold_px));
  f.push_back(Make(prefix + ".confidence", r.confidence));
  f.push_back(Make(prefix + ".max_iterations", r.max_iterations));
  f.push_back(Make(prefix + ".min_inliers", r.min_inliers));
}

void AddLk(std::vector<Field>& f, const std::string& prefix, LkOptions& lk) {
  f.push_back(Make(prefix + ".window", lk.window));
  f.push_back(Make(prefix + ".max_iterations", lk.max_iterations));
  f.push_back(Make(prefix + ".epsilon", lk.epsilon));
  f.push_back(Make(prefix + ".min_eigenvalue", lk.min_eigenvalue));
  f.push_back(Make(prefix + ".max_residual", lk.max_residual));
}

std::vector<Field> Fields(SlamConfig& c) {
  std::vector<Field> f;
  SystemOptions& s = c.system;
  TrackerOptions& t = s.tracker;
  f.push_back(Make("mode", c.mode));
  f.push_back(Make("profile", c.profile));
  f.push_back(Make("rt_mode", c.rt_mode));
  f.push_back(Make("seed", c.seed));
  f.push_back(Make("log_level", c.log_level));

  f.push_back(Make("clahe", t.clahe));
  f.push_back(Make("clahe.clip_limit", t.clahe_options.clip_limit));
  f.push_back(Make("clahe.tiles_x", t.clahe_options.tiles_x));
  f.push_back(Make("clahe.tiles_y", t.clahe_options.tiles_y));
  f.push_back(Make("pyramid_levels", t.pyramid_levels));
  f.push_back(Make("grid.cell_size", t.grid.cell_size));
  f.push_back(MakeDetector("grid.detector", t.grid.detector));
  f.push_back(Make("grid.quality_level", t.grid.quality_level));
  f.push_back(Make("grid.fast_threshold", t.grid.fast_threshold));
  f.push_back(Make("grid.border", t.grid.border));
  f.push_back(Make("grid.subpixel", t.grid.subpixel));
  AddLk(f, "track.lk", t.track.lk);
  f.push_back(Make("track.backward_threshold_px", t.track.backward_threshold_px));
  AddRansac(f, "epipolar", t.epipolar);
  f.push_back(Make("pose.huber_delta", t.pose.huber_delta));
  f.push_back(Make("pose.chi2_threshold", t.pose.chi2_threshold));
  f.push_back(Make("pose.max_iterations", t.pose.max_iterations));
  f.push_back(Make("pose.min_inliers", t.pose.min_inliers));
  AddRansac(f, "p3p", t.p3p);
  f.push_back(Make("p3p.trigger_ratio", t.p3p_trigger_ratio));
  f.push_back(Make("keyframe.min_tracked_ratio", t.keyframe.min_tracked_ratio));
  f.push_back(Make("keyframe.max_parallax_px", t.keyframe.max_parallax_px));
  f.push_back(Make("keyframe.min_keypoint_fraction", t.keyframe.min_keypoint_fraction));
  f.push_back(Make("init.min_matches", t.init.min_matches));
  f.push_back(Make("init.min_parallax_deg", t.init.min_parallax_deg));
  f.push_back(Make("init.min_triangulated", t.init.min_triangulated));
  AddRansac(f, "init.ransac", t.init.ransac);
  f.push_back(Make("reloc.ratio", t.reloc.ratio));
  f.push_back(Make("reloc.max_distance", t.reloc.max_distance));
  f.push_back(Make("reloc.min_inliers", t.reloc.min_inliers));
  AddRansac(f, "reloc.ransac", t.reloc.ransac);
  f.push_back(Make("lost_frames_before_reloc", t.lost_frames_before_reloc));
  f.push_back(Make("lost_frames_before_reset", t.lost_frames_before_reset));

  MapperOptions& m = s.mapper;
  AddLk(f, "stereo.lk", m.stereo.lk);
  f.push_back(Make("stereo.backward_threshold_px", m.stereo.backward_threshold_px));
  f.push_back(Make("stereo.max_epipolar_px", m.stereo.max_epipolar_px));
  f.push_back(Make("stereo.min_neighbours", m.stereo.min_neighbours));
  f.push_back(Make("stereo.refine_passes", m.stereo.refine_passes));
  f.push_back(Make("triangulation.stereo_min_parallax_deg", m.triangulation.stereo_min_parallax_deg));
  f.push_back(Make("triangulation.temporal_min_parallax_deg", m.triangulation.temporal_min_parallax_deg));
  f.push_back(Make("triangulation.max_reprojection_px", m.triangulation.max_reprojection_px));
  f.push_back(Make("local_map.search_radius_px", m.local_map.search_radius_px));
  f.push_back(Make("local_map.max_descriptor_distance", m.local_map.max_descriptor_distance));

  f.push_back(Make("ba.min_shared_observations", s.local_ba.min_shared_observations));
  f.push_back(Make("ba.max_iterations", s.ba.max_iterations));
  f.push_back(Make("ba.initial_lambda_scale", s.ba.initial_lambda_scale));
  f.push_back(Make("ba.chi2_threshold", s.ba.chi2_threshold));
  f.push_back(Make("keyframe_filtering", s.keyframe_filtering));
  f.push_back(Make("filter.redundant_ratio", s.filter.redundant_ratio));
  f.push_back(Make("filter.min_other_observers", s.filter.min_other_observers));

  LoopCloserOptions& l = s.loop;
  f.push_back(Make("loop_closing", s.loop_closing));
  f.push_back(Make("lc.branching", l.detector.vocabulary.branching));
  f.push_back(Make("lc.max_leaf_size", l.detector.vocabulary.max_leaf_size));
  f.push_back(Make("lc.kmedians_iterations", l.detector.vocabulary.kmedians_iterations));
  f.push_back(Make("lc.temporal_window", l.detector.temporal_window));
  f.push_back(Make("lc.min_score_ratio", l.detector.min_score_ratio));
  f.push_back(Make("lc.min_score", l.detector.min_score));
  f.push_back(Make("lc.island_radius", l.detector.island_radius));
  f.push_back(Make("lc.consistent_queries", l.detector.consistent_queries));
  f.push_back(Make("lc.features", l.features.count));
  f.push_back(Make("lc.fast_threshold", l.features.fast_threshold));
  f.push_back(Make("lc.ratio", l.verify.ratio));
  AddRansac(f, "lc.ransac", l.verify.ransac);
  f.push_back(Make("lc.min_matches", l.verify.min_matches));
  f.push_back(Make("lc.min_p3p_inliers", l.verify.min_p3p_inliers));
  f.push_back(Make("lc.projection_radius_px", l.verify.projection_radius_px));
  f.push_back(Make("lc.max_descriptor_distance", l.verify.max_descriptor_distance));
  f.push_back(Make("lc.min_inliers", l.verify.min_inliers));
  f.push_back(Make("pgo.max_iterations", l.pgo.max_iterations));
  f.push_back(Make("pgo.min_update", l.pgo.min_update));
  f.push_back(Make("loose_ba", l.run_loose_ba));
  f.push_back(Make("loose_ba.max_iterations", l.loose_ba.max_iterations));

  f.push_back(Make("snapshot_keyframes", s.snapshot_keyframes));
  f.push_back(Make("delay.tracker", s.tracker_delay));
  f.push_back(Make("delay.mapping", s.mapping_delay));
  f.push_back(Make("delay.ba", s.ba_delay));
  f.push_back(Make("delay.lc", s.lc_delay));

  CameraModel& cam = c.dataset.imagedir_camera;
  f.push_back(Make("camera.fx", cam.fx));
  f.push_back(Make("camera.fy", cam.fy));
  f.push_back(Make("camera.cx", cam.cx));
  f.push_back(Make("camera.cy", cam.cy));
  f.push_back(Make("camera.width", cam.width));
  f.push_back(Make("camera.height", cam.height));
  f.push_back(MakeDistortion("camera.distortion", cam.distortion));
  for (int i = 0; i < 4; ++i) f.push_back(Make("camera.k" + std::to_string(i), cam.coeffs[i]));
  f.push_back(Make("camera.baseline", c.dataset.imagedir_baseline));
  f.push_back(Make("camera.rate_hz", c.dataset.imagedir_rate_hz));
  f.push_back(Make("kitti.poses", c.dataset.kitti_poses));
  return f;
}

void Finalize(SlamConfig& c) {
  if (c.mode != "mono" && c.mode != "stereo") throw std::runtime_error("mode must be mono or stereo");
  if (c.profile == "fast") {
    c.system.loop_closing = false;
    c.system.tracker.grid.detector = DetectorType::kFast;
    c.system.tracker.grid.cell_size = 50;
  } else if (c.profile != "standard") {
    throw std::runtime_error("profile must be standard or fast");
  }
  if (c.system.tracker.grid.cell_size < 8) throw std::runtime_error("grid.cell_size too small");
  c.system.rt_mode = c.rt_mode;
  c.system.tracker.monocular = c.monocular();
  c.system.tracker.seed = c.seed;
  c.system.loop.seed = c.seed;
  c.system.loop.detector.vocabulary.seed = c.seed;
  c.system.mapper.stereo.cell_size = c.system.tracker.grid.cell_size;
  c.dataset.stereo = !c.monocular();
}

}  // namespace

SlamConfig ParseSlamConfig(const std::string& text) {
  const KeyValues kv = KeyValues::Parse(text);
  SlamConfig c;
  for (const Field& f : Fields(c)) f.read(kv);
  kv.RejectUnused();
  Finalize(c);
  return c;
}

SlamConfig LoadSlamConfig(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ParseSlamConfig(ss.str());
}

std::string FormatSlamConfig(const SlamConfig& config) {
  SlamConfig copy = config;
  std::string out;
  for (const Field& f : Fields(copy)) out += f.key + " = " + f.write() + "\n";
  return out;
}

}  // namespace vslam
