#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vslam/geometry/camera.hpp"
#include "vslam/geometry/se3.hpp"
#include "vslam/imgproc/image.hpp"

namespace vslam {

struct SyntheticSpec {
  // static | corridor | square | orbit
  std::string trajectory = "corridor";
  int frames = 200;
  double rate_hz = 20.0;
  int width = 640;
  int height = 480;
  double focal = 380.0;
  double baseline = 0.12;
  bool stereo = true;
  // Per-frame jitter of every texture dot, in pixels of its projection.
  double noise_px = 0.0;
  // Gaussian pixel noise in gray levels.
  double intensity_noise = 0.0;
  // Relative amplitude of a slow sinusoidal gain change.
  double brightness_drift = 0.0;
  std::uint64_t seed = 1;

  double dot_density = 400.0;  // dots per square meter
  double dot_sigma = 0.012;    // meters

  double length = 10.0;  // corridor
  double side = 4.0;     // square loop
  double radius = 3.0;   // orbit
};

// Reads key=value lines ('#' comments). Unknown keys throw.
SyntheticSpec ParseSyntheticSpec(const std::string& text);
SyntheticSpec LoadSyntheticSpec(const std::string& path);

struct TextureDot {
  double a = 0.0;
  double b = 0.0;
  double amplitude = 0.0;
  int index = 0;  // into the scene-wide jitter table
};

// Rectangle origin + a*u + b*v, a in [0, extent_u], b in [0, extent_v],
// covered with Gaussian dots.
struct TexturedPlane {
  Vec3 origin = Vec3::Zero();
  Vec3 u = Vec3::UnitX();
  Vec3 v = Vec3::UnitY();
  double extent_u = 1.0;
  double extent_v = 1.0;
  double base = 128.0;
  std::vector<TextureDot> dots;  // sorted by grid cell
  double cell = 0.05;
  int cols = 0, rows = 0;
  std::vector<int> cell_start;  // dots of cell i: [cell_start[i], cell_start[i + 1])

  Vec3 normal() const { return u.cross(v); }
};

class SyntheticSequence {
 public:
  explicit SyntheticSequence(const SyntheticSpec& spec);

  const SyntheticSpec& spec() const { return spec_; }
  int size() const { return static_cast<int>(poses_wc_.size()); }
  const StereoRig& rig() const { return rig_; }
  double timestamp(int k) const { return k / spec_.rate_hz; }
  const Se3Pose& pose_wc(int k) const { return poses_wc_[k]; }
  const std::vector<Se3Pose>& poses() const { return poses_wc_; }
  const std::vector<TexturedPlane>& planes() const { return planes_; }
  // Path length of the ground-truth trajectory.
  double PathLength() const;

  GrayImage RenderLeft(int k) const;
  GrayImage RenderRight(int k) const;
  // Renders any camera pose with the frame-k noise state.
  GrayImage Render(const Se3Pose& pose_wc, int k, std::uint64_t stream) const;

  // First scene intersection of the ray through a normalized-plane bearing.
  std::optional<Vec3> CastRay(const Se3Pose& pose_wc, const Vec3& bearing) const;

  // Scene construction helpers, exposed for tests.
  void ClearScene() { planes_.clear(); num_dots_ = 0; }
  void AddPlane(const Vec3& origin, const Vec3& u, const Vec3& v, double extent_u, double extent_v,
                std::uint64_t stream);
  void AddDot(int plane, double a, double b, double amplitude);

 private:
  void BuildScene();
  void BuildTrajectory();
  void IndexPlane(TexturedPlane& p);

  SyntheticSpec spec_;
  StereoRig rig_;
  std::vector<Se3Pose> poses_wc_;
  std::vector<TexturedPlane> planes_;
  int num_dots_ = 0;
};

// Writes the sequence in the EuRoC ASL layout (mav0/cam0, mav0/cam1,
// state_groundtruth_estimate0) plus a TUM ground-truth file.
void WriteSyntheticDataset(const SyntheticSequence& seq, const std::string& dir);

}  // namespace vslam
