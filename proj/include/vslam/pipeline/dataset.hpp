#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vslam/geometry/camera.hpp"
#include "vslam/imgproc/image.hpp"
#include "vslam/pipeline/synthetic.hpp"
#include "vslam/pipeline/trajectory.hpp"

namespace vslam {

enum class DatasetErrorKind { kMalformedLayout, kMissingRightCamera, kCalibrationMismatch };

class DatasetError : public std::runtime_error {
 public:
  DatasetError(DatasetErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  DatasetErrorKind kind() const { return kind_; }

 private:
  DatasetErrorKind kind_;
};

struct InputFrame {
  std::int64_t index = 0;
  double timestamp = 0.0;  // seconds
  std::int64_t timestamp_ns = 0;
  GrayImage left;
  GrayImage right;  // empty in monocular mode
};

struct Calibration {
  CameraModel left;
  std::optional<StereoRig> rig;
};

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::optional<InputFrame> Next() = 0;
  virtual std::size_t size() const = 0;
};

// Frames already in memory.
class MemorySource : public FrameSource {
 public:
  explicit MemorySource(std::vector<InputFrame> frames) : frames_(std::move(frames)) {}
  std::optional<InputFrame> Next() override;
  std::size_t size() const override { return frames_.size(); }

 private:
  std::vector<InputFrame> frames_;
  std::size_t next_ = 0;
};

// Renders a synthetic sequence on demand.
class SyntheticSource : public FrameSource {
 public:
  SyntheticSource(std::shared_ptr<const SyntheticSequence> seq, bool stereo);
  std::optional<InputFrame> Next() override;
  std::size_t size() const override { return seq_->size(); }

 private:
  std::shared_ptr<const SyntheticSequence> seq_;
  bool stereo_;
  int next_ = 0;
};

// Images listed with timestamps, loaded on demand.
class FileSource : public FrameSource {
 public:
  struct Entry {
    std::int64_t timestamp_ns = 0;
    std::string left;
    std::string right;
  };
  explicit FileSource(std::vector<Entry> entries) : entries_(std::move(entries)) {}
  std::optional<InputFrame> Next() override;
  std::size_t size() const override { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
  std::size_t next_ = 0;
};

struct DatasetOptions {
  bool stereo = true;
  // Image directories have no calibration file; mono unless left/ and
  // right/ subdirectories exist.
  CameraModel imagedir_camera;
  double imagedir_baseline = 0.0;
  double imagedir_rate_hz = 20.0;
  // KITTI ground truth; defaults to <dir>/poses.txt when present.
  std::string kitti_poses;
};

struct Dataset {
  std::unique_ptr<FrameSource> source;
  Calibration calibration;
  Trajectory ground_truth;   // camera (left) poses
  double association_dt = 0.005;
  std::string layout;
};

// layout: euroc | kitti | imagedir | synthetic (path of a spec file).
Dataset OpenDataset(const std::string& path, const std::string& layout, const DatasetOptions& options = {});

Dataset OpenEuroc(const std::string& path, const DatasetOptions& options);
Dataset OpenKitti(const std::string& path, const DatasetOptions& options);
Dataset OpenImageDir(const std::string& path, const DatasetOptions& options);
Dataset OpenSynthetic(const SyntheticSpec& spec, const DatasetOptions& options);

// EuRoC camera sensor.yaml: intrinsics, distortion, resolution and T_BS.
CameraModel ReadEurocCamera(const std::string& yaml_path, Se3Pose* t_bs);

}  // namespace vslam
