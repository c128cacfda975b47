#include "vslam/pipeline/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace vslam {

namespace fs = std::filesystem;

std::optional<InputFrame> MemorySource::Next() {
  if (next_ >= frames_.size()) return std::nullopt;
  return frames_[next_++];
}

SyntheticSource::SyntheticSource(std::shared_ptr<const SyntheticSequence> seq, bool stereo)
    : seq_(std::move(seq)), stereo_(stereo) {}

std::optional<InputFrame> SyntheticSource::Next() {
  if (next_ >= seq_->size()) return std::nullopt;
  InputFrame f;
  f.index = next_;
  f.timestamp = seq_->timestamp(next_);
  f.timestamp_ns = std::llround(f.timestamp * 1e9);
  f.left = seq_->RenderLeft(next_);
  if (stereo_) f.right = seq_->RenderRight(next_);
  ++next_;
  return f;
}

std::optional<InputFrame> FileSource::Next() {
  if (next_ >= entries_.size()) return std::nullopt;
  const Entry& e = entries_[next_];
  InputFrame f;
  f.index = static_cast<std::int64_t>(next_);
  f.timestamp_ns = e.timestamp_ns;
  f.timestamp = e.timestamp_ns * 1e-9;
  f.left = ReadImage(e.left);
  if (!e.right.empty()) f.right = ReadImage(e.right);
  ++next_;
  return f;
}

namespace {

[[noreturn]] void Malformed(const std::string& what) {
  throw DatasetError(DatasetErrorKind::kMalformedLayout, what);
}

std::vector<std::string> ListImages(const fs::path& dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".png" || ext == ".pgm")) out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// "#timestamp [ns],filename" rows.
std::vector<std::pair<std::int64_t, std::string>> ReadEurocCsv(const fs::path& csv) {
  std::ifstream f(csv);
  if (!f) Malformed("missing " + csv.string());
  std::vector<std::pair<std::int64_t, std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.back() == '\r') line.pop_back();
    const auto comma = line.find(',');
    if (comma == std::string::npos) Malformed("bad row in " + csv.string() + ": " + line);
    try {
      rows.emplace_back(std::stoll(line.substr(0, comma)), line.substr(comma + 1));
    } catch (const std::exception&) {
      Malformed("bad timestamp in " + csv.string() + ": " + line);
    }
  }
  return rows;
}

Se3Pose PoseFromMatrix(const Mat4& m) {
  Eigen::JacobiSVD<Mat3> svd(m.topLeftCorner<3, 3>(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) r = -r;
  return Se3Pose(r, m.topRightCorner<3, 1>());
}

}  // namespace

CameraModel ReadEurocCamera(const std::string& yaml_path, Se3Pose* t_bs) {
  YAML::Node n;
  try {
    n = YAML::LoadFile(yaml_path);
  } catch (const std::exception& e) {
    Malformed("cannot read " + yaml_path + ": " + e.what());
  }
  CameraModel cam;
  try {
    const auto k = n["intrinsics"].as<std::vector<double>>();
    const auto res = n["resolution"].as<std::vector<int>>();
    if (k.size() != 4 || res.size() != 2) Malformed("bad intrinsics in " + yaml_path);
    cam.fx = k[0];
    cam.fy = k[1];
    cam.cx = k[2];
    cam.cy = k[3];
    cam.width = res[0];
    cam.height = res[1];
    const std::string model = n["distortion_model"] ? n["distortion_model"].as<std::string>() : "none";
    const auto d = n["distortion_coefficients"] ? n["distortion_coefficients"].as<std::vector<double>>()
                                                : std::vector<double>{};
    if (model == "radial-tangential") {
      cam.distortion = DistortionModel::kRadTan;
    } else if (model == "equidistant") {
      cam.distortion = DistortionModel::kFisheye;
    } else {
      try {
        cam.distortion = ParseDistortionModel(model);
      } catch (const std::invalid_argument& e) {
        Malformed(yaml_path + ": " + e.what());
      }
    }
    for (std::size_t i = 0; i < std::min<std::size_t>(4, d.size()); ++i) cam.coeffs[i] = d[i];
    if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; })) cam.distortion = DistortionModel::kNone;
    if (t_bs) {
      const auto data = n["T_BS"]["data"].as<std::vector<double>>();
      if (data.size() != 16) Malformed("bad T_BS in " + yaml_path);
      Mat4 m;
      for (int i = 0; i < 16; ++i) m(i / 4, i % 4) = data[i];
      *t_bs = PoseFromMatrix(m);
    }
  } catch (const YAML::Exception& e) {
    Malformed("bad calibration " + yaml_path + ": " + e.what());
  }
  return cam;
}

Dataset OpenEuroc(const std::string& path, const DatasetOptions& options) {
  fs::path root = path;
  if (fs::is_directory(root / "mav0")) root /= "mav0";
  if (!fs::is_directory(root / "cam0")) Malformed("no cam0 directory under " + path);
  Dataset ds;
  ds.layout = "euroc";
  ds.association_dt = 0.005;
  Se3Pose t_b_c0, t_b_c1;
  ds.calibration.left = ReadEurocCamera((root / "cam0" / "sensor.yaml").string(), &t_b_c0);
  const auto rows0 = ReadEurocCsv(root / "cam0" / "data.csv");
  std::map<std::int64_t, std::string> rows1;
  if (options.stereo) {
    if (!fs::is_directory(root / "cam1")) {
      throw DatasetError(DatasetErrorKind::kMissingRightCamera, "stereo requested but no cam1 under " + path);
    }
    const CameraModel right = ReadEurocCamera((root / "cam1" / "sensor.yaml").string(), &t_b_c1);
    if (right.width != ds.calibration.left.width || right.height != ds.calibration.left.height) {
      throw DatasetError(DatasetErrorKind::kCalibrationMismatch, "left and right resolutions differ");
    }
    ds.calibration.rig = StereoRig{ds.calibration.left, right, t_b_c1.inverse() * t_b_c0};
    for (const auto& [t, name] : ReadEurocCsv(root / "cam1" / "data.csv")) rows1[t] = name;
  }
  std::vector<FileSource::Entry> entries;
  for (const auto& [t, name] : rows0) {
    FileSource::Entry e;
    e.timestamp_ns = t;
    e.left = (root / "cam0" / "data" / name).string();
    if (!fs::exists(e.left)) Malformed("missing image " + e.left);
    if (options.stereo) {
      const auto it = rows1.find(t);
      if (it == rows1.end()) continue;  // unsynchronized frame
      e.right = (root / "cam1" / "data" / it->second).string();
    }
    entries.push_back(e);
  }
  if (entries.empty()) Malformed("no frames in " + path);
  ds.source = std::make_unique<FileSource>(std::move(entries));

  const fs::path gt = root / "state_groundtruth_estimate0" / "data.csv";
  if (fs::exists(gt)) {
    std::ifstream f(gt);
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream ls(line);
      double t, px, py, pz, qw, qx, qy, qz;
      if (!(ls >> t >> px >> py >> pz >> qw >> qx >> qy >> qz)) Malformed("bad ground-truth row in " + gt.string());
      TimedPose p;
      p.timestamp = t * 1e-9;
      // Body poses moved to the left camera.
      p.pose_wc = Se3Pose(Quat(qw, qx, qy, qz).normalized(), Vec3(px, py, pz)) * t_b_c0;
      ds.ground_truth.push_back(p);
    }
  }
  return ds;
}

Dataset OpenKitti(const std::string& path, const DatasetOptions& options) {
  const fs::path root = path;
  Dataset ds;
  ds.layout = "kitti";
  ds.association_dt = 1e-4;
  const auto left = ListImages(root / "image_0");
  const auto right = ListImages(root / "image_1");
  if (left.empty()) Malformed("no images in " + (root / "image_0").string());
  if (options.stereo && right.empty()) {
    throw DatasetError(DatasetErrorKind::kMissingRightCamera, "stereo requested but image_1 is empty");
  }
  if (options.stereo && right.size() != left.size()) Malformed("image_0 and image_1 counts differ");
  std::vector<double> times;
  {
    std::ifstream f(root / "times.txt");
    if (!f) Malformed("missing times.txt");
    double t;
    while (f >> t) times.push_back(t);
  }
  if (times.size() != left.size()) {
    Malformed("times.txt has " + std::to_string(times.size()) + " entries for " + std::to_string(left.size()) +
              " images");
  }
  // calib.txt: "P0: 12 numbers" rows.
  std::map<std::string, std::vector<double>> calib;
  {
    std::ifstream f(root / "calib.txt");
    if (!f) Malformed("missing calib.txt");
    std::string line;
    while (std::getline(f, line)) {
      std::istringstream ls(line);
      std::string key;
      ls >> key;
      if (key.empty()) continue;
      if (key.back() == ':') key.pop_back();
      std::vector<double> v;
      double x;
      while (ls >> x) v.push_back(x);
      calib[key] = v;
    }
  }
  if (calib["P0"].size() != 12) Malformed("calib.txt lacks P0");
  const GrayImage first = ReadImage(left[0]);
  const auto& p0 = calib["P0"];
  CameraModel cam;
  cam.fx = p0[0];
  cam.fy = p0[5];
  cam.cx = p0[2];
  cam.cy = p0[6];
  cam.width = first.width;
  cam.height = first.height;
  ds.calibration.left = cam;
  if (options.stereo) {
    if (calib["P1"].size() != 12) Malformed("calib.txt lacks P1");
    const double baseline = -(calib["P1"][3] - p0[3]) / cam.fx;
    ds.calibration.rig = StereoRig{cam, cam, Se3Pose(Mat3::Identity(), Vec3(-baseline, 0, 0))};
  }
  std::vector<FileSource::Entry> entries;
  for (std::size_t i = 0; i < left.size(); ++i) {
    entries.push_back({std::llround(times[i] * 1e9), left[i], options.stereo ? right[i] : ""});
  }
  ds.source = std::make_unique<FileSource>(std::move(entries));

  std::string poses = options.kitti_poses;
  if (poses.empty() && fs::exists(root / "poses.txt")) poses = (root / "poses.txt").string();
  if (!poses.empty()) {
    std::ifstream f(poses);
    if (!f) Malformed("cannot open " + poses);
    std::string line;
    std::size_t i = 0;
    while (std::getline(f, line)) {
      std::istringstream ls(line);
      Mat4 m = Mat4::Identity();
      int read = 0;
      for (; read < 12 && ls >> m(read / 4, read % 4); ++read) {
      }
      if (read == 0) continue;
      if (read != 12 || i >= times.size()) Malformed("bad pose row in " + poses);
      ds.ground_truth.push_back({std::llround(times[i] * 1e9) * 1e-9, PoseFromMatrix(m), false});
      ++i;
    }
  }
  return ds;
}

Dataset OpenImageDir(const std::string& path, const DatasetOptions& options) {
  const fs::path root = path;
  Dataset ds;
  ds.layout = "imagedir";
  const bool split = fs::is_directory(root / "left");
  const auto left = ListImages(split ? root / "left" : root);
  if (left.empty()) Malformed("no images in " + path);
  std::vector<std::string> right;
  if (options.stereo) {
    right = ListImages(root / "right");
    if (right.empty()) {
      throw DatasetError(DatasetErrorKind::kMissingRightCamera, "stereo requested but no right/ images");
    }
    if (right.size() != left.size()) Malformed("left and right counts differ");
  }
  CameraModel cam = options.imagedir_camera;
  const GrayImage first = ReadImage(left[0]);
  if (cam.width == 0) {
    cam.width = first.width;
    cam.height = first.height;
  }
  if (cam.width != first.width || cam.height != first.height) {
    throw DatasetError(DatasetErrorKind::kCalibrationMismatch, "configured resolution differs from the images");
  }
  ds.calibration.left = cam;
  if (options.stereo) {
    ds.calibration.rig = StereoRig{cam, cam, Se3Pose(Mat3::Identity(), Vec3(-options.imagedir_baseline, 0, 0))};
  }
  std::vector<FileSource::Entry> entries;
  for (std::size_t i = 0; i < left.size(); ++i) {
    entries.push_back({std::llround(i * 1e9 / options.imagedir_rate_hz), left[i], options.stereo ? right[i] : ""});
  }
  ds.source = std::make_unique<FileSource>(std::move(entries));
  return ds;
}

Dataset OpenSynthetic(const SyntheticSpec& spec, const DatasetOptions& options) {
  auto seq = std::make_shared<const SyntheticSequence>(spec);
  Dataset ds;
  ds.layout = "synthetic";
  ds.association_dt = 1e-6;
  const bool stereo = options.stereo && spec.stereo;
  if (options.stereo && !spec.stereo) {
    throw DatasetError(DatasetErrorKind::kMissingRightCamera, "stereo requested on a monocular synthetic spec");
  }
  ds.calibration.left = seq->rig().left;
  if (stereo) ds.calibration.rig = seq->rig();
  for (int k = 0; k < seq->size(); ++k) ds.ground_truth.push_back({seq->timestamp(k), seq->pose_wc(k), false});
  ds.source = std::make_unique<SyntheticSource>(seq, stereo);
  return ds;
}

Dataset OpenDataset(const std::string& path, const std::string& layout, const DatasetOptions& options) {
  if (layout == "euroc") return OpenEuroc(path, options);
  if (layout == "kitti") return OpenKitti(path, options);
  if (layout == "imagedir") return OpenImageDir(path, options);
  if (layout == "synthetic") return OpenSynthetic(LoadSyntheticSpec(path), options);
  throw DatasetError(DatasetErrorKind::kMalformedLayout, "unknown layout: " + layout);
}

}  // namespace vslam
