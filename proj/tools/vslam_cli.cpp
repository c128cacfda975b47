#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "vslam/common/log.hpp"
#include "vslam/pipeline/config.hpp"
#include "vslam/pipeline/dataset.hpp"
#include "vslam/pipeline/synthetic.hpp"
#include "vslam/pipeline/system.hpp"
#include "vslam/pipeline/trajectory.hpp"

namespace {

using namespace vslam;

LogLevel ParseLevel(const std::string& s) {
  if (s == "debug") return LogLevel::kDebug;
  if (s == "info") return LogLevel::kInfo;
  if (s == "warning") return LogLevel::kWarning;
  if (s == "error") return LogLevel::kError;
  if (s == "silent") return LogLevel::kSilent;
  throw std::runtime_error("unknown log level: " + s);
}

void WriteText(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

int Run(const std::string& config_path, const std::string& dataset_path, const std::string& layout, bool rt,
        const std::string& out, const std::string& gt_out, double playback_rate) {
  SlamConfig config = config_path.empty() ? ParseSlamConfig("") : LoadSlamConfig(config_path);
  if (rt) {
    config.rt_mode = true;
    config.system.rt_mode = true;
  }
  SetLogLevel(ParseLevel(config.log_level));
  Dataset dataset = OpenDataset(dataset_path, layout, config.dataset);
  const std::size_t frames = dataset.source->size();
  RunSummary summary;
  Trajectory trajectory;
  double tracker_s = 0.0;
  {
    System system(config.system, dataset.calibration);
    summary = system.Run(*dataset.source, playback_rate);
    system.Shutdown();
    trajectory = system.FinalTrajectory();
    for (const FrameRecord& r : system.records()) tracker_s += r.latency_s;
    for (const std::string& line : system.loop_lines()) std::printf("%s\n", line.c_str());
  }
  WriteTum(out, trajectory);
  if (!gt_out.empty()) WriteTum(gt_out, dataset.ground_truth);
  std::printf("frames %zu processed %zu dropped %zu tracked %zu keyframes %zu points %zu loops %zu wall %.3f s\n",
              frames, summary.frames_processed, summary.frames_dropped, summary.frames_tracked, summary.keyframes,
              summary.points, summary.loops, summary.wall_s);
  std::printf("tracker %.3f s total\n", tracker_s);
  if (dataset.ground_truth.size() >= 3 && trajectory.size() >= 3) {
    const AlignMode align = config.monocular() ? AlignMode::kSim3 : AlignMode::kSe3;
    const EvalResult eval = Evaluate(trajectory, dataset.ground_truth, align, dataset.association_dt);
    std::printf("%s", eval.ToReport().c_str());
  }
  return 0;
}

int Eval(const std::string& est_path, const std::string& gt_path, const std::string& align,
         const std::string& report, const std::string& plot, double max_dt) {
  const Trajectory est = ReadTum(est_path);
  const Trajectory gt = ReadTum(gt_path);
  const EvalResult eval = Evaluate(est, gt, ParseAlignMode(align), max_dt);
  const std::string text = eval.ToReport();
  std::printf("%s", text.c_str());
  if (!report.empty()) WriteText(report, text);
  if (!plot.empty()) WriteText(plot, PlotSvg(est, gt, eval, max_dt));
  return 0;
}

int Synth(const std::string& spec_path, const std::string& out) {
  const SyntheticSpec spec = spec_path.empty() ? SyntheticSpec{} : LoadSyntheticSpec(spec_path);
  const SyntheticSequence seq(spec);
  WriteSyntheticDataset(seq, out);
  std::printf("wrote %d frames, path length %.3f m, to %s\n", seq.size(), seq.PathLength(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stereo and monocular visual SLAM"};
  app.require_subcommand(1);

  std::string config, dataset, layout = "euroc", out = "traj.txt", gt_out;
  bool rt = false;
  double rate = 1.0;
  CLI::App* run = app.add_subcommand("run", "Run SLAM on a dataset");
  run->add_option("--config", config, "Config file (key = value)");
  run->add_option("--dataset", dataset, "Dataset directory, or spec file for synthetic")->required();
  run->add_option("--layout", layout, "euroc | kitti | imagedir | synthetic")
      ->check(CLI::IsMember({"euroc", "kitti", "imagedir", "synthetic"}));
  run->add_flag("--rt", rt, "Real-time mode: drop frames the tracker cannot keep up with");
  run->add_option("--rate", rate, "Playback speed factor in real-time mode");
  run->add_option("--out", out, "Output trajectory (TUM)");
  run->add_option("--gt-out", gt_out, "Also write the ground truth (TUM)");

  std::string est, gt, align = "se3", report, plot;
  double max_dt = 0.005;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a trajectory against ground truth");
  eval->add_option("--est", est, "Estimated trajectory (TUM)")->required();
  eval->add_option("--gt", gt, "Ground truth (TUM)")->required();
  eval->add_option("--align", align, "se3 | sim3")->check(CLI::IsMember({"se3", "sim3"}));
  eval->add_option("--report", report, "Write the report here");
  eval->add_option("--plot", plot, "Write an SVG top-down overlay here");
  eval->add_option("--max-dt", max_dt, "Association tolerance in seconds");

  std::string spec, synth_out;
  CLI::App* synth = app.add_subcommand("synth", "Render a synthetic dataset");
  synth->add_option("--spec", spec, "Sequence spec (key = value)");
  synth->add_option("--out", synth_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return Run(config, dataset, layout, rt, out, gt_out, rate);
    if (*eval) return Eval(est, gt, align, report, plot, max_dt);
    return Synth(spec, synth_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
