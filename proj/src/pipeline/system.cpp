#include "vslam/pipeline/system.hpp"

#include <chrono>
#include <ctime>
#include <shared_mutex>

#include <pthread.h>
#include <sched.h>

#include "vslam/common/log.hpp"

namespace vslam {

namespace {

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point a, Clock::time_point b) { return std::chrono::duration<double>(b - a).count(); }

double ThreadCpuSeconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return ts.tv_sec + ts.tv_nsec * 1e-9;
}

// Back-end threads only run when the tracker leaves a core idle, so they
// never preempt it when cores are scarce.
void LowerThreadPriority() {
  sched_param param{};
  if (::pthread_setschedparam(::pthread_self(), SCHED_IDLE, &param) != 0) {
    LogDebug("could not lower back-end thread priority");
  }
}

}  // namespace

System::System(const SystemOptions& options, const Calibration& calibration)
    : options_(options),
      calibration_(calibration),
      tracker_(options.tracker, calibration.left, options.tracker.monocular ? std::nullopt : calibration.rig,
               &snapshots_, [this](Keyframe kf) {
                 {
                   std::lock_guard lock(idle_mutex_);
                   ++pending_;
                 }
                 abort_mapping_ = true;
                 mapping_queue_.Push(std::move(kf));
               }) {
  if (options_.tracker.monocular) calibration_.rig.reset();
  map_.set_camera(calibration_.left);
  options_.local_ba.monocular = options_.tracker.monocular;
  if (options_.loop_closing) loop_closer_ = std::make_unique<LoopCloser>(options_.loop, calibration_.rig);
  mapping_thread_ = std::thread([this] { MappingLoop(); });
  optimization_thread_ = std::thread([this] { OptimizationLoop(); });
  loop_thread_ = std::thread([this] { LoopClosingLoop(); });
}

System::~System() { Shutdown(); }

void System::Delay(double factor, double seconds) const {
  if (factor > 0.0) std::this_thread::sleep_for(std::chrono::duration<double>(factor * seconds));
}

void System::Publish() {
  static std::mutex publish_mutex;
  std::lock_guard guard(publish_mutex);
  std::shared_ptr<MapSnapshot> s;
  {
    std::shared_lock lock(map_.mutex());
    s = map_.MakeSnapshot(options_.snapshot_keyframes);
  }
  snapshots_.Publish(std::move(s));
}

void System::Finished(std::size_t n) {
  {
    std::lock_guard lock(idle_mutex_);
    pending_ -= n;
  }
  idle_cv_.notify_all();
}

void System::WaitIdle() {
  std::unique_lock lock(idle_mutex_);
  idle_cv_.wait(lock, [&] { return pending_ == 0; });
}

void System::MappingLoop() {
  if (options_.rt_mode) LowerThreadPriority();
  while (auto kf = mapping_queue_.Pop()) {
    const auto t0 = Clock::now();
    abort_mapping_ = false;
    const KeyframeId id = kf->id;
    MappingStats stats;
    {
      std::unique_lock lock(map_.mutex());
      stats = ProcessKeyframe(map_, std::move(*kf), calibration_.rig, options_.mapper, &abort_mapping_);
    }
    LogDebug("kf " + std::to_string(id) + ": associated " + std::to_string(stats.associated) + " stereo " +
             std::to_string(stats.stereo.matched) + "/" + std::to_string(stats.stereo.attempted) +
             " triangulated " + std::to_string(stats.triangulation.stereo + stats.triangulation.temporal) +
             " re-tracked " + std::to_string(stats.local_map.added));
    Publish();
    Delay(options_.mapping_delay, Seconds(t0, Clock::now()));
    optimization_queue_.Push(id);
  }
  optimization_queue_.Close();
}

void System::OptimizationLoop() {
  if (options_.rt_mode) LowerThreadPriority();
  while (true) {
    std::vector<KeyframeId> ids;
    if (options_.rt_mode) {
      ids = optimization_queue_.PopAll();
    } else if (auto id = optimization_queue_.Pop()) {
      ids.push_back(*id);
    }
    if (ids.empty()) break;
    // Only the newest keyframe gets a local BA when several are waiting.
    const KeyframeId kf = ids.back();
    const auto t0 = Clock::now();
    BaProblem problem;
    bool present = false;
    {
      std::shared_lock lock(map_.mutex());
      present = map_.HasKeyframe(kf);
      if (present) problem = BuildLocalBa(map_, kf, calibration_.rig, options_.local_ba);
    }
    if (present && problem.NumFreePoses() > 0) {
      const BaResult result = SolveBa(problem, options_.ba);
      std::unique_lock lock(map_.mutex());
      CommitBa(map_, problem, result);
      if (options_.keyframe_filtering) FilterKeyframes(map_, kf, options_.filter);
    }
    Publish();
    Delay(options_.ba_delay, Seconds(t0, Clock::now()));
    if (loop_closer_) {
      for (KeyframeId id : ids) loop_queue_.Push(id);
    } else {
      Finished(ids.size());
    }
  }
  loop_queue_.Close();
}

void System::LoopClosingLoop() {
  if (options_.rt_mode) LowerThreadPriority();
  while (auto id = loop_queue_.Pop()) {
    if (!abort_loop_) {
      const auto t0 = Clock::now();
      const auto event = loop_closer_->Process(map_, *id);
      if (event) {
        LogInfo(event->ToLine());
        {
          std::lock_guard lock(events_mutex_);
          events_.push_back(*event);
        }
        Publish();
      }
      Delay(options_.lc_delay, Seconds(t0, Clock::now()));
    }
    Finished(1);
  }
}

FrameRecord System::Track(const InputFrame& frame) {
  FrameRecord rec;
  const auto t0 = Clock::now();
  const double c0 = ThreadCpuSeconds();
  rec.frame = tracker_.Process(frame.index, frame.timestamp, frame.left, frame.right.empty() ? nullptr : &frame.right);
  rec.cpu_s = ThreadCpuSeconds() - c0;
  rec.latency_s = Seconds(t0, Clock::now());
  Delay(options_.tracker_delay, rec.latency_s);
  records_.push_back(rec);
  if (!options_.rt_mode && rec.frame.keyframe) WaitIdle();
  return rec;
}

RunSummary System::Run(FrameSource& source, double playback_rate) {
  RunSummary s;
  const auto start = Clock::now();
  if (!options_.rt_mode) {
    while (auto f = source.Next()) {
      ++s.frames_in;
      Track(*f);
    }
    WaitIdle();
  } else {
    std::mutex slot_mutex;
    std::condition_variable slot_cv;
    std::optional<InputFrame> slot;
    bool done = false;
    std::thread tracker([&] {
      while (true) {
        InputFrame f;
        {
          std::unique_lock lock(slot_mutex);
          slot_cv.wait(lock, [&] { return done || slot.has_value(); });
          if (!slot) break;
          f = std::move(*slot);
          slot.reset();
        }
        Track(f);
      }
    });
    std::optional<double> t_first;
    while (auto f = source.Next()) {
      ++s.frames_in;
      if (!t_first) t_first = f->timestamp;
      const auto due = start + std::chrono::duration_cast<Clock::duration>(
                                   std::chrono::duration<double>((f->timestamp - *t_first) / playback_rate));
      std::this_thread::sleep_until(due);
      {
        std::lock_guard lock(slot_mutex);
        if (slot) ++s.frames_dropped;  // newest wins
        slot = std::move(*f);
      }
      slot_cv.notify_one();
    }
    {
      std::lock_guard lock(slot_mutex);
      done = true;
    }
    slot_cv.notify_one();
    tracker.join();
    WaitIdle();
  }
  s.wall_s = Seconds(start, Clock::now());
  s.frames_processed = records_.size();
  for (const FrameRecord& r : records_) s.frames_tracked += r.frame.ok;
  {
    std::shared_lock lock(map_.mutex());
    s.keyframes = map_.keyframes().size();
    s.points = map_.points().size();
  }
  s.loops = loop_events().size();
  return s;
}

void System::Shutdown() {
  if (shut_down_) return;
  shut_down_ = true;
  abort_loop_ = true;
  mapping_queue_.Close();
  mapping_thread_.join();
  optimization_thread_.join();
  loop_thread_.join();
}

Trajectory System::FinalTrajectory() const {
  Trajectory out;
  std::shared_lock lock(map_.mutex());
  for (const FrameRecord& r : records_) {
    if (!r.frame.ok) continue;
    TimedPose p;
    p.timestamp = r.frame.timestamp;
    p.gap_before = r.frame.gap;
    const auto kf = map_.ResolvePose(r.frame.ref_kf);
    p.pose_wc = kf ? *kf * r.frame.t_kf_frame : r.frame.pose_wc;
    out.push_back(p);
  }
  return out;
}

Trajectory System::OnlineTrajectory() const {
  Trajectory out;
  for (const FrameRecord& r : records_) {
    if (r.frame.ok) out.push_back({r.frame.timestamp, r.frame.pose_wc, r.frame.gap});
  }
  return out;
}

std::vector<LoopEvent> System::loop_events() const {
  std::lock_guard lock(events_mutex_);
  return events_;
}

std::vector<std::string> System::loop_lines() const {
  std::vector<std::string> out;
  for (const LoopEvent& e : loop_events()) out.push_back(e.ToLine());
  return out;
}

}  // namespace vslam
