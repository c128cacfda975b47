#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "vslam/frontend/tracker.hpp"
#include "vslam/loopclosing/loop_closing.hpp"
#include "vslam/mapping/mapper.hpp"
#include "vslam/pipeline/dataset.hpp"
#include "vslam/pipeline/trajectory.hpp"
#include "vslam/solver/ba.hpp"

namespace vslam {

struct SystemOptions {
  TrackerOptions tracker;
  MapperOptions mapper;
  LocalBaOptions local_ba;
  BaOptions ba;
  bool keyframe_filtering = true;
  KeyframeFilterOptions filter;
  bool loop_closing = true;
  LoopCloserOptions loop;
  bool rt_mode = false;
  int snapshot_keyframes = 5;
  // Fault injection: after each item a worker sleeps this multiple of the
  // time it spent on it.
  double tracker_delay = 0.0;
  double mapping_delay = 0.0;
  double ba_delay = 0.0;
  double lc_delay = 0.0;
};

struct FrameRecord {
  TrackedFrame frame;
  double latency_s = 0.0;  // wall time of the tracker on this frame
  double cpu_s = 0.0;      // tracker thread CPU time on this frame
};

struct RunSummary {
  std::size_t frames_in = 0;
  std::size_t frames_processed = 0;
  std::size_t frames_dropped = 0;
  std::size_t frames_tracked = 0;
  std::size_t keyframes = 0;
  std::size_t points = 0;
  std::size_t loops = 0;
  double wall_s = 0.0;
};

// Minimal blocking FIFO with close().
template <typename T>
class WorkQueue {
 public:
  void Push(T v) {
    {
      std::lock_guard lock(mutex_);
      items_.push_back(std::move(v));
    }
    cv_.notify_one();
  }
  // Blocks until an item is available or the queue is closed and empty.
  std::optional<T> Pop() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    return v;
  }
  std::vector<T> PopAll() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return closed_ || !items_.empty(); });
    std::vector<T> out(std::make_move_iterator(items_.begin()), std::make_move_iterator(items_.end()));
    items_.clear();
    return out;
  }
  void Close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    cv_.notify_all();
  }
  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return items_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<T> items_;
  bool closed_ = false;
};

// Tracking, mapping, state optimization and loop closing. The three back
// workers run on their own threads from construction; the tracker runs on
// the thread calling Track(), or on its own thread in Run() in rt mode.
class System {
 public:
  System(const SystemOptions& options, const Calibration& calibration);
  ~System();
  System(const System&) = delete;
  System& operator=(const System&) = delete;

  // One frame through the tracker. Outside rt mode, a new keyframe is
  // waited for until every back worker has processed it.
  FrameRecord Track(const InputFrame& frame);

  // Consumes a source. In rt mode a feeder replays the frames at
  // `playback_rate` times their timestamps into a one-slot newest-wins
  // buffer and the tracker skips what it could not keep up with.
  RunSummary Run(FrameSource& source, double playback_rate = 1.0);

  // Blocks until the back workers are idle.
  void WaitIdle();
  // Drains mapping and BA, abandons loop closing, joins the workers.
  void Shutdown();

  // Frame poses re-expressed with the final keyframe poses.
  Trajectory FinalTrajectory() const;
  // Frame poses as estimated online.
  Trajectory OnlineTrajectory() const;
  const std::vector<FrameRecord>& records() const { return records_; }
  std::vector<LoopEvent> loop_events() const;
  std::vector<std::string> loop_lines() const;

  Map& map() { return map_; }
  const Map& map() const { return map_; }
  const SystemOptions& options() const { return options_; }

 private:
  void MappingLoop();
  void OptimizationLoop();
  void LoopClosingLoop();
  void Publish();
  void Finished(std::size_t n);
  void Delay(double factor, double seconds) const;

  SystemOptions options_;
  Calibration calibration_;
  Map map_;
  SnapshotBox snapshots_;
  Tracker tracker_;
  std::vector<FrameRecord> records_;

  WorkQueue<Keyframe> mapping_queue_;
  WorkQueue<KeyframeId> optimization_queue_;
  WorkQueue<KeyframeId> loop_queue_;
  std::atomic<bool> abort_mapping_{false};
  std::atomic<bool> abort_loop_{false};
  std::unique_ptr<LoopCloser> loop_closer_;

  mutable std::mutex events_mutex_;
  std::vector<LoopEvent> events_;

  std::mutex idle_mutex_;
  std::condition_variable idle_cv_;
  std::size_t pending_ = 0;

  std::thread mapping_thread_;
  std::thread optimization_thread_;
  std::thread loop_thread_;
  bool shut_down_ = false;
};

}  // namespace vslam
