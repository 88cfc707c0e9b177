#pragma once

#include "fieldslam/adam.hpp"
#include "fieldslam/config.hpp"
#include "fieldslam/keyframes.hpp"
#include "fieldslam/scene_field.hpp"
#include "fieldslam/train.hpp"
#include "fieldslam/tum_io.hpp"

#include <iosfwd>
#include <vector>

namespace fieldslam {

struct TrackResult {
  bool diverged = false;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  Pose pose;
};

struct LossLogRow {
  std::string phase;
  int frame_id = 0;
  int iter = 0;
  LossBreakdown losses;
};

// Deterministic interleaving of the SLAM loop: per frame, track; every
// map_every frames, optimize a mapping window; every gba_every frames, run
// the active global bundle adjustment over the highest-loss keyframes.
// Single-threaded control flow; ray work parallelizes inside train steps.
class SlamPipeline {
 public:
  SlamPipeline(const RunConfig& cfg, SequenceSource&& seq);

  void run();
  void process_frame(int t);

  // Individual phases, exposed for tests.
  double bootstrap_first_frame();
  TrackResult track_frame(int t);
  void map_window(int t);
  void active_global_ba();
  Pose constant_velocity_init(int t) const;
  std::vector<int> mapping_window_frames(int t);
  double eval_frame_loss(int frame_id, int pixels);

  const std::vector<Frame>& frames() const { return frames_; }
  std::vector<Frame>& frames() { return frames_; }
  std::vector<TimedPose> trajectory() const;
  const KeyframeDatabase& keyframes() const { return kfdb_; }
  KeyframeDatabase& keyframes() { return kfdb_; }
  const SceneField& field() const { return field_; }
  ParamStore& scene_store() { return scene_store_; }
  const ParamStore& scene_store() const { return scene_store_; }
  AdamState& scene_adam() { return scene_adam_; }
  int diverged_frames() const { return diverged_frames_; }
  const std::vector<LossLogRow>& loss_log() const { return log_; }
  void write_loss_log(std::ostream& os) const;
  const TrainConfig& train_config() const { return train_cfg_; }
  Rng& rng() { return rng_; }

 private:
  void optimize_window(const char* phase, int log_frame, const std::vector<int>& frame_ids,
                       const std::vector<int>& base_counts, int iters, bool resample_allocation,
                       const std::vector<double>& alloc_losses);
  void log_iteration(const char* phase, int frame_id, int iter, const LossBreakdown& lb);

  RunConfig cfg_;
  TrainConfig train_cfg_;
  std::vector<Frame> frames_;
  ParamStore scene_store_;
  SceneField field_;
  AdamState scene_adam_;
  KeyframeDatabase kfdb_;
  Rng rng_;
  std::vector<LossLogRow> log_;
  int diverged_frames_ = 0;
};

}  // namespace fieldslam
