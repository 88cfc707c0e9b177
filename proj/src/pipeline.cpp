#include "fieldslam/pipeline.hpp"

#include "fieldslam/threading.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace fieldslam {

// ---- keyframe database -------------------------------------------------------

const char* keyframe_reason_name(KeyframeEntry::Reason r) {
  switch (r) {
    case KeyframeEntry::Reason::Bootstrap: return "bootstrap";
    case KeyframeEntry::Reason::Threshold: return "threshold";
    case KeyframeEntry::Reason::Stride: return "stride";
  }
  return "?";
}

bool KeyframeDatabase::contains(int frame_id) const {
  for (const KeyframeEntry& e : entries_) {
    if (e.frame_id == frame_id) return true;
  }
  return false;
}

bool KeyframeDatabase::admit(int frame_id, double loss, double t_l, int stride) {
  if (contains(frame_id)) {
    update_loss(frame_id, loss);
    return false;
  }
  KeyframeEntry e;
  e.frame_id = frame_id;
  e.last_global_loss = loss;
  if (entries_.empty()) {
    e.reason = KeyframeEntry::Reason::Bootstrap;
  } else if (loss > t_l) {
    e.reason = KeyframeEntry::Reason::Threshold;
  } else if (stride > 0 && frame_id % stride == 0) {
    e.reason = KeyframeEntry::Reason::Stride;
  } else {
    return false;
  }
  entries_.push_back(e);
  return true;
}

void KeyframeDatabase::update_loss(int frame_id, double loss) {
  for (KeyframeEntry& e : entries_) {
    if (e.frame_id == frame_id) {
      e.last_global_loss = loss;
      return;
    }
  }
}

std::vector<int> KeyframeDatabase::top_by_loss(int n) const {
  std::vector<const KeyframeEntry*> sorted;
  sorted.reserve(entries_.size());
  for (const KeyframeEntry& e : entries_) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(), [](const KeyframeEntry* a, const KeyframeEntry* b) {
    if (a->last_global_loss != b->last_global_loss) {
      return a->last_global_loss > b->last_global_loss;
    }
    return a->frame_id > b->frame_id;  // ties: most recent first
  });
  std::vector<int> out;
  for (size_t i = 0; i < sorted.size() && static_cast<int>(i) < n; ++i) {
    out.push_back(sorted[i]->frame_id);
  }
  return out;
}

std::vector<int> KeyframeDatabase::allocate_rays(const std::vector<double>& losses,
                                                 int total_rays, int floor_rays, Rng& rng) {
  const int n = static_cast<int>(losses.size());
  std::vector<int> counts(static_cast<size_t>(n), 0);
  if (n == 0) return counts;
  int base = std::min(floor_rays, total_rays / n);
  for (int& c : counts) c = base;
  int remaining = total_rays - base * n;
  double loss_sum = 0.0;
  for (double l : losses) loss_sum += std::max(0.0, l);
  for (int i = 0; i < remaining; ++i) {
    int pick = n - 1;
    if (loss_sum > 0.0) {
      double u = rng.uniform01() * loss_sum;
      for (int j = 0; j < n; ++j) {
        u -= std::max(0.0, losses[static_cast<size_t>(j)]);
        if (u <= 0.0) {
          pick = j;
          break;
        }
      }
    } else {
      pick = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n)));
    }
    counts[static_cast<size_t>(pick)] += 1;
  }
  return counts;
}

// ---- pipeline ------------------------------------------------------------------

SlamPipeline::SlamPipeline(const RunConfig& cfg, SequenceSource&& seq)
    : cfg_(cfg),
      train_cfg_(cfg.train_config()),
      frames_(std::move(seq.frames)),
      field_(cfg.bounds(), cfg.field_config(), scene_store_),
      rng_(cfg.seed) {
  train_cfg_.threads = resolve_threads(cfg.threads);
  scene_adam_ = AdamState::make(scene_store_);
  scene_adam_.group_hyper(ParamGroup::SceneGeometry).lr = cfg.lr_scene;
  scene_adam_.group_hyper(ParamGroup::SceneAppearance).lr = cfg.lr_scene;
  scene_adam_.group_hyper(ParamGroup::Decoder).lr = cfg.lr_decoder;
}

double SlamPipeline::eval_frame_loss(int frame_id, int pixels) {
  const WindowFrame window[] = {{&frames_[static_cast<size_t>(frame_id)], -1}};
  const int counts[] = {pixels};
  const Plan plan = make_plan(field_, window, counts, train_cfg_, rng_);
  ParamStore empty_pose;
  const ForwardResult fwd =
      forward_loss(field_, scene_store_.values(), empty_pose.values(), window, plan, train_cfg_);
  return fwd.per_frame_loss[0];
}

void SlamPipeline::log_iteration(const char* phase, int frame_id, int iter,
                                 const LossBreakdown& lb) {
  LossLogRow row;
  row.phase = phase;
  row.frame_id = frame_id;
  row.iter = iter;
  row.losses = lb;
  log_.push_back(std::move(row));
}

double SlamPipeline::bootstrap_first_frame() {
  Frame& f0 = frames_[0];
  f0.pose = f0.gt_pose.value_or(Pose::identity());
  const WindowFrame window[] = {{&f0, -1}};  // gauge anchor: pose frozen
  const int counts[] = {cfg_.pixels_map};
  ParamStore empty_pose;
  const GroupMask scene_groups = group_mask(
      {ParamGroup::SceneGeometry, ParamGroup::SceneAppearance, ParamGroup::Decoder});
  for (int it = 0; it < cfg_.iters_first; ++it) {
    const Plan plan = make_plan(field_, window, counts, train_cfg_, rng_);
    const ForwardResult fwd = forward_loss(field_, scene_store_.values(), empty_pose.values(),
                                           window, plan, train_cfg_);
    log_iteration("bootstrap", 0, it, fwd.losses);
    if (fwd.losses.non_finite_term()) break;
    scene_store_.zero_grads();
    backward(field_, scene_store_.values(), empty_pose.values(), window, plan, fwd, train_cfg_,
             &scene_store_.grads(), nullptr);
    adam_step(scene_store_, scene_adam_, scene_groups);
  }
  const double loss = eval_frame_loss(0, cfg_.pixels_map);
  kfdb_.admit(0, loss, cfg_.t_l, cfg_.keyframe_stride);
  return loss;
}

Pose SlamPipeline::constant_velocity_init(int t) const {
  if (t >= 2) {
    const Pose& prev = frames_[static_cast<size_t>(t - 1)].pose;
    const Pose& prev2 = frames_[static_cast<size_t>(t - 2)].pose;
    return prev * (prev2.inverse() * prev);
  }
  return frames_[static_cast<size_t>(t - 1)].pose;
}

TrackResult SlamPipeline::track_frame(int t) {
  Frame& frame = frames_[static_cast<size_t>(t)];
  const Pose init = constant_velocity_init(t);
  frame.pose = init;

  ParamStore pose_store;
  pose_store.allocate(6, ParamGroup::Pose);
  AdamState pose_adam = AdamState::make(pose_store);
  pose_adam.group_hyper(ParamGroup::Pose).lr = cfg_.lr_pose_track;
  const GroupMask pose_group = group_mask({ParamGroup::Pose});

  // Frame 1 starts without a velocity prior and may need to cover the whole
  // inter-frame motion: longer schedule with a decaying learning rate.
  const bool boot = t == 1;
  const int iters = boot ? cfg_.iters_track_boot : cfg_.iters_track;
  const double lr0 = boot ? cfg_.lr_pose_boot : cfg_.lr_pose_track;
  const double lr1 = cfg_.lr_pose_track;

  TrackResult result;
  const WindowFrame window[] = {{&frame, 0}};
  const int counts[] = {cfg_.pixels_track};
  for (int it = 0; it < iters; ++it) {
    pose_adam.group_hyper(ParamGroup::Pose).lr =
        iters > 1 ? lr0 * std::pow(lr1 / lr0, static_cast<double>(it) / (iters - 1)) : lr1;
    const Plan plan = make_plan(field_, window, counts, train_cfg_, rng_);
    const ForwardResult fwd = forward_loss(field_, scene_store_.values(), pose_store.values(),
                                           window, plan, train_cfg_);
    log_iteration("track", t, it, fwd.losses);
    if (fwd.losses.non_finite_term()) {
      result.diverged = true;
      break;
    }
    if (it == 0) result.initial_loss = fwd.losses.total;
    pose_store.zero_grads();
    VecX pose_grads = VecX::Zero(6);
    backward(field_, scene_store_.values(), pose_store.values(), window, plan, fwd, train_cfg_,
             nullptr, &pose_grads);
    pose_store.grads() = pose_grads;
    adam_step(pose_store, pose_adam, pose_group);
    // Bake the increment and relinearize at zero.
    frame.pose = apply_increment(frame.pose, pose_store.values().segment<6>(0));
    pose_store.values().setZero();
  }
  result.final_loss = eval_frame_loss(t, cfg_.pixels_track);
  if (!result.diverged && result.final_loss > cfg_.divergence_factor * result.initial_loss) {
    result.diverged = true;
  }
  if (result.diverged) {
    frame.pose = init;
    ++diverged_frames_;
  }
  result.pose = frame.pose;
  return result;
}

void SlamPipeline::optimize_window(const char* phase, int log_frame,
                                   const std::vector<int>& frame_ids,
                                   const std::vector<int>& base_counts, int iters,
                                   bool resample_allocation,
                                   const std::vector<double>& alloc_losses) {
  std::vector<WindowFrame> window;
  int n_slots = 0;
  for (const int id : frame_ids) {
    WindowFrame wf;
    wf.frame = &frames_[static_cast<size_t>(id)];
    wf.pose_slot = id == 0 ? -1 : n_slots++;  // frame 0 is the gauge anchor
    window.push_back(wf);
  }
  ParamStore pose_store;
  if (n_slots > 0) pose_store.allocate(6 * n_slots, ParamGroup::Pose);
  AdamState pose_adam = AdamState::make(pose_store);
  pose_adam.group_hyper(ParamGroup::Pose).lr = cfg_.lr_pose_ba;
  const GroupMask pose_group = group_mask({ParamGroup::Pose});
  const GroupMask scene_groups = group_mask(
      {ParamGroup::SceneGeometry, ParamGroup::SceneAppearance, ParamGroup::Decoder});

  for (int it = 0; it < iters; ++it) {
    std::vector<int> counts = base_counts;
    if (resample_allocation) {
      counts = KeyframeDatabase::allocate_rays(alloc_losses, cfg_.pixels_map,
                                               cfg_.min_ray_alloc, rng_);
    }
    const Plan plan = make_plan(field_, window, counts, train_cfg_, rng_);
    const ForwardResult fwd = forward_loss(field_, scene_store_.values(), pose_store.values(),
                                           window, plan, train_cfg_);
    log_iteration(phase, log_frame, it, fwd.losses);
    if (fwd.losses.non_finite_term()) break;
    scene_store_.zero_grads();
    pose_store.zero_grads();
    VecX pose_grads = VecX::Zero(pose_store.size());
    backward(field_, scene_store_.values(), pose_store.values(), window, plan, fwd, train_cfg_,
             &scene_store_.grads(), n_slots > 0 ? &pose_grads : nullptr);
    adam_step(scene_store_, scene_adam_, scene_groups);
    if (n_slots > 0) {
      pose_store.grads() = pose_grads;
      adam_step(pose_store, pose_adam, pose_group);
      for (WindowFrame& wf : window) {
        if (wf.pose_slot < 0) continue;
        Frame& f = frames_[static_cast<size_t>(wf.frame->id)];
        f.pose = apply_increment(f.pose, pose_store.values().segment<6>(6 * wf.pose_slot));
      }
      pose_store.values().setZero();
    }
  }

  // Refresh the global-loss scores of participating keyframes.
  {
    std::vector<int> counts = base_counts;
    if (resample_allocation) {
      counts = KeyframeDatabase::allocate_rays(alloc_losses, cfg_.pixels_map,
                                               cfg_.min_ray_alloc, rng_);
    }
    const Plan plan = make_plan(field_, window, counts, train_cfg_, rng_);
    ParamStore empty_pose;
    if (n_slots > 0) empty_pose.allocate(6 * n_slots, ParamGroup::Pose);
    const ForwardResult fwd = forward_loss(field_, scene_store_.values(), empty_pose.values(),
                                           window, plan, train_cfg_);
    for (size_t i = 0; i < frame_ids.size(); ++i) {
      if (kfdb_.contains(frame_ids[i]) && fwd.per_frame_rays[i] > 0) {
        kfdb_.update_loss(frame_ids[i], fwd.per_frame_loss[i]);
      }
    }
  }
}

std::vector<int> SlamPipeline::mapping_window_frames(int t) {
  std::vector<int> ids;
  ids.push_back(t);
  if (t >= 1) ids.push_back(t - 1);
  // K random keyframes, excluding the current and previous frames.
  std::vector<int> candidates;
  for (const KeyframeEntry& e : kfdb_.entries()) {
    if (e.frame_id != t && e.frame_id != t - 1) candidates.push_back(e.frame_id);
  }
  const int k = std::min<int>(cfg_.window_keyframes, static_cast<int>(candidates.size()));
  const std::vector<int> picks = rng_.sample_without_replacement(
      static_cast<int>(candidates.size()), k);
  for (const int p : picks) ids.push_back(candidates[static_cast<size_t>(p)]);
  return ids;
}

void SlamPipeline::map_window(int t) {
  const std::vector<int> ids = mapping_window_frames(t);
  const int n = static_cast<int>(ids.size());
  std::vector<int> counts(static_cast<size_t>(n), cfg_.pixels_map / n);
  counts[0] += cfg_.pixels_map - (cfg_.pixels_map / n) * n;  // remainder to current
  optimize_window("map", t, ids, counts, cfg_.iters_map, false, {});
}

void SlamPipeline::active_global_ba() {
  if (kfdb_.size() == 0) return;
  const std::vector<int> ids = kfdb_.top_by_loss(cfg_.top_n);
  std::vector<double> losses;
  for (const int id : ids) {
    for (const KeyframeEntry& e : kfdb_.entries()) {
      if (e.frame_id == id) losses.push_back(e.last_global_loss);
    }
  }
  optimize_window("gba", ids.front(), ids, {}, cfg_.iters_map, true, losses);
}

void SlamPipeline::process_frame(int t) {
  if (t == 0) {
    bootstrap_first_frame();
    if (cfg_.map_every > 0) map_window(0);
    return;
  }
  const TrackResult tr = track_frame(t);
  kfdb_.admit(t, tr.final_loss, cfg_.t_l, cfg_.keyframe_stride);
  if (t % cfg_.map_every == 0) map_window(t);
  if (cfg_.use_gba && t % cfg_.gba_every == 0) active_global_ba();
}

void SlamPipeline::run() {
  for (int t = 0; t < static_cast<int>(frames_.size()); ++t) process_frame(t);
}

std::vector<TimedPose> SlamPipeline::trajectory() const {
  std::vector<TimedPose> out;
  out.reserve(frames_.size());
  for (const Frame& f : frames_) out.push_back({f.timestamp, f.pose});
  return out;
}

void SlamPipeline::write_loss_log(std::ostream& os) const {
  os << "phase,frame,iter,l_color,l_depth,l_patch,l_smooth,l_sdfm,l_sdft,l_fs,total\n";
  for (const LossLogRow& r : log_) {
    os << r.phase << ',' << r.frame_id << ',' << r.iter << ',' << r.losses.l_color << ','
       << r.losses.l_depth << ',' << r.losses.l_patch << ',' << r.losses.l_smooth << ','
       << r.losses.l_sdfm << ',' << r.losses.l_sdft << ',' << r.losses.l_fs << ','
       << r.losses.total << '\n';
  }
}

}  // namespace fieldslam
