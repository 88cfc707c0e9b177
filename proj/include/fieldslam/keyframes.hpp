#pragma once

#include "fieldslam/rng.hpp"

#include <string>
#include <vector>

namespace fieldslam {

// One retained frame. The RGB-D payload lives in the pipeline's frame list
// (indexed by frame_id); the entry tracks the score that drives active
// global bundle adjustment.
struct KeyframeEntry {
  int frame_id = 0;
  double last_global_loss = 0.0;
  enum class Reason { Bootstrap, Threshold, Stride } reason = Reason::Threshold;
};

const char* keyframe_reason_name(KeyframeEntry::Reason r);

class KeyframeDatabase {
 public:
  // Admission policy: strict threshold (loss > t_l), an every-stride-th
  // fallback, and an unconditional bootstrap into an empty database.
  bool admit(int frame_id, double loss, double t_l, int stride);

  bool contains(int frame_id) const;
  void update_loss(int frame_id, double loss);

  size_t size() const { return entries_.size(); }
  const std::vector<KeyframeEntry>& entries() const { return entries_; }

  // Frame ids of the n highest last_global_loss entries, loss descending.
  // Ties break toward the most recent frame id.
  std::vector<int> top_by_loss(int n) const;

  // Per-frame ray counts: a fixed floor each, then the remaining rays drawn
  // categorically with probability proportional to loss.
  static std::vector<int> allocate_rays(const std::vector<double>& losses, int total_rays,
                                        int floor_rays, Rng& rng);

 private:
  std::vector<KeyframeEntry> entries_;
};

}  // namespace fieldslam
