#pragma once

#include "fieldslam/param_store.hpp"

#include <array>
#include <cstdint>

namespace fieldslam {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment state matching a ParamStore, with per-group
// hyperparameters. step_count increments by exactly one per adam_step call.
struct AdamState {
  VecX m;
  VecX v;
  int64_t step_count = 0;
  std::array<AdamHyper, kNumParamGroups> hyper;

  static AdamState make(const ParamStore& store) {
    AdamState s;
    s.m = VecX::Zero(store.size());
    s.v = VecX::Zero(store.size());
    return s;
  }

  AdamHyper& group_hyper(ParamGroup g) { return hyper[static_cast<size_t>(g)]; }
  const AdamHyper& group_hyper(ParamGroup g) const { return hyper[static_cast<size_t>(g)]; }
};

using GroupMask = std::array<bool, kNumParamGroups>;

inline GroupMask group_mask(std::initializer_list<ParamGroup> groups) {
  GroupMask m{};
  for (ParamGroup g : groups) m[static_cast<size_t>(g)] = true;
  return m;
}

struct AdamStepReport {
  GroupMask stepped{};
  // Groups whose gradients contained a non-finite value; their parameters and
  // moments are left untouched for this step.
  GroupMask rejected{};
  bool any_rejected() const {
    for (bool r : rejected)
      if (r) return true;
    return false;
  }
};

// Standard bias-corrected Adam update applied to the active groups only.
// Inactive groups are untouched (values, m and v all preserved bitwise).
AdamStepReport adam_step(ParamStore& store, AdamState& state, const GroupMask& active);

}  // namespace fieldslam
