#include "fieldslam/param_store.hpp"

namespace fieldslam {

const char* param_group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::SceneGeometry: return "scene-geometry";
    case ParamGroup::SceneAppearance: return "scene-appearance";
    case ParamGroup::Decoder: return "decoder";
    case ParamGroup::Pose: return "pose";
  }
  return "?";
}

ParamBlock ParamStore::allocate(Eigen::Index n, ParamGroup group) {
  ParamBlock b;
  b.offset = values_.size();
  b.size = n;
  b.group = group;
  values_.conservativeResize(b.offset + n);
  grads_.conservativeResize(b.offset + n);
  values_.segment(b.offset, n).setZero();
  grads_.segment(b.offset, n).setZero();
  groups_.insert(groups_.end(), static_cast<size_t>(n), group);
  return b;
}

void ParamStore::zero_grads() { grads_.setZero(); }

void ParamStore::zero_grads(ParamGroup group) {
  for (Eigen::Index i = 0; i < grads_.size(); ++i) {
    if (groups_[static_cast<size_t>(i)] == group) grads_[i] = 0.0;
  }
}

std::vector<Eigen::Index> ParamStore::group_indices(ParamGroup group) const {
  std::vector<Eigen::Index> out;
  for (Eigen::Index i = 0; i < values_.size(); ++i) {
    if (groups_[static_cast<size_t>(i)] == group) out.push_back(i);
  }
  return out;
}

}  // namespace fieldslam
