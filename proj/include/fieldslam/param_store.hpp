#pragma once

#include "fieldslam/types.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace fieldslam {

// Parameter groups step independently (tracking touches only Pose, mapping
// touches the scene groups) and carry their own learning rates.
enum class ParamGroup : uint8_t {
  SceneGeometry = 0,
  SceneAppearance = 1,
  Decoder = 2,
  Pose = 3,
};

constexpr int kNumParamGroups = 4;

const char* param_group_name(ParamGroup g);

struct ParamBlock {
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
  ParamGroup group = ParamGroup::SceneGeometry;
};

// Flat float64 parameter storage with same-shape gradients and a per-parameter
// group tag. Blocks are allocated once at construction time of the owning
// modules; the layout is stable for the life of the store.
class ParamStore {
 public:
  ParamBlock allocate(Eigen::Index n, ParamGroup group);

  Eigen::Index size() const { return values_.size(); }

  VecX& values() { return values_; }
  const VecX& values() const { return values_; }
  VecX& grads() { return grads_; }
  const VecX& grads() const { return grads_; }

  Eigen::Ref<VecX> values(const ParamBlock& b) { return values_.segment(b.offset, b.size); }
  Eigen::Ref<const VecX> values(const ParamBlock& b) const {
    return values_.segment(b.offset, b.size);
  }
  Eigen::Ref<VecX> grads(const ParamBlock& b) { return grads_.segment(b.offset, b.size); }

  const std::vector<ParamGroup>& groups() const { return groups_; }
  ParamGroup group_of(Eigen::Index i) const { return groups_[static_cast<size_t>(i)]; }

  void zero_grads();
  void zero_grads(ParamGroup group);

  // Indices belonging to one group, in ascending order.
  std::vector<Eigen::Index> group_indices(ParamGroup group) const;

 private:
  VecX values_;
  VecX grads_;
  std::vector<ParamGroup> groups_;
};

}  // namespace fieldslam
