#pragma once

#include "fieldslam/bounds.hpp"
#include "fieldslam/param_store.hpp"
#include "fieldslam/rng.hpp"
#include "fieldslam/types.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace fieldslam {

struct HashGridConfig {
  int levels = 16;
  int features_per_level = 2;
  int table_size_log2 = 13;
  // Voxel edge length of the finest level, meters.
  double finest_voxel_m = 0.02;
  // Voxels along the longest bound axis at the coarsest level.
  int base_resolution = 16;
};

// Multi-resolution hash grid with tri-linear interpolation. Vertex (ix,iy,iz)
// of a level maps to a table slot by the spatial hash
//   slot = (ix*73856093 xor iy*19349663 xor iz*83492791) mod table_size,
// identically at every level; collisions are part of the contract.
class HashGrid {
 public:
  HashGrid(const SceneBounds& bounds, const HashGridConfig& cfg, ParamStore& store, Rng& init);

  const SceneBounds& bounds() const { return bounds_; }
  int levels() const { return cfg_.levels; }
  int features_per_level() const { return cfg_.features_per_level; }
  int dim() const { return cfg_.levels * cfg_.features_per_level; }
  Eigen::Index table_size() const { return table_size_; }
  const ParamBlock& block() const { return block_; }
  double voxel_edge(int level) const { return edge_[static_cast<size_t>(level)]; }

  uint32_t hash_index(int ix, int iy, int iz) const;

  // Index into the owning ParamStore for (level, slot, feature).
  Eigen::Index param_index(int level, uint32_t slot, int feature) const {
    return block_.offset +
           (static_cast<Eigen::Index>(level) * table_size_ + slot) * cfg_.features_per_level +
           feature;
  }
  // Store index of the feature vector at a vertex of one level's lattice.
  Eigen::Index vertex_param_index(int level, int ix, int iy, int iz, int feature) const {
    return param_index(level, hash_index(ix, iy, iz), feature);
  }

  void encode(const VecX& values, const Vec3& x, double* out) const;

  // Accumulates dL/d(table entries) into grads (when scatter is true) and
  // returns dL/dx.
  Vec3 backward(const VecX& values, VecX* grads, const Vec3& x, const double* dout,
                bool scatter) const;

  // Table slots touched by the trilinear stencil of x at one level.
  std::array<uint32_t, 8> stencil_slots(int level, const Vec3& x) const;

 private:
  void locate(int level, const Vec3& x, std::array<int, 3>& cell, Vec3& frac) const;

  SceneBounds bounds_;
  HashGridConfig cfg_;
  Eigen::Index table_size_ = 0;
  std::vector<double> edge_;
  ParamBlock block_;
};

}  // namespace fieldslam
