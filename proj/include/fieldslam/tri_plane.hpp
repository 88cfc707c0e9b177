#pragma once

#include "fieldslam/bounds.hpp"
#include "fieldslam/param_store.hpp"
#include "fieldslam/rng.hpp"
#include "fieldslam/types.hpp"

#include <array>
#include <string>

namespace fieldslam {

struct TriPlaneConfig {
  int channels = 32;
  double coarse_cell_m = 0.24;
  double geo_fine_cell_m = 0.06;
  double app_fine_cell_m = 0.03;
};

enum class PlaneKind { Appearance, Geometry };

// One set of axis-aligned feature planes (xy, xz, yz) at a coarse and a fine
// resolution. A point's per-level feature is the sum of the three bilinear
// plane interpolations; the output concatenates coarse and fine levels.
class TriPlaneSet {
 public:
  struct Plane {
    int axis0 = 0;      // first world axis spanned by the plane
    int axis1 = 1;      // second world axis
    int n0 = 0, n1 = 0; // vertex counts
    double cell = 0.0;  // vertex spacing, meters
    ParamBlock block;
  };

  TriPlaneSet(PlaneKind kind, const SceneBounds& bounds, int channels, double coarse_cell,
              double fine_cell, ParamStore& store, Rng& init);

  PlaneKind kind() const { return kind_; }
  int channels() const { return channels_; }
  int dim() const { return 2 * channels_; }
  // plane(level, p): level 0 = coarse, 1 = fine; p in {0:xy, 1:xz, 2:yz}.
  const Plane& plane(int level, int p) const {
    return planes_[static_cast<size_t>(level * 3 + p)];
  }

  Eigen::Index plane_param_index(const Plane& pl, int i0, int i1, int channel) const {
    return pl.block.offset +
           (static_cast<Eigen::Index>(i1) * pl.n0 + i0) * channels_ + channel;
  }

  void encode(const VecX& values, const Vec3& x, double* out) const;

  Vec3 backward(const VecX& values, VecX* grads, const Vec3& x, const double* dout,
                bool scatter) const;

 private:
  PlaneKind kind_;
  SceneBounds bounds_;
  int channels_ = 32;
  std::array<Plane, 6> planes_;
};

}  // namespace fieldslam
