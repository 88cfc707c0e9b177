#pragma once

#include "fieldslam/types.hpp"

#include <algorithm>

namespace fieldslam {

// Axis-aligned scene box in meters. Query points are clamped into the box
// before any encoding; grids and planes are laid out to cover it.
struct SceneBounds {
  Vec3 min_corner{0.0, 0.0, 0.0};
  Vec3 max_corner{1.0, 1.0, 1.0};

  bool valid() const { return (max_corner.array() > min_corner.array()).all(); }

  Vec3 extent() const { return max_corner - min_corner; }
  double longest_axis() const { return extent().maxCoeff(); }
  double diagonal() const { return extent().norm(); }

  bool contains(const Vec3& x) const {
    return (x.array() >= min_corner.array()).all() && (x.array() <= max_corner.array()).all();
  }

  Vec3 clamp(const Vec3& x) const {
    return x.cwiseMax(min_corner).cwiseMin(max_corner);
  }

  // Normalized coordinates in [0,1]^3 (clamped).
  Vec3 normalized(const Vec3& x) const {
    const Vec3 c = clamp(x);
    return (c - min_corner).cwiseQuotient(extent());
  }
};

}  // namespace fieldslam
