#pragma once

#include "fieldslam/frame.hpp"
#include "fieldslam/rng.hpp"
#include "fieldslam/types.hpp"

#include <span>
#include <vector>

namespace fieldslam {

// One sampled pixel. World origin/direction are derived from the source
// frame's current pose at render time; the camera-frame direction and its
// z-component (which converts planar depth to ray length) are pose-free.
struct Ray {
  int frame_index = 0;  // index into the render window's frame list
  int px = 0, py = 0;
  Vec3 dir_cam;      // unit, camera frame
  double cos_theta;  // dir_cam.z() of the unit direction
  Vec3 gt_color = Vec3::Zero();
  double gt_depth = 0.0;  // planar, meters; 0 or > max_depth is invalid
  bool depth_valid = false;

  Vec3 origin_world(const Pose& pose) const { return pose.t; }
  Vec3 dir_world(const Pose& pose) const { return pose.q * dir_cam; }
};

struct RayBatch {
  std::vector<Ray> rays;
  int size() const { return static_cast<int>(rays.size()); }
};

// Back-projects the given pixels of one frame. Invalid depths (0 or beyond
// max_depth) are retained with depth_valid = false so depth-dependent losses
// can skip them.
RayBatch generate_rays(const Frame& frame, int frame_index,
                       std::span<const std::pair<int, int>> pixels, double max_depth);

// Uniformly random pixel selection helper for batch construction.
std::vector<std::pair<int, int>> sample_pixels(const Frame& frame, int count, Rng& rng);

// Ordered planar-depth samples along one ray: n_strat stratified over
// [near, far] plus, when gt_depth is valid, n_surf uniform over
// [gt_depth - trunc, gt_depth + trunc] clamped into [near, far].
void sample_points(double near, double far, double gt_depth, bool depth_valid, double trunc,
                   int n_strat, int n_surf, Rng& rng, std::vector<double>& out);

}  // namespace fieldslam
