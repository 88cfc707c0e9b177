#pragma once

#include "fieldslam/losses.hpp"
#include "fieldslam/rays.hpp"
#include "fieldslam/render.hpp"
#include "fieldslam/scene_field.hpp"

#include <iosfwd>
#include <span>
#include <vector>

namespace fieldslam {

struct TrainConfig {
  RenderConfig render;
  LossWeights weights;
  PatchSpec patch;
  double smooth_region_m = 0.24;
  double sdf_mid_fraction = 0.5;
  int threads = 1;
};

// A frame participating in one optimization window. pose_slot selects the
// 6-parameter increment block in the pose parameter vector (slot s occupies
// entries [6s, 6s+6)); -1 keeps the frame's pose frozen (gauge anchor, or
// frames outside the optimized set).
struct WindowFrame {
  const Frame* frame = nullptr;
  int pose_slot = -1;
};

// Everything random about one training iteration, fixed up front: rays,
// per-ray depth samples, patch draws and the smoothness region. forward_loss
// is a pure function of (scene values, pose increments, plan), which is what
// the finite-difference checks rely on.
struct Plan {
  std::vector<Ray> rays;
  std::vector<int> offset, count;
  std::vector<double> z;
  PatchDraws patch_draws;
  SmoothnessRegion smooth_region;
  double far = 0.0;

  int ray_count() const { return static_cast<int>(rays.size()); }
};

Plan make_plan(const SceneField& field, std::span<const WindowFrame> window,
               std::span<const int> rays_per_frame, const TrainConfig& cfg, Rng& rng);

// Poses actually used for rendering: frame pose composed with the current
// increment of its slot (increments are zero except inside gradient checks).
Pose resolved_pose(const WindowFrame& wf, const VecX& pose_values);

struct ForwardResult {
  RenderOutput render;
  LossBreakdown losses;
  // Mean over each frame's rays of the ray-decomposable weighted terms
  // (color, depth, sdfm, sdft, fs); used as the keyframe "global loss".
  std::vector<double> per_frame_loss;
  std::vector<int> per_frame_rays;
};

ForwardResult forward_loss(const SceneField& field, const VecX& scene_values,
                           const VecX& pose_values, std::span<const WindowFrame> window,
                           const Plan& plan, const TrainConfig& cfg);

// Accumulates d(total)/d(scene params) into scene_grads (when not null) and
// d(total)/d(pose increments) into pose_grads (slots of optimized frames).
// Recomputes per-sample intermediates chunk by chunk; fwd must come from
// forward_loss on identical inputs.
void backward(const SceneField& field, const VecX& scene_values, const VecX& pose_values,
              std::span<const WindowFrame> window, const Plan& plan, const ForwardResult& fwd,
              const TrainConfig& cfg, VecX* scene_grads, VecX* pose_grads);

// Debug dump: one CSV row per sample with columns
// ray,px,py,frame,z,sdf,sigma,weight.
void write_ray_dump(std::ostream& os, std::span<const Ray> rays, const RenderOutput& render);

}  // namespace fieldslam
