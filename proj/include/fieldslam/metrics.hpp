#pragma once

#include "fieldslam/frame.hpp"
#include "fieldslam/mesh.hpp"
#include "fieldslam/render.hpp"
#include "fieldslam/scene_field.hpp"
#include "fieldslam/tum_io.hpp"

#include <vector>

namespace fieldslam {

using TrajectoryEstimate = std::vector<TimedPose>;

// Closed-form least-squares rigid alignment (rotation + translation, no
// scale) of the associated translation components, then RMSE of the residual
// norms in centimeters. Requires at least 3 timestamp-associated pairs.
double ate_rmse_cm(const TrajectoryEstimate& est, const TrajectoryEstimate& gt,
                   double assoc_tol_s = 0.02);

// The rigid transform minimizing sum |R a_i + t - b_i|^2. Exposed for tests.
void umeyama_rigid(const std::vector<Vec3>& a, const std::vector<Vec3>& b, Mat3* rotation,
                   Vec3* translation);

struct MeshMetrics {
  double accuracy_cm = 0.0;
  double completion_cm = 0.0;
  double completion_rate_pct = 0.0;
  double depth_l1_cm = 0.0;
};

// Point-cloud nearest-neighbor metrics over area-weighted surface samples:
// accuracy pred->gt, completion gt->pred, completion rate = share of gt
// samples matched within threshold_cm. Each mesh is sampled with its own
// generator seeded from `seed`, so identical meshes yield identical sample
// sets and mesh_metrics(a,b).accuracy == mesh_metrics(b,a).completion
// exactly. depth_l1_cm is left zero here.
MeshMetrics mesh_metrics(const TriMesh& pred, const TriMesh& gt, int samples, double threshold_cm,
                         uint64_t seed);

// Mean |rendered - gt| depth in cm over subsampled valid pixels of the given
// frames rendered at the given poses through the trained field.
double depth_l1_cm(const SceneField& field, const VecX& values,
                   const std::vector<const Frame*>& frames, const std::vector<Pose>& poses,
                   const RenderConfig& render_cfg, int pixel_stride, int threads, Rng& rng);

// Field iso-surface extraction with simple frustum culling against the given
// camera poses (skipped when poses is empty).
TriMesh extract_mesh(const SceneField& field, const VecX& values, double cell,
                     const std::vector<Pose>& poses, const CameraIntrinsics& k,
                     double max_depth);

}  // namespace fieldslam
