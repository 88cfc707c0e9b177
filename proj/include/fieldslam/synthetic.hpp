#pragma once

#include "fieldslam/camera.hpp"
#include "fieldslam/pose.hpp"
#include "fieldslam/types.hpp"

#include <filesystem>
#include <vector>

namespace fieldslam {

struct SynthBox {
  Vec3 center = Vec3::Zero();
  Vec3 half = Vec3::Ones();
};

struct SynthSphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

// Analytic ground-truth scene: a box room interior with primitive obstacles,
// checkerboard-plus-gradient coloring, and an orbit camera script. The SDF is
// exact (Lipschitz-1), positive in free space.
struct SyntheticSceneConfig {
  Vec3 room_min{0.0, 0.0, 0.0};
  Vec3 room_max{4.0, 3.0, 2.5};
  bool closed_room = true;
  std::vector<SynthBox> boxes = {
      {{0.7, 0.7, 0.4}, {0.3, 0.3, 0.4}},
      {{3.35, 2.35, 0.6}, {0.3, 0.2, 0.6}},
  };
  std::vector<SynthSphere> spheres = {
      {{2.0, 2.65, 0.45}, 0.3},
  };
  double checker_cell_m = 0.25;

  int frames = 50;
  int width = 320;
  int height = 240;
  double focal = 240.0;
  double depth_scale = 5000.0;
  double frame_dt = 0.05;
  double orbit_radius = 0.9;
  double orbit_height = 1.3;
  double orbit_pitch_deg = 15.0;  // downward pitch
  // Swept arc of the orbit. Kept well under a turn so the inter-frame motion
  // (arc/frames) stays inside the tracker's convergence basin.
  double orbit_arc_deg = 150.0;
};

class SyntheticScene {
 public:
  explicit SyntheticScene(SyntheticSceneConfig cfg = {});

  const SyntheticSceneConfig& config() const { return cfg_; }

  double sdf(const Vec3& p) const;
  Vec3 color(const Vec3& p) const;  // [0,1]^3

  CameraIntrinsics intrinsics() const;
  int frame_count() const { return cfg_.frames; }
  double timestamp(int i) const { return i * cfg_.frame_dt; }
  Pose pose_at(int i) const;  // camera-to-world, scripted orbit

 private:
  SyntheticSceneConfig cfg_;
};

// Sphere-traces every pixel: rgb in [0,1], depth planar in meters, 0 on miss.
// Tolerance 1e-5 m, at most 256 steps per ray.
void render_synthetic_frame(const SyntheticScene& scene, const Pose& pose,
                            const CameraIntrinsics& k, std::vector<float>& rgb,
                            std::vector<float>& depth);

// Writes the TUM directory layout (rgb/, depth/, rgb.txt, depth.txt,
// groundtruth.txt) plus intrinsics.txt and scene.txt (the scene description,
// so evaluation can rebuild the analytic ground truth). Refuses a non-empty
// out_dir unless force is set.
void write_synthetic_dataset(const SyntheticScene& scene, const std::filesystem::path& out_dir,
                             bool force);

void write_scene_file(const SyntheticSceneConfig& cfg, const std::filesystem::path& path);
SyntheticSceneConfig read_scene_file(const std::filesystem::path& path);

// Camera-to-world pose looking along `forward` with world +z as up reference
// (image y points downward in world).
Pose look_along(const Vec3& eye, const Vec3& forward);

}  // namespace fieldslam
