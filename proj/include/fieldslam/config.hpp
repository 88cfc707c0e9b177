#pragma once

#include "fieldslam/bounds.hpp"
#include "fieldslam/scene_field.hpp"
#include "fieldslam/train.hpp"
#include "fieldslam/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fieldslam {

// Every run option, with the documented defaults. Flat key=value config files
// and CLI --set overrides address these fields by the registry names in
// config.cpp (same spelling as the member names).
struct RunConfig {
  // run control
  uint64_t seed = 0;
  bool deterministic = true;
  int threads = 0;  // 0 = auto-detect

  // Scene bounds, meters. Default covers the default synthetic room with a
  // margin so wall surfaces sit in the interior of the encoded volume.
  double bounds_min_x = -0.25, bounds_min_y = -0.25, bounds_min_z = -0.25;
  double bounds_max_x = 4.25, bounds_max_y = 3.25, bounds_max_z = 2.75;

  // encoders
  std::string encoder = "hybrid";  // hybrid | hash | triplane
  int oneblob_bins = 16;
  int hash_levels = 16;
  int hash_features = 2;
  int hash_table_log2 = 13;
  double hash_finest_voxel_m = 0.02;
  int hash_base_resolution = 16;
  int plane_channels = 32;
  double plane_coarse_m = 0.24;
  double plane_geo_fine_m = 0.06;
  double plane_app_fine_m = 0.03;

  // decoders
  int g_dim = 15;
  int mlp_hidden = 32;
  double beta_init = 10.0;

  // rendering
  int n_strat = 32;
  int n_surf = 8;
  double trunc_m = 0.06;
  double near_m = 0.0;
  double far_m = 0.0;  // 0 = scene diagonal
  double max_depth_m = 10.0;

  // losses
  double lambda_color = 5.0;
  double lambda_depth = 0.1;
  double lambda_patch = 1.0;
  double lambda_smooth = 1e-6;
  double lambda_sdfm = 200.0;
  double lambda_sdft = 10.0;
  double lambda_fs = 5.0;
  int patch_side = 32;
  int patch_reps = 10;
  int patch_kernel = 3;
  int patch_stride = 4;
  double ssim_c1 = 1e-4;
  double ssim_c2 = 9e-4;
  double smooth_region_m = 0.24;
  double sdf_mid_fraction = 0.5;

  // pipeline
  int pixels_track = 2000;
  int pixels_map = 4000;
  int iters_track = 10;
  int iters_map = 20;
  int iters_first = 200;
  int map_every = 5;
  int gba_every = 20;
  double t_l = 0.09;
  int top_n = 15;
  int window_keyframes = 4;
  int keyframe_stride = 20;
  int min_ray_alloc = 32;
  double lr_scene = 1e-2;
  double lr_decoder = 1e-3;
  double lr_pose_track = 1e-3;
  double lr_pose_ba = 1e-4;
  // The second frame has no constant-velocity prior and may need to cover the
  // whole inter-frame motion: it gets iters_track_boot iterations with the
  // learning rate decaying geometrically from lr_pose_boot to lr_pose_track.
  int iters_track_boot = 60;
  double lr_pose_boot = 1e-2;
  bool use_gba = true;
  bool use_patch_loss = true;
  double divergence_factor = 10.0;

  // data loading
  double depth_scale = 5000.0;
  double assoc_tol_s = 0.02;
  double cam_fx = 0.0, cam_fy = 0.0, cam_cx = 0.0, cam_cy = 0.0;  // 0 = from dataset
  int cam_width = 0, cam_height = 0;

  // synthetic dataset generation
  int synth_frames = 50;
  int synth_width = 320;
  int synth_height = 240;
  double synth_focal = 240.0;

  // evaluation
  int eval_frame_stride = 5;
  int eval_pixel_stride = 8;
  double mesh_cell_m = 0.02;
  int mesh_samples = 200000;
  double completion_thresh_cm = 5.0;

  SceneBounds bounds() const;
  SceneFieldConfig field_config() const;  // applies the encoder ablation
  TrainConfig train_config() const;
};

// key = value text, '#' comments, unknown keys rejected with the line number.
void parse_config_file(RunConfig& cfg, const std::filesystem::path& path);

// One key=value pair (CLI --set). Throws ConfigError naming key and type.
void apply_config_override(RunConfig& cfg, const std::string& key, const std::string& value);

// Positivity and enum checks; messages name the key.
void validate_config(const RunConfig& cfg);

// Canonical echo: all keys sorted, one per line. Parse(echo) == cfg.
std::string echo_config(const RunConfig& cfg);

// FNV-1a hash of the canonical echo; stored in checkpoints.
uint64_t config_hash(const RunConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace fieldslam
