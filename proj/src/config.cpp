#include "fieldslam/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <variant>

namespace fieldslam {

namespace {

using Member = std::variant<int RunConfig::*, double RunConfig::*, bool RunConfig::*,
                            std::string RunConfig::*, uint64_t RunConfig::*>;

struct Entry {
  const char* name;
  Member member;
};

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = {
      {"seed", &RunConfig::seed},
      {"deterministic", &RunConfig::deterministic},
      {"threads", &RunConfig::threads},
      {"bounds_min_x", &RunConfig::bounds_min_x},
      {"bounds_min_y", &RunConfig::bounds_min_y},
      {"bounds_min_z", &RunConfig::bounds_min_z},
      {"bounds_max_x", &RunConfig::bounds_max_x},
      {"bounds_max_y", &RunConfig::bounds_max_y},
      {"bounds_max_z", &RunConfig::bounds_max_z},
      {"encoder", &RunConfig::encoder},
      {"oneblob_bins", &RunConfig::oneblob_bins},
      {"hash_levels", &RunConfig::hash_levels},
      {"hash_features", &RunConfig::hash_features},
      {"hash_table_log2", &RunConfig::hash_table_log2},
      {"hash_finest_voxel_m", &RunConfig::hash_finest_voxel_m},
      {"hash_base_resolution", &RunConfig::hash_base_resolution},
      {"plane_channels", &RunConfig::plane_channels},
      {"plane_coarse_m", &RunConfig::plane_coarse_m},
      {"plane_geo_fine_m", &RunConfig::plane_geo_fine_m},
      {"plane_app_fine_m", &RunConfig::plane_app_fine_m},
      {"g_dim", &RunConfig::g_dim},
      {"mlp_hidden", &RunConfig::mlp_hidden},
      {"beta_init", &RunConfig::beta_init},
      {"n_strat", &RunConfig::n_strat},
      {"n_surf", &RunConfig::n_surf},
      {"trunc_m", &RunConfig::trunc_m},
      {"near_m", &RunConfig::near_m},
      {"far_m", &RunConfig::far_m},
      {"max_depth_m", &RunConfig::max_depth_m},
      {"lambda_color", &RunConfig::lambda_color},
      {"lambda_depth", &RunConfig::lambda_depth},
      {"lambda_patch", &RunConfig::lambda_patch},
      {"lambda_smooth", &RunConfig::lambda_smooth},
      {"lambda_sdfm", &RunConfig::lambda_sdfm},
      {"lambda_sdft", &RunConfig::lambda_sdft},
      {"lambda_fs", &RunConfig::lambda_fs},
      {"patch_side", &RunConfig::patch_side},
      {"patch_reps", &RunConfig::patch_reps},
      {"patch_kernel", &RunConfig::patch_kernel},
      {"patch_stride", &RunConfig::patch_stride},
      {"ssim_c1", &RunConfig::ssim_c1},
      {"ssim_c2", &RunConfig::ssim_c2},
      {"smooth_region_m", &RunConfig::smooth_region_m},
      {"sdf_mid_fraction", &RunConfig::sdf_mid_fraction},
      {"pixels_track", &RunConfig::pixels_track},
      {"pixels_map", &RunConfig::pixels_map},
      {"iters_track", &RunConfig::iters_track},
      {"iters_map", &RunConfig::iters_map},
      {"iters_first", &RunConfig::iters_first},
      {"map_every", &RunConfig::map_every},
      {"gba_every", &RunConfig::gba_every},
      {"t_l", &RunConfig::t_l},
      {"top_n", &RunConfig::top_n},
      {"window_keyframes", &RunConfig::window_keyframes},
      {"keyframe_stride", &RunConfig::keyframe_stride},
      {"min_ray_alloc", &RunConfig::min_ray_alloc},
      {"lr_scene", &RunConfig::lr_scene},
      {"lr_decoder", &RunConfig::lr_decoder},
      {"lr_pose_track", &RunConfig::lr_pose_track},
      {"lr_pose_ba", &RunConfig::lr_pose_ba},
      {"iters_track_boot", &RunConfig::iters_track_boot},
      {"lr_pose_boot", &RunConfig::lr_pose_boot},
      {"use_gba", &RunConfig::use_gba},
      {"use_patch_loss", &RunConfig::use_patch_loss},
      {"divergence_factor", &RunConfig::divergence_factor},
      {"depth_scale", &RunConfig::depth_scale},
      {"assoc_tol_s", &RunConfig::assoc_tol_s},
      {"cam_fx", &RunConfig::cam_fx},
      {"cam_fy", &RunConfig::cam_fy},
      {"cam_cx", &RunConfig::cam_cx},
      {"cam_cy", &RunConfig::cam_cy},
      {"cam_width", &RunConfig::cam_width},
      {"cam_height", &RunConfig::cam_height},
      {"synth_frames", &RunConfig::synth_frames},
      {"synth_width", &RunConfig::synth_width},
      {"synth_height", &RunConfig::synth_height},
      {"synth_focal", &RunConfig::synth_focal},
      {"eval_frame_stride", &RunConfig::eval_frame_stride},
      {"eval_pixel_stride", &RunConfig::eval_pixel_stride},
      {"mesh_cell_m", &RunConfig::mesh_cell_m},
      {"mesh_samples", &RunConfig::mesh_samples},
      {"completion_thresh_cm", &RunConfig::completion_thresh_cm},
  };
  return entries;
}

const Entry* find_entry(const std::string& key) {
  for (const Entry& e : registry()) {
    if (key == e.name) return &e;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void set_value(RunConfig& cfg, const Entry& e, const std::string& raw) {
  const std::string v = trim(raw);
  if (std::holds_alternative<int RunConfig::*>(e.member)) {
    char* end = nullptr;
    const long parsed = std::strtol(v.c_str(), &end, 10);
    if (v.empty() || *end != '\0') {
      throw ConfigError(std::string(e.name) + ": integer required, got '" + v + "'");
    }
    cfg.*std::get<int RunConfig::*>(e.member) = static_cast<int>(parsed);
  } else if (std::holds_alternative<uint64_t RunConfig::*>(e.member)) {
    char* end = nullptr;
    const unsigned long long parsed = std::strtoull(v.c_str(), &end, 10);
    if (v.empty() || *end != '\0') {
      throw ConfigError(std::string(e.name) + ": unsigned integer required, got '" + v + "'");
    }
    cfg.*std::get<uint64_t RunConfig::*>(e.member) = parsed;
  } else if (std::holds_alternative<double RunConfig::*>(e.member)) {
    char* end = nullptr;
    const double parsed = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0') {
      throw ConfigError(std::string(e.name) + ": real number required, got '" + v + "'");
    }
    cfg.*std::get<double RunConfig::*>(e.member) = parsed;
  } else if (std::holds_alternative<bool RunConfig::*>(e.member)) {
    bool parsed;
    if (v == "true" || v == "1") {
      parsed = true;
    } else if (v == "false" || v == "0") {
      parsed = false;
    } else {
      throw ConfigError(std::string(e.name) + ": boolean (true/false) required, got '" + v + "'");
    }
    cfg.*std::get<bool RunConfig::*>(e.member) = parsed;
  } else {
    cfg.*std::get<std::string RunConfig::*>(e.member) = v;
  }
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string get_value(const RunConfig& cfg, const Entry& e) {
  if (std::holds_alternative<int RunConfig::*>(e.member)) {
    return std::to_string(cfg.*std::get<int RunConfig::*>(e.member));
  }
  if (std::holds_alternative<uint64_t RunConfig::*>(e.member)) {
    return std::to_string(cfg.*std::get<uint64_t RunConfig::*>(e.member));
  }
  if (std::holds_alternative<double RunConfig::*>(e.member)) {
    return format_double(cfg.*std::get<double RunConfig::*>(e.member));
  }
  if (std::holds_alternative<bool RunConfig::*>(e.member)) {
    return (cfg.*std::get<bool RunConfig::*>(e.member)) ? "true" : "false";
  }
  return cfg.*std::get<std::string RunConfig::*>(e.member);
}

}  // namespace

void apply_config_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Entry* e = find_entry(trim(key));
  if (!e) throw ConfigError("unknown config key '" + trim(key) + "'");
  set_value(cfg, *e, value);
}

void parse_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    }
    try {
      apply_config_override(cfg, t.substr(0, eq), t.substr(eq + 1));
    } catch (const ConfigError& err) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + err.what());
    }
  }
}

void validate_config(const RunConfig& cfg) {
  const std::pair<const char*, int> positive_ints[] = {
      {"oneblob_bins", cfg.oneblob_bins},
      {"hash_levels", cfg.hash_levels},
      {"hash_features", cfg.hash_features},
      {"hash_table_log2", cfg.hash_table_log2},
      {"hash_base_resolution", cfg.hash_base_resolution},
      {"plane_channels", cfg.plane_channels},
      {"g_dim", cfg.g_dim},
      {"mlp_hidden", cfg.mlp_hidden},
      {"n_strat", cfg.n_strat},
      {"n_surf", cfg.n_surf},
      {"patch_side", cfg.patch_side},
      {"patch_reps", cfg.patch_reps},
      {"patch_kernel", cfg.patch_kernel},
      {"patch_stride", cfg.patch_stride},
      {"pixels_track", cfg.pixels_track},
      {"pixels_map", cfg.pixels_map},
      {"iters_track", cfg.iters_track},
      {"iters_map", cfg.iters_map},
      {"iters_first", cfg.iters_first},
      {"map_every", cfg.map_every},
      {"gba_every", cfg.gba_every},
      {"top_n", cfg.top_n},
      {"window_keyframes", cfg.window_keyframes},
      {"keyframe_stride", cfg.keyframe_stride},
      {"min_ray_alloc", cfg.min_ray_alloc},
      {"synth_frames", cfg.synth_frames},
      {"synth_width", cfg.synth_width},
      {"synth_height", cfg.synth_height},
      {"eval_frame_stride", cfg.eval_frame_stride},
      {"eval_pixel_stride", cfg.eval_pixel_stride},
      {"mesh_samples", cfg.mesh_samples},
  };
  for (const auto& [name, v] : positive_ints) {
    if (v <= 0) throw ConfigError(std::string(name) + ": positive integer required");
  }
  const std::pair<const char*, double> positive_reals[] = {
      {"hash_finest_voxel_m", cfg.hash_finest_voxel_m},
      {"plane_coarse_m", cfg.plane_coarse_m},
      {"plane_geo_fine_m", cfg.plane_geo_fine_m},
      {"plane_app_fine_m", cfg.plane_app_fine_m},
      {"beta_init", cfg.beta_init},
      {"trunc_m", cfg.trunc_m},
      {"max_depth_m", cfg.max_depth_m},
      {"t_l", cfg.t_l},
      {"smooth_region_m", cfg.smooth_region_m},
      {"depth_scale", cfg.depth_scale},
      {"synth_focal", cfg.synth_focal},
      {"mesh_cell_m", cfg.mesh_cell_m},
      {"completion_thresh_cm", cfg.completion_thresh_cm},
      {"divergence_factor", cfg.divergence_factor},
  };
  for (const auto& [name, v] : positive_reals) {
    if (!(v > 0.0)) throw ConfigError(std::string(name) + ": positive real required");
  }
  if (!(cfg.sdf_mid_fraction > 0.0 && cfg.sdf_mid_fraction < 1.0)) {
    throw ConfigError("sdf_mid_fraction: value in (0,1) required");
  }
  if (cfg.encoder != "hybrid" && cfg.encoder != "hash" && cfg.encoder != "triplane") {
    throw ConfigError("encoder: one of hybrid|hash|triplane required");
  }
  if (!cfg.bounds().valid()) {
    throw ConfigError("bounds_max: must exceed bounds_min on every axis");
  }
  if (cfg.threads < 0) throw ConfigError("threads: non-negative integer required");
}

SceneBounds RunConfig::bounds() const {
  SceneBounds b;
  b.min_corner = Vec3(bounds_min_x, bounds_min_y, bounds_min_z);
  b.max_corner = Vec3(bounds_max_x, bounds_max_y, bounds_max_z);
  return b;
}

SceneFieldConfig RunConfig::field_config() const {
  SceneFieldConfig f;
  f.oneblob.bins = oneblob_bins;
  f.hash.levels = hash_levels;
  f.hash.features_per_level = hash_features;
  f.hash.table_size_log2 = hash_table_log2;
  f.hash.finest_voxel_m = hash_finest_voxel_m;
  f.hash.base_resolution = hash_base_resolution;
  f.planes.channels = plane_channels;
  f.planes.coarse_cell_m = plane_coarse_m;
  f.planes.geo_fine_cell_m = plane_geo_fine_m;
  f.planes.app_fine_cell_m = plane_app_fine_m;
  f.g_dim = g_dim;
  f.mlp_hidden = mlp_hidden;
  f.beta_init = beta_init;
  f.init_seed = seed + 1;
  // Single-encoder ablations double the surviving encoding's capacity.
  if (encoder == "hash") {
    f.use_planes = false;
    f.hash.features_per_level = 2 * hash_features;
  } else if (encoder == "triplane") {
    f.use_hash = false;
    f.planes.channels = 2 * plane_channels;
  }
  return f;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.render.n_strat = n_strat;
  t.render.n_surf = n_surf;
  t.render.trunc_m = trunc_m;
  t.render.near_m = near_m;
  t.render.far_m = far_m;
  t.render.max_depth_m = max_depth_m;
  t.weights.color = lambda_color;
  t.weights.depth = lambda_depth;
  t.weights.patch = use_patch_loss ? lambda_patch : 0.0;
  t.weights.smooth = lambda_smooth;
  t.weights.sdfm = lambda_sdfm;
  t.weights.sdft = lambda_sdft;
  t.weights.fs = lambda_fs;
  t.patch.side = patch_side;
  t.patch.reps = patch_reps;
  t.patch.kernel = patch_kernel;
  t.patch.stride = patch_stride;
  t.patch.c1 = ssim_c1;
  t.patch.c2 = ssim_c2;
  t.smooth_region_m = smooth_region_m;
  t.sdf_mid_fraction = sdf_mid_fraction;
  t.threads = threads;
  return t;
}

std::string echo_config(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> rows;
  for (const Entry& e : registry()) rows.emplace_back(e.name, get_value(cfg, e));
  std::sort(rows.begin(), rows.end());
  std::ostringstream os;
  for (const auto& [k, v] : rows) os << k << " = " << v << "\n";
  return os.str();
}

uint64_t config_hash(const RunConfig& cfg) {
  const std::string echo = echo_config(cfg);
  uint64_t h = 14695981039346656037ull;
  for (const char c : echo) {
    h ^= static_cast<uint8_t>(c);
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Entry& e : registry()) keys.emplace_back(e.name);
  std::sort(keys.begin(), keys.end());
  return keys;
}

}  // namespace fieldslam
