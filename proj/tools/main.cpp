#include "fieldslam/checkpoint.hpp"
#include "fieldslam/config.hpp"
#include "fieldslam/marching_cubes.hpp"
#include "fieldslam/metrics.hpp"
#include "fieldslam/pipeline.hpp"
#include "fieldslam/selftest.hpp"
#include "fieldslam/synthetic.hpp"
#include "fieldslam/threading.hpp"
#include "fieldslam/tum_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace fieldslam;
using nlohmann::json;

namespace {

// Exit codes: 0 ok, 2 config error, 3 tracking divergence, 4 selftest failure.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitSelftest = 4;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  // Named flag overrides; negative/empty = not given.
  int64_t seed = -1;
  int deterministic = -1;
  int threads = -1;
  bool no_gba = false;
  bool no_patch_loss = false;
  std::string encoder;
};

void add_common(CLI::App* cmd, CommonOpts* o) {
  cmd->add_option("--config", o->config_path, "config file (key = value lines)");
  cmd->add_option("--set", o->sets, "override one config key, e.g. --set t_l=0.09")
      ->take_all();
  cmd->add_option("--seed", o->seed, "config key: seed");
  cmd->add_flag("--deterministic", [o](int64_t) { o->deterministic = 1; },
                "config key: deterministic=true");
  cmd->add_option("--threads", o->threads, "config key: threads (0 = auto)");
}

void add_ablations(CLI::App* cmd, CommonOpts* o) {
  cmd->add_flag("--no-gba", o->no_gba, "config key: use_gba=false (ablation)");
  cmd->add_flag("--no-patch-loss", o->no_patch_loss,
                "config key: use_patch_loss=false (ablation)");
  cmd->add_option("--encoder", o->encoder, "config key: encoder = hybrid | hash | triplane");
}

RunConfig build_config(const CommonOpts& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) parse_config_file(cfg, o.config_path);
  for (const std::string& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_config_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed >= 0) cfg.seed = static_cast<uint64_t>(o.seed);
  if (o.deterministic >= 0) cfg.deterministic = o.deterministic != 0;
  if (o.threads >= 0) cfg.threads = o.threads;
  if (o.no_gba) cfg.use_gba = false;
  if (o.no_patch_loss) cfg.use_patch_loss = false;
  if (!o.encoder.empty()) cfg.encoder = o.encoder;
  validate_config(cfg);
  return cfg;
}

SyntheticSceneConfig synth_scene_config(const RunConfig& cfg) {
  SyntheticSceneConfig s;
  s.frames = cfg.synth_frames;
  s.width = cfg.synth_width;
  s.height = cfg.synth_height;
  s.focal = cfg.synth_focal;
  s.depth_scale = cfg.depth_scale;
  return s;
}

SequenceSource load_sequence(const fs::path& data_dir, const RunConfig& cfg) {
  TumLoadOptions opts;
  opts.depth_scale = cfg.depth_scale;
  opts.assoc_tol_s = cfg.assoc_tol_s;
  if (cfg.cam_fx > 0.0) {
    CameraIntrinsics k;
    k.fx = cfg.cam_fx;
    k.fy = cfg.cam_fy;
    k.cx = cfg.cam_cx;
    k.cy = cfg.cam_cy;
    k.width = cfg.cam_width;
    k.height = cfg.cam_height;
    k.depth_scale = cfg.depth_scale;
    opts.intrinsics = k;
  }
  return load_tum_sequence(data_dir, opts);
}

TrajectoryEstimate gt_trajectory(const std::vector<Frame>& frames) {
  TrajectoryEstimate gt;
  for (const Frame& f : frames) {
    if (f.gt_pose) gt.push_back({f.timestamp, *f.gt_pose});
  }
  return gt;
}

// Metrics available for this run; missing ground truth leaves entries null.
json compute_metrics(const RunConfig& cfg, const fs::path& data_dir,
                     const std::vector<Frame>& frames, const TrajectoryEstimate& est,
                     const SceneField& field, const VecX& values, const TriMesh& pred_mesh) {
  json report;
  report["frames"] = frames.size();
  const TrajectoryEstimate gt = gt_trajectory(frames);
  if (gt.size() >= 3) {
    report["ate_rmse_cm"] = ate_rmse_cm(est, gt, cfg.assoc_tol_s);
  } else {
    report["ate_rmse_cm"] = nullptr;
  }

  std::vector<const Frame*> eval_frames;
  std::vector<Pose> eval_poses;
  for (size_t i = 0; i < frames.size(); i += static_cast<size_t>(cfg.eval_frame_stride)) {
    eval_frames.push_back(&frames[i]);
    eval_poses.push_back(frames[i].gt_pose.value_or(frames[i].pose));
  }
  Rng rng(cfg.seed + 77);
  report["depth_l1_cm"] = depth_l1_cm(field, values, eval_frames, eval_poses,
                                      cfg.train_config().render, cfg.eval_pixel_stride,
                                      resolve_threads(cfg.threads), rng);

  if (fs::exists(data_dir / "scene.txt") && !pred_mesh.empty()) {
    const SyntheticScene scene(read_scene_file(data_dir / "scene.txt"));
    const SdfFunction gt_sdf = [&](const Vec3& p) { return scene.sdf(p); };
    const TriMesh gt_mesh = marching_cubes(gt_sdf, cfg.bounds(), cfg.mesh_cell_m);
    const MeshMetrics mm =
        mesh_metrics(pred_mesh, gt_mesh, cfg.mesh_samples, cfg.completion_thresh_cm, cfg.seed);
    report["accuracy_cm"] = mm.accuracy_cm;
    report["completion_cm"] = mm.completion_cm;
    report["completion_rate_pct"] = mm.completion_rate_pct;
  } else {
    report["accuracy_cm"] = nullptr;
    report["completion_cm"] = nullptr;
    report["completion_rate_pct"] = nullptr;
  }
  return report;
}

int cmd_synth(const CommonOpts& common, const std::string& out_dir, int frames, bool force) {
  RunConfig cfg = build_config(common);
  if (frames > 0) cfg.synth_frames = frames;
  validate_config(cfg);
  const SyntheticScene scene(synth_scene_config(cfg));
  write_synthetic_dataset(scene, out_dir, force);
  std::cout << "wrote " << cfg.synth_frames << " frames to " << out_dir << "\n";
  return kExitOk;
}

int cmd_run(const CommonOpts& common, const std::string& data_dir, const std::string& out_dir,
            bool force) {
  const RunConfig cfg = build_config(common);
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force) {
    throw IoError(out_dir + " exists and is not empty (use --force to overwrite)");
  }
  fs::create_directories(out_dir);
  const fs::path run_dir(out_dir);

  // Effective config echo goes first so a crashed run is still inspectable.
  std::ofstream(run_dir / "config.txt") << echo_config(cfg);

  SequenceSource seq = load_sequence(data_dir, cfg);
  const size_t n_frames = seq.frames.size();
  SlamPipeline pipe(cfg, std::move(seq));
  pipe.run();

  write_trajectory(run_dir / "trajectory.txt", pipe.trajectory());
  {
    std::ofstream log(run_dir / "loss_log.csv");
    pipe.write_loss_log(log);
  }
  save_checkpoint(run_dir / "checkpoint.bin", config_hash(cfg), pipe.scene_store(),
                  pipe.scene_adam());

  std::vector<Pose> poses;
  for (const Frame& f : pipe.frames()) poses.push_back(f.pose);
  const TriMesh mesh = extract_mesh(pipe.field(), pipe.scene_store().values(), cfg.mesh_cell_m,
                                    poses, pipe.frames()[0].intrinsics, cfg.max_depth_m);
  if (mesh.empty()) std::cerr << "warning: extracted mesh is empty\n";
  write_ply(run_dir / "mesh.ply", mesh);

  const json report = compute_metrics(cfg, data_dir, pipe.frames(), pipe.trajectory(),
                                      pipe.field(), pipe.scene_store().values(), mesh);
  std::ofstream(run_dir / "metrics.txt") << report.dump(2) << "\n";
  std::cout << report.dump(2) << "\n";

  const double diverged_share =
      n_frames > 0 ? static_cast<double>(pipe.diverged_frames()) / static_cast<double>(n_frames)
                   : 0.0;
  if (diverged_share > 0.2) {
    std::cerr << "tracking diverged on " << pipe.diverged_frames() << "/" << n_frames
              << " frames\n";
    return kExitDivergence;
  }
  return kExitOk;
}

// Rebuild the scene field of a finished run from its artifacts.
struct LoadedRun {
  RunConfig cfg;
  ParamStore store;
  std::unique_ptr<SceneField> field;
  TrajectoryEstimate trajectory;
};

LoadedRun load_run(const fs::path& run_dir) {
  LoadedRun run;
  parse_config_file(run.cfg, run_dir / "config.txt");
  validate_config(run.cfg);
  run.field = std::make_unique<SceneField>(run.cfg.bounds(), run.cfg.field_config(), run.store);
  AdamState adam = AdamState::make(run.store);
  load_checkpoint(run_dir / "checkpoint.bin", config_hash(run.cfg), run.store, adam);
  run.trajectory = read_trajectory(run_dir / "trajectory.txt");
  return run;
}

int cmd_eval(const std::string& run_dir_s, const std::string& data_dir,
             const std::string& out_path) {
  const fs::path run_dir(run_dir_s);
  for (const char* artifact : {"config.txt", "checkpoint.bin", "trajectory.txt", "mesh.ply"}) {
    if (!fs::exists(run_dir / artifact)) {
      throw IoError("run directory is missing " + std::string(artifact));
    }
  }
  LoadedRun run = load_run(run_dir);
  SequenceSource seq = load_sequence(data_dir, run.cfg);
  // Attach the estimated trajectory to the frames.
  for (Frame& f : seq.frames) {
    double best = std::numeric_limits<double>::infinity();
    for (const TimedPose& tp : run.trajectory) {
      if (std::abs(tp.timestamp - f.timestamp) < best) {
        best = std::abs(tp.timestamp - f.timestamp);
        f.pose = tp.pose;
      }
    }
  }
  const TriMesh mesh = read_ply(run_dir / "mesh.ply");
  const json report = compute_metrics(run.cfg, data_dir, seq.frames, run.trajectory, *run.field,
                                      run.store.values(), mesh);
  const fs::path out = out_path.empty() ? run_dir / "metrics.txt" : fs::path(out_path);
  std::ofstream(out) << report.dump(2) << "\n";
  std::cout << report.dump(2) << "\n";
  return kExitOk;
}

int cmd_mesh(const std::string& run_dir_s, const std::string& data_dir,
             const std::string& out_path, double cell) {
  LoadedRun run = load_run(run_dir_s);
  if (cell > 0.0) run.cfg.mesh_cell_m = cell;
  std::vector<Pose> poses;
  for (const TimedPose& tp : run.trajectory) poses.push_back(tp.pose);
  const SequenceSource seq = load_sequence(data_dir, run.cfg);
  const TriMesh mesh = extract_mesh(*run.field, run.store.values(), run.cfg.mesh_cell_m, poses,
                                    seq.intrinsics, run.cfg.max_depth_m);
  write_ply(out_path, mesh);
  std::cout << "wrote " << mesh.tris.size() << " triangles to " << out_path << "\n";
  return kExitOk;
}

int cmd_selftest(const CommonOpts& common, const std::string& fault_op) {
  const RunConfig cfg = build_config(common);
  SelftestOptions opts;
  opts.seed = cfg.seed;
  opts.threads = cfg.threads;
  opts.fault_op = fault_op;
  const SelftestReport report = run_selftest(opts, std::cout);
  if (!report.all_pass) {
    for (const SelftestCheck& c : report.checks) {
      if (!c.pass) std::cerr << "selftest failed: " << c.name << "\n";
    }
    return kExitSelftest;
  }
  std::cout << "all " << report.checks.size() << " checks passed\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dense RGB-D SLAM over a hybrid implicit scene field"};
  app.require_subcommand(1);

  CommonOpts common;
  const char* env_dir = std::getenv("FIELDSLAM_RUN_DIR");

  auto* synth = app.add_subcommand("synth", "generate a synthetic TUM-layout RGB-D dataset");
  std::string synth_out = env_dir ? std::string(env_dir) + "/dataset" : "dataset";
  int synth_frames = 0;
  bool synth_force = false;
  synth->add_option("--out", synth_out, "output dataset directory");
  synth->add_option("--frames", synth_frames, "config key: synth_frames");
  synth->add_flag("--force", synth_force, "overwrite a non-empty directory");
  add_common(synth, &common);

  auto* runc = app.add_subcommand("run", "run SLAM over an RGB-D sequence");
  std::string run_data, run_out = env_dir ? std::string(env_dir) + "/run" : "run";
  bool run_force = false;
  runc->add_option("--data", run_data, "dataset directory")->required();
  runc->add_option("--out", run_out, "run output directory");
  runc->add_flag("--force", run_force, "overwrite a non-empty directory");
  add_common(runc, &common);
  add_ablations(runc, &common);

  auto* evalc = app.add_subcommand("eval", "evaluate a finished run against ground truth");
  std::string eval_run, eval_data, eval_out;
  evalc->add_option("--run", eval_run, "run directory")->required();
  evalc->add_option("--data", eval_data, "dataset directory")->required();
  evalc->add_option("--out", eval_out, "report path (default: <run>/metrics.txt)");

  auto* meshc = app.add_subcommand("mesh", "extract a mesh from a run checkpoint");
  std::string mesh_run, mesh_data, mesh_out = "mesh.ply";
  double mesh_cell = 0.0;
  meshc->add_option("--run", mesh_run, "run directory")->required();
  meshc->add_option("--data", mesh_data, "dataset directory")->required();
  meshc->add_option("--out", mesh_out, "output PLY path");
  meshc->add_option("--resolution", mesh_cell, "config key: mesh_cell_m");

  auto* selftestc = app.add_subcommand("selftest", "gradient and oracle self-checks");
  std::string fault_op;
  selftestc->add_option("--inject-adjoint-fault", fault_op,
                        "testing hook: break one op's adjoint on purpose")
      ->group("");  // hidden
  add_common(selftestc, &common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(synth)) return cmd_synth(common, synth_out, synth_frames, synth_force);
    if (app.got_subcommand(runc)) return cmd_run(common, run_data, run_out, run_force);
    if (app.got_subcommand(evalc)) return cmd_eval(eval_run, eval_data, eval_out);
    if (app.got_subcommand(meshc)) return cmd_mesh(mesh_run, mesh_data, mesh_out, mesh_cell);
    if (app.got_subcommand(selftestc)) return cmd_selftest(common, fault_op);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
