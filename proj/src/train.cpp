#include "fieldslam/train.hpp"

#include "fieldslam/threading.hpp"

#include <cmath>
#include <ostream>

namespace fieldslam {

namespace {
// log(1e-7): transmittance threshold for the opaque-suffix cutoff.
constexpr double kLogOpaque = -16.118095650958319;
}  // namespace

Pose resolved_pose(const WindowFrame& wf, const VecX& pose_values) {
  if (wf.pose_slot < 0) return wf.frame->pose;
  Vec6 xi = pose_values.segment<6>(6 * wf.pose_slot);
  return apply_increment(wf.frame->pose, xi);
}

Plan make_plan(const SceneField& field, std::span<const WindowFrame> window,
               std::span<const int> rays_per_frame, const TrainConfig& cfg, Rng& rng) {
  Plan plan;
  plan.far = cfg.render.far_m > 0.0 ? cfg.render.far_m : field.bounds().diagonal();

  for (size_t i = 0; i < window.size(); ++i) {
    const Frame& frame = *window[i].frame;
    const auto pixels = sample_pixels(frame, rays_per_frame[i], rng);
    RayBatch batch =
        generate_rays(frame, static_cast<int>(i), pixels, cfg.render.max_depth_m);
    plan.rays.insert(plan.rays.end(), batch.rays.begin(), batch.rays.end());
  }

  std::vector<double> zbuf;
  plan.offset.reserve(plan.rays.size());
  plan.count.reserve(plan.rays.size());
  for (const Ray& ray : plan.rays) {
    sample_points(cfg.render.near_m, plan.far, ray.gt_depth, ray.depth_valid, cfg.render.trunc_m,
                  cfg.render.n_strat, cfg.render.n_surf, rng, zbuf);
    plan.offset.push_back(static_cast<int>(plan.z.size()));
    plan.count.push_back(static_cast<int>(zbuf.size()));
    plan.z.insert(plan.z.end(), zbuf.begin(), zbuf.end());
  }

  plan.patch_draws = make_patch_draws(plan.ray_count(), cfg.patch, rng);
  plan.smooth_region = draw_smoothness_region(field.bounds(), cfg.smooth_region_m, rng);
  return plan;
}

namespace {

struct RaySpans {
  std::vector<uint8_t> depth_valid;
  std::vector<double> gt_depth;
  std::vector<Vec3> gt_color;
};

RaySpans collect_gt(const Plan& plan) {
  RaySpans s;
  const size_t n = plan.rays.size();
  s.depth_valid.resize(n);
  s.gt_depth.resize(n);
  s.gt_color.resize(n);
  for (size_t i = 0; i < n; ++i) {
    s.depth_valid[i] = plan.rays[i].depth_valid ? 1 : 0;
    s.gt_depth[i] = plan.rays[i].gt_depth;
    s.gt_color[i] = plan.rays[i].gt_color;
  }
  return s;
}

}  // namespace

ForwardResult forward_loss(const SceneField& field, const VecX& scene_values,
                           const VecX& pose_values, std::span<const WindowFrame> window,
                           const Plan& plan, const TrainConfig& cfg) {
  ForwardResult out;
  const int n_rays = plan.ray_count();
  const int n_samples = static_cast<int>(plan.z.size());
  RenderOutput& r = out.render;
  r.offset = plan.offset;
  r.count = plan.count;
  r.z = plan.z;
  r.sdf.resize(static_cast<size_t>(n_samples));
  r.raw_rgb.resize(static_cast<size_t>(n_samples));
  r.sigma.resize(static_cast<size_t>(n_samples));
  r.weight.resize(static_cast<size_t>(n_samples));
  r.evaluated.assign(static_cast<size_t>(n_samples), 1);
  r.color.resize(static_cast<size_t>(n_rays));
  r.depth.resize(static_cast<size_t>(n_rays));

  std::vector<Pose> poses(window.size());
  for (size_t i = 0; i < window.size(); ++i) poses[i] = resolved_pose(window[i], pose_values);

  const double beta = field.beta(scene_values);

  parallel_for_slots(n_rays, cfg.threads, [&](int begin, int end, int) {
    for (int ri = begin; ri < end; ++ri) {
      const Ray& ray = plan.rays[static_cast<size_t>(ri)];
      const Pose& pose = poses[static_cast<size_t>(ray.frame_index)];
      const Vec3 o = ray.origin_world(pose);
      const Vec3 d = ray.dir_world(pose);
      const int off = plan.offset[static_cast<size_t>(ri)];
      const int cnt = plan.count[static_cast<size_t>(ri)];
      // Once the ray is opaque and past the truncation band no loss term can
      // see later samples; stop querying the field there.
      const double band_end = ray.depth_valid ? ray.gt_depth + cfg.render.trunc_m
                                              : -std::numeric_limits<double>::infinity();
      double tlog = 0.0;
      for (int s = off; s < off + cnt; ++s) {
        const double z = plan.z[static_cast<size_t>(s)];
        if (tlog < kLogOpaque && z > band_end) {
          r.sdf[static_cast<size_t>(s)] = 1.0;
          r.raw_rgb[static_cast<size_t>(s)] = Vec3::Zero();
          r.sigma[static_cast<size_t>(s)] = 0.0;
          r.evaluated[static_cast<size_t>(s)] = 0;
          continue;
        }
        const Vec3 p = o + (z / ray.cos_theta) * d;
        double sdf;
        Vec3 rgb;
        field.query(scene_values, p, &sdf, &rgb, nullptr);
        r.sdf[static_cast<size_t>(s)] = sdf;
        r.raw_rgb[static_cast<size_t>(s)] = rgb;
        const double sigma = sdf_to_density(sdf, beta);
        r.sigma[static_cast<size_t>(s)] = sigma;
        tlog -= sigma;
      }
      Vec3 c;
      double depth;
      composite({r.sigma.data() + off, static_cast<size_t>(cnt)},
                {r.raw_rgb.data() + off, static_cast<size_t>(cnt)},
                {r.z.data() + off, static_cast<size_t>(cnt)},
                {r.weight.data() + off, static_cast<size_t>(cnt)}, &c, &depth);
      r.color[static_cast<size_t>(ri)] = c;
      r.depth[static_cast<size_t>(ri)] = depth;
    }
  });

  const RaySpans gt = collect_gt(plan);
  const ColorDepthLoss cd =
      color_depth_loss(r.color, r.depth, gt.gt_color, gt.gt_depth, gt.depth_valid);
  const SdfLosses sl =
      sdf_losses(r, gt.gt_depth, gt.depth_valid, cfg.render.trunc_m, cfg.sdf_mid_fraction);

  LossBreakdown& lb = out.losses;
  lb.weights = cfg.weights;
  lb.l_color = cd.l_color;
  lb.l_depth = cd.l_depth;
  lb.depth_term_empty = cd.depth_empty;
  lb.l_patch = patch_loss(r.color, gt.gt_color, plan.patch_draws, cfg.patch);
  lb.l_smooth = field.hash_grid()
                    ? smoothness_loss(*field.hash_grid(), scene_values, plan.smooth_region)
                    : 0.0;
  lb.l_sdfm = sl.l_sdfm;
  lb.l_sdft = sl.l_sdft;
  lb.l_fs = sl.l_fs;
  lb.finalize();

  // Per-frame means of the ray-decomposable weighted terms, for keyframe
  // scoring. Each ray's own truncation/free-space means are computed exactly
  // as in sdf_losses but attributed to its source frame.
  out.per_frame_loss.assign(window.size(), 0.0);
  out.per_frame_rays.assign(window.size(), 0);
  std::vector<double> color_sum(window.size(), 0.0), depth_sum(window.size(), 0.0),
      sdf_sum(window.size(), 0.0);
  std::vector<int> depth_count(window.size(), 0);
  for (int ri = 0; ri < n_rays; ++ri) {
    const Ray& ray = plan.rays[static_cast<size_t>(ri)];
    const size_t f = static_cast<size_t>(ray.frame_index);
    out.per_frame_rays[f] += 1;
    color_sum[f] += (r.color[static_cast<size_t>(ri)] - ray.gt_color).squaredNorm() / 3.0;
    if (!ray.depth_valid) continue;
    depth_count[f] += 1;
    const double de = r.depth[static_cast<size_t>(ri)] - ray.gt_depth;
    depth_sum[f] += de * de;
    const int off = plan.offset[static_cast<size_t>(ri)];
    const int cnt = plan.count[static_cast<size_t>(ri)];
    double mid = 0.0, tail = 0.0, fs = 0.0;
    int nm = 0, nt = 0, nf = 0;
    for (int s = off; s < off + cnt; ++s) {
      const double dz = r.z[static_cast<size_t>(s)] - ray.gt_depth;
      const double sdf = r.sdf[static_cast<size_t>(s)];
      if (std::abs(dz) < cfg.render.trunc_m) {
        const double res = sdf * cfg.render.trunc_m + dz;
        if (std::abs(dz) < cfg.sdf_mid_fraction * cfg.render.trunc_m) {
          mid += res * res;
          ++nm;
        } else {
          tail += res * res;
          ++nt;
        }
      } else if (dz <= -cfg.render.trunc_m) {
        const double res = sdf - 1.0;
        fs += res * res;
        ++nf;
      }
    }
    sdf_sum[f] += cfg.weights.sdfm * (nm > 0 ? mid / nm : 0.0) +
                  cfg.weights.sdft * (nt > 0 ? tail / nt : 0.0) +
                  cfg.weights.fs * (nf > 0 ? fs / nf : 0.0);
  }
  for (size_t f = 0; f < window.size(); ++f) {
    if (out.per_frame_rays[f] == 0) continue;
    double loss = cfg.weights.color * color_sum[f] / out.per_frame_rays[f];
    if (depth_count[f] > 0) {
      loss += cfg.weights.depth * depth_sum[f] / depth_count[f];
      loss += sdf_sum[f] / depth_count[f];
    }
    out.per_frame_loss[f] = loss;
  }
  return out;
}

void backward(const SceneField& field, const VecX& scene_values, const VecX& pose_values,
              std::span<const WindowFrame> window, const Plan& plan, const ForwardResult& fwd,
              const TrainConfig& cfg, VecX* scene_grads, VecX* pose_grads) {
  const int n_rays = plan.ray_count();
  const RenderOutput& r = fwd.render;
  const RaySpans gt = collect_gt(plan);

  // Per-ray adjoints of composited color and depth (cross-ray terms first).
  std::vector<Vec3> dcolor(static_cast<size_t>(n_rays), Vec3::Zero());
  std::vector<double> ddepth(static_cast<size_t>(n_rays), 0.0);
  color_depth_loss_backward(r.color, r.depth, gt.gt_color, gt.gt_depth, gt.depth_valid,
                            cfg.weights.color, cfg.weights.depth, dcolor, ddepth);
  patch_loss_backward(r.color, gt.gt_color, plan.patch_draws, cfg.patch, cfg.weights.patch,
                      dcolor);

  // Direct per-sample SDF adjoints from the truncation/free-space losses.
  std::vector<double> dsdf_direct(r.sdf.size(), 0.0);
  sdf_losses_backward(r, gt.gt_depth, gt.depth_valid, cfg.render.trunc_m, cfg.sdf_mid_fraction,
                      cfg.weights.sdfm, cfg.weights.sdft, cfg.weights.fs, dsdf_direct);

  std::vector<Pose> poses(window.size());
  for (size_t i = 0; i < window.size(); ++i) poses[i] = resolved_pose(window[i], pose_values);
  const double beta = field.beta(scene_values);

  const int n_slots = std::max(1, std::min(cfg.threads, n_rays));
  const bool want_scene = scene_grads != nullptr;
  std::vector<VecX> scene_buf;
  std::vector<VecX> pose_buf;
  std::vector<double> beta_buf(static_cast<size_t>(n_slots), 0.0);
  if (want_scene) {
    scene_buf.assign(static_cast<size_t>(n_slots), VecX::Zero(scene_values.size()));
  }
  if (pose_grads) {
    pose_buf.assign(static_cast<size_t>(n_slots), VecX::Zero(pose_grads->size()));
  }

  parallel_for_slots(n_rays, n_slots, [&](int begin, int end, int slot) {
    VecX* sbuf = want_scene ? &scene_buf[static_cast<size_t>(slot)] : nullptr;
    VecX* pbuf = pose_grads ? &pose_buf[static_cast<size_t>(slot)] : nullptr;
    std::vector<double> dsigma;
    std::vector<Vec3> drgb;
    SceneField::SampleCache cache;
    for (int ri = begin; ri < end; ++ri) {
      const Ray& ray = plan.rays[static_cast<size_t>(ri)];
      const WindowFrame& wf = window[static_cast<size_t>(ray.frame_index)];
      const Pose& pose = poses[static_cast<size_t>(ray.frame_index)];
      const Vec3 o = ray.origin_world(pose);
      const Vec3 d = ray.dir_world(pose);
      const int off = plan.offset[static_cast<size_t>(ri)];
      const int cnt = plan.count[static_cast<size_t>(ri)];
      dsigma.resize(static_cast<size_t>(cnt));
      drgb.resize(static_cast<size_t>(cnt));
      composite_backward({r.sigma.data() + off, static_cast<size_t>(cnt)},
                         {r.raw_rgb.data() + off, static_cast<size_t>(cnt)},
                         {r.z.data() + off, static_cast<size_t>(cnt)},
                         {r.weight.data() + off, static_cast<size_t>(cnt)},
                         dcolor[static_cast<size_t>(ri)], ddepth[static_cast<size_t>(ri)],
                         dsigma, drgb);
      const bool pose_active = pbuf && wf.pose_slot >= 0;
      Vec3 dom = Vec3::Zero();   // dL/d(omega) of this ray's pose increment
      Vec3 du = Vec3::Zero();    // dL/d(translation increment)
      for (int s = 0; s < cnt; ++s) {
        if (!r.evaluated[static_cast<size_t>(off + s)]) continue;
        const double sdf = r.sdf[static_cast<size_t>(off + s)];
        const DensityGrad dg = sdf_to_density_grad(sdf, beta);
        const double dsdf = dsigma[static_cast<size_t>(s)] * dg.d_sdf +
                            dsdf_direct[static_cast<size_t>(off + s)];
        if (sbuf) {
          // d sigma / d log(beta) = beta * d sigma / d beta
          (*sbuf)[field.log_beta_index()] +=
              dsigma[static_cast<size_t>(s)] * dg.d_beta * beta;
        }
        const double z = plan.z[static_cast<size_t>(off + s)];
        const Vec3 p = o + (z / ray.cos_theta) * d;
        field.query(scene_values, p, nullptr, nullptr, &cache);
        const Vec3 dx = field.query_backward(scene_values, sbuf, p, cache, dsdf,
                                             drgb[static_cast<size_t>(s)], want_scene);
        if (pose_active) {
          dom += (p - o).cross(dx);
          du += dx;
        }
      }
      if (pose_active) {
        pbuf->segment<3>(6 * wf.pose_slot) += dom;
        pbuf->segment<3>(6 * wf.pose_slot + 3) += du;
      }
    }
  });

  // Deterministic ordered reduction across slots. The whole step's
  // contribution is assembled first and applied with a single add per entry,
  // which keeps repeated accumulation exactly additive.
  if (scene_grads) {
    VecX delta = VecX::Zero(scene_values.size());
    for (int s = 0; s < n_slots; ++s) delta += scene_buf[static_cast<size_t>(s)];
    if (field.hash_grid()) {
      smoothness_loss_backward(*field.hash_grid(), scene_values, plan.smooth_region,
                               cfg.weights.smooth, delta);
    }
    *scene_grads += delta;
  }
  if (pose_grads) {
    VecX delta = VecX::Zero(pose_grads->size());
    for (int s = 0; s < n_slots; ++s) delta += pose_buf[static_cast<size_t>(s)];
    *pose_grads += delta;
  }
}

void write_ray_dump(std::ostream& os, std::span<const Ray> rays, const RenderOutput& render) {
  os << "ray,px,py,frame,z,sdf,sigma,weight,evaluated\n";
  for (int ri = 0; ri < render.ray_count(); ++ri) {
    const Ray& ray = rays[static_cast<size_t>(ri)];
    const int off = render.begin_of(ri), cnt = render.samples_of(ri);
    for (int s = off; s < off + cnt; ++s) {
      os << ri << ',' << ray.px << ',' << ray.py << ',' << ray.frame_index << ','
         << render.z[static_cast<size_t>(s)] << ',' << render.sdf[static_cast<size_t>(s)] << ','
         << render.sigma[static_cast<size_t>(s)] << ',' << render.weight[static_cast<size_t>(s)]
         << ',' << static_cast<int>(render.evaluated[static_cast<size_t>(s)]) << '\n';
    }
  }
}

}  // namespace fieldslam
