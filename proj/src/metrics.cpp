#include "fieldslam/metrics.hpp"

#include "fieldslam/marching_cubes.hpp"
#include "fieldslam/rays.hpp"
#include "fieldslam/threading.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace fieldslam {

void umeyama_rigid(const std::vector<Vec3>& a, const std::vector<Vec3>& b, Mat3* rotation,
                   Vec3* translation) {
  const size_t n = a.size();
  Vec3 ca = Vec3::Zero(), cb = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    ca += a[i];
    cb += b[i];
  }
  ca /= static_cast<double>(n);
  cb /= static_cast<double>(n);
  Mat3 h = Mat3::Zero();
  for (size_t i = 0; i < n; ++i) h += (b[i] - cb) * (a[i] - ca).transpose();
  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  *rotation = svd.matrixU() * d * svd.matrixV().transpose();
  *translation = cb - *rotation * ca;
}

double ate_rmse_cm(const TrajectoryEstimate& est, const TrajectoryEstimate& gt,
                   double assoc_tol_s) {
  std::vector<Vec3> a, b;
  size_t gi = 0;
  for (const TimedPose& e : est) {
    // gt is time-sorted; advance to the nearest timestamp.
    while (gi + 1 < gt.size() && std::abs(gt[gi + 1].timestamp - e.timestamp) <=
                                     std::abs(gt[gi].timestamp - e.timestamp)) {
      ++gi;
    }
    if (gt.empty() || std::abs(gt[gi].timestamp - e.timestamp) > assoc_tol_s) continue;
    a.push_back(e.pose.t);
    b.push_back(gt[gi].pose.t);
  }
  if (a.size() < 3) {
    throw std::runtime_error("ate_rmse: need at least 3 associated pose pairs, got " +
                             std::to_string(a.size()));
  }
  Mat3 r;
  Vec3 t;
  umeyama_rigid(a, b, &r, &t);
  double ss = 0.0;
  for (size_t i = 0; i < a.size(); ++i) ss += (r * a[i] + t - b[i]).squaredNorm();
  return std::sqrt(ss / static_cast<double>(a.size())) * 100.0;
}

MeshMetrics mesh_metrics(const TriMesh& pred, const TriMesh& gt, int samples, double threshold_cm,
                         uint64_t seed) {
  if (pred.empty()) throw std::runtime_error("mesh_metrics: predicted mesh is empty");
  if (gt.empty()) throw std::runtime_error("mesh_metrics: ground-truth mesh is empty");
  Rng rng_pred(seed), rng_gt(seed);
  const std::vector<Vec3> pred_pts = sample_mesh_surface(pred, samples, rng_pred);
  const std::vector<Vec3> gt_pts = sample_mesh_surface(gt, samples, rng_gt);
  const KdTree3 pred_nn(pred_pts);
  const KdTree3 gt_nn(gt_pts);

  MeshMetrics m;
  double acc = 0.0;
  for (const Vec3& p : pred_pts) acc += gt_nn.nearest_distance(p);
  m.accuracy_cm = acc / static_cast<double>(pred_pts.size()) * 100.0;
  double comp = 0.0;
  int within = 0;
  for (const Vec3& p : gt_pts) {
    const double d = pred_nn.nearest_distance(p);
    comp += d;
    if (d * 100.0 < threshold_cm) ++within;
  }
  m.completion_cm = comp / static_cast<double>(gt_pts.size()) * 100.0;
  m.completion_rate_pct = 100.0 * static_cast<double>(within) / static_cast<double>(gt_pts.size());
  return m;
}

double depth_l1_cm(const SceneField& field, const VecX& values,
                   const std::vector<const Frame*>& frames, const std::vector<Pose>& poses,
                   const RenderConfig& render_cfg, int pixel_stride, int threads, Rng& rng) {
  const double far = render_cfg.far_m > 0.0 ? render_cfg.far_m : field.bounds().diagonal();
  const double beta = field.beta(values);

  struct EvalRay {
    Vec3 origin, dir;
    double cos_theta, gt;
    std::vector<double> z;
  };
  std::vector<EvalRay> rays;
  for (size_t fi = 0; fi < frames.size(); ++fi) {
    const Frame& f = *frames[fi];
    const Pose& pose = poses[fi];
    std::vector<double> zbuf;
    for (int py = 0; py < f.height(); py += pixel_stride) {
      for (int px = 0; px < f.width(); px += pixel_stride) {
        const double d = f.depth_at(px, py);
        if (d <= 0.0 || d > render_cfg.max_depth_m) continue;
        EvalRay r;
        const Vec3 dc = f.intrinsics.pixel_dir(px, py);
        const double inv = 1.0 / dc.norm();
        r.origin = pose.t;
        r.dir = pose.q * (dc * inv);
        r.cos_theta = inv;
        r.gt = d;
        sample_points(render_cfg.near_m, far, d, true, render_cfg.trunc_m, render_cfg.n_strat,
                      render_cfg.n_surf, rng, zbuf);
        r.z = zbuf;
        rays.push_back(std::move(r));
      }
    }
  }
  if (rays.empty()) throw std::runtime_error("depth_l1: no valid pixels to evaluate");

  std::vector<double> err(rays.size(), 0.0);
  parallel_for_slots(static_cast<int>(rays.size()), threads, [&](int begin, int end, int) {
    std::vector<double> sigma, w;
    std::vector<Vec3> rgb;
    for (int i = begin; i < end; ++i) {
      const EvalRay& r = rays[static_cast<size_t>(i)];
      const size_t n = r.z.size();
      sigma.resize(n);
      w.resize(n);
      rgb.assign(n, Vec3::Zero());
      for (size_t s = 0; s < n; ++s) {
        const Vec3 p = r.origin + (r.z[s] / r.cos_theta) * r.dir;
        double sdf;
        field.query(values, p, &sdf, nullptr, nullptr);
        sigma[s] = sdf_to_density(sdf, beta);
      }
      double depth;
      composite(sigma, rgb, r.z, w, nullptr, &depth);
      err[static_cast<size_t>(i)] = std::abs(depth - r.gt);
    }
  });
  double total = 0.0;
  for (double e : err) total += e;
  return total / static_cast<double>(err.size()) * 100.0;
}

TriMesh extract_mesh(const SceneField& field, const VecX& values, double cell,
                     const std::vector<Pose>& poses, const CameraIntrinsics& k,
                     double max_depth) {
  const SdfFunction sdf_fn = [&](const Vec3& p) {
    double sdf;
    field.query(values, p, &sdf, nullptr, nullptr);
    return sdf;
  };
  TriMesh mesh = marching_cubes(sdf_fn, field.bounds(), cell, nullptr);
  if (!poses.empty()) mesh = frustum_cull(mesh, poses, k, max_depth);
  return mesh;
}

}  // namespace fieldslam
