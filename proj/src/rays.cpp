#include "fieldslam/rays.hpp"

#include <algorithm>
#include <cmath>

namespace fieldslam {

RayBatch generate_rays(const Frame& frame, int frame_index,
                       std::span<const std::pair<int, int>> pixels, double max_depth) {
  RayBatch batch;
  batch.rays.reserve(pixels.size());
  for (const auto& [px, py] : pixels) {
    Ray r;
    r.frame_index = frame_index;
    r.px = px;
    r.py = py;
    const Vec3 d = frame.intrinsics.pixel_dir(px, py);
    const double n = d.norm();
    r.dir_cam = d / n;
    r.cos_theta = 1.0 / n;  // unit-direction z component
    r.gt_color = frame.color_at(px, py);
    r.gt_depth = frame.depth_at(px, py);
    r.depth_valid = r.gt_depth > 0.0 && r.gt_depth <= max_depth;
    batch.rays.push_back(r);
  }
  return batch;
}

std::vector<std::pair<int, int>> sample_pixels(const Frame& frame, int count, Rng& rng) {
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<size_t>(count));
  const uint64_t w = static_cast<uint64_t>(frame.width());
  const uint64_t h = static_cast<uint64_t>(frame.height());
  for (int i = 0; i < count; ++i) {
    const int px = static_cast<int>(rng.uniform_int(w));
    const int py = static_cast<int>(rng.uniform_int(h));
    out.emplace_back(px, py);
  }
  return out;
}

void sample_points(double near, double far, double gt_depth, bool depth_valid, double trunc,
                   int n_strat, int n_surf, Rng& rng, std::vector<double>& out) {
  out.clear();
  out.reserve(static_cast<size_t>(n_strat + n_surf));
  const double span = (far - near) / static_cast<double>(n_strat);
  for (int i = 0; i < n_strat; ++i) {
    out.push_back(near + span * (static_cast<double>(i) + rng.uniform01()));
  }
  if (depth_valid) {
    const double lo = std::max(near, gt_depth - trunc);
    const double hi = std::min(far, gt_depth + trunc);
    for (int i = 0; i < n_surf; ++i) out.push_back(rng.uniform(lo, hi));
  }
  std::sort(out.begin(), out.end());
}

}  // namespace fieldslam
