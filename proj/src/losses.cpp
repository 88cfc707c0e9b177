#include "fieldslam/losses.hpp"

#include <cmath>

namespace fieldslam {

std::optional<std::string> LossBreakdown::non_finite_term() const {
  const std::pair<const char*, double> terms[] = {
      {"color", l_color}, {"depth", l_depth}, {"patch", l_patch}, {"smooth", l_smooth},
      {"sdfm", l_sdfm},   {"sdft", l_sdft},   {"fs", l_fs},       {"total", total}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) return std::string(name);
  }
  return std::nullopt;
}

// ---- color / depth ----------------------------------------------------------

ColorDepthLoss color_depth_loss(std::span<const Vec3> rendered_color,
                                std::span<const double> rendered_depth,
                                std::span<const Vec3> gt_color, std::span<const double> gt_depth,
                                std::span<const uint8_t> depth_valid) {
  ColorDepthLoss out;
  const size_t n = rendered_color.size();
  double csum = 0.0, dsum = 0.0;
  int nd = 0;
  for (size_t i = 0; i < n; ++i) {
    csum += (rendered_color[i] - gt_color[i]).squaredNorm();
    if (depth_valid[i]) {
      const double e = rendered_depth[i] - gt_depth[i];
      dsum += e * e;
      ++nd;
    }
  }
  out.l_color = n > 0 ? csum / (3.0 * static_cast<double>(n)) : 0.0;
  out.valid_depth_rays = nd;
  if (nd > 0) {
    out.l_depth = dsum / static_cast<double>(nd);
  } else {
    out.depth_empty = true;
  }
  return out;
}

void color_depth_loss_backward(std::span<const Vec3> rendered_color,
                               std::span<const double> rendered_depth,
                               std::span<const Vec3> gt_color, std::span<const double> gt_depth,
                               std::span<const uint8_t> depth_valid, double lambda_color,
                               double lambda_depth, std::span<Vec3> dcolor,
                               std::span<double> ddepth) {
  const size_t n = rendered_color.size();
  int nd = 0;
  for (size_t i = 0; i < n; ++i) {
    if (depth_valid[i]) ++nd;
  }
  const double cscale = n > 0 ? lambda_color * 2.0 / (3.0 * static_cast<double>(n)) : 0.0;
  const double dscale = nd > 0 ? lambda_depth * 2.0 / static_cast<double>(nd) : 0.0;
  for (size_t i = 0; i < n; ++i) {
    dcolor[i] += cscale * (rendered_color[i] - gt_color[i]);
    if (depth_valid[i]) ddepth[i] += dscale * (rendered_depth[i] - gt_depth[i]);
  }
}

// ---- patch SSIM --------------------------------------------------------------

PatchDraws make_patch_draws(int n_rays, const PatchSpec& spec, Rng& rng) {
  PatchDraws out;
  out.side = spec.side;
  if (spec.side * spec.side > n_rays) {
    out.side = static_cast<int>(std::floor(std::sqrt(static_cast<double>(n_rays))));
    out.shrunk = true;
  }
  if (out.side < spec.kernel) {
    out.side = 0;  // too few rays for even one window
    return out;
  }
  const int k = out.side * out.side;
  out.draws.reserve(static_cast<size_t>(spec.reps));
  for (int m = 0; m < spec.reps; ++m) {
    out.draws.push_back(rng.sample_without_replacement(n_rays, k));
  }
  return out;
}

namespace {

struct WindowStats {
  double mu_x, mu_y, var_x, var_y, cov;
};

WindowStats window_stats(const double* x, const double* y, int side, int i0, int j0, int k) {
  WindowStats s{0, 0, 0, 0, 0};
  const double inv = 1.0 / static_cast<double>(k * k);
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < k; ++i) {
      const int at = (j0 + j) * side + (i0 + i);
      s.mu_x += x[at];
      s.mu_y += y[at];
    }
  }
  s.mu_x *= inv;
  s.mu_y *= inv;
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < k; ++i) {
      const int at = (j0 + j) * side + (i0 + i);
      const double dx = x[at] - s.mu_x;
      const double dy = y[at] - s.mu_y;
      s.var_x += dx * dx;
      s.var_y += dy * dy;
      s.cov += dx * dy;
    }
  }
  s.var_x *= inv;
  s.var_y *= inv;
  s.cov *= inv;
  return s;
}

}  // namespace

double patch_ssim_plane(const double* x, const double* y, int side, const PatchSpec& spec) {
  const int k = spec.kernel;
  double sum = 0.0;
  int count = 0;
  for (int j0 = 0; j0 + k <= side; j0 += spec.stride) {
    for (int i0 = 0; i0 + k <= side; i0 += spec.stride) {
      const WindowStats s = window_stats(x, y, side, i0, j0, k);
      const double a1 = 2.0 * s.mu_x * s.mu_y + spec.c1;
      const double a2 = 2.0 * s.cov + spec.c2;
      const double b1 = s.mu_x * s.mu_x + s.mu_y * s.mu_y + spec.c1;
      const double b2 = s.var_x + s.var_y + spec.c2;
      sum += (a1 * a2) / (b1 * b2);
      ++count;
    }
  }
  return count > 0 ? sum / count : 1.0;
}

void patch_ssim_plane_backward(const double* x, const double* y, int side, const PatchSpec& spec,
                               double dssim, double* dx_accum) {
  const int k = spec.kernel;
  int count = 0;
  for (int j0 = 0; j0 + k <= side; j0 += spec.stride) {
    for (int i0 = 0; i0 + k <= side; i0 += spec.stride) ++count;
  }
  if (count == 0) return;
  const double scale = dssim / count;
  const double inv_n = 1.0 / static_cast<double>(k * k);
  for (int j0 = 0; j0 + k <= side; j0 += spec.stride) {
    for (int i0 = 0; i0 + k <= side; i0 += spec.stride) {
      const WindowStats s = window_stats(x, y, side, i0, j0, k);
      const double a1 = 2.0 * s.mu_x * s.mu_y + spec.c1;
      const double a2 = 2.0 * s.cov + spec.c2;
      const double b1 = s.mu_x * s.mu_x + s.mu_y * s.mu_y + spec.c1;
      const double b2 = s.var_x + s.var_y + spec.c2;
      const double S = (a1 * a2) / (b1 * b2);
      const double dS_dmux = (a2 / (b1 * b2)) * 2.0 * s.mu_y - (S / b1) * 2.0 * s.mu_x;
      const double dS_dcov = (a1 / (b1 * b2)) * 2.0;
      const double dS_dvarx = -S / b2;
      for (int j = 0; j < k; ++j) {
        for (int i = 0; i < k; ++i) {
          const int at = (j0 + j) * side + (i0 + i);
          const double dmux = inv_n;
          const double dvarx = 2.0 * (x[at] - s.mu_x) * inv_n;
          const double dcov = (y[at] - s.mu_y) * inv_n;
          dx_accum[at] += scale * (dS_dmux * dmux + dS_dvarx * dvarx + dS_dcov * dcov);
        }
      }
    }
  }
}

double patch_loss(std::span<const Vec3> rendered, std::span<const Vec3> gt,
                  const PatchDraws& draws, const PatchSpec& spec) {
  if (draws.side == 0 || draws.draws.empty()) return 0.0;
  const int side = draws.side;
  const int k = side * side;
  std::vector<double> xc(static_cast<size_t>(k)), yc(static_cast<size_t>(k));
  double ssim_sum = 0.0;
  for (const auto& draw : draws.draws) {
    double per_draw = 0.0;
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < k; ++i) {
        const size_t r = static_cast<size_t>(draw[static_cast<size_t>(i)]);
        xc[static_cast<size_t>(i)] = rendered[r][c];
        yc[static_cast<size_t>(i)] = gt[r][c];
      }
      per_draw += patch_ssim_plane(xc.data(), yc.data(), side, spec);
    }
    ssim_sum += per_draw / 3.0;
  }
  return 1.0 - ssim_sum / static_cast<double>(draws.draws.size());
}

void patch_loss_backward(std::span<const Vec3> rendered, std::span<const Vec3> gt,
                         const PatchDraws& draws, const PatchSpec& spec, double dloss,
                         std::span<Vec3> dcolor) {
  if (draws.side == 0 || draws.draws.empty()) return;
  const int side = draws.side;
  const int k = side * side;
  const double dssim = -dloss / (3.0 * static_cast<double>(draws.draws.size()));
  std::vector<double> xc(static_cast<size_t>(k)), yc(static_cast<size_t>(k)),
      dxc(static_cast<size_t>(k));
  for (const auto& draw : draws.draws) {
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < k; ++i) {
        const size_t r = static_cast<size_t>(draw[static_cast<size_t>(i)]);
        xc[static_cast<size_t>(i)] = rendered[r][c];
        yc[static_cast<size_t>(i)] = gt[r][c];
        dxc[static_cast<size_t>(i)] = 0.0;
      }
      patch_ssim_plane_backward(xc.data(), yc.data(), side, spec, dssim, dxc.data());
      for (int i = 0; i < k; ++i) {
        dcolor[static_cast<size_t>(draw[static_cast<size_t>(i)])][c] +=
            dxc[static_cast<size_t>(i)];
      }
    }
  }
}

// ---- smoothness ---------------------------------------------------------------

SmoothnessRegion draw_smoothness_region(const SceneBounds& bounds, double size, Rng& rng) {
  SmoothnessRegion r;
  r.size = size;
  const Vec3 ext = bounds.extent();
  for (int a = 0; a < 3; ++a) {
    const double slack = std::max(0.0, ext[a] - size);
    r.origin[a] = bounds.min_corner[a] + rng.uniform01() * slack;
  }
  return r;
}

namespace {

struct RegionLattice {
  std::array<int, 3> base;
  int steps;  // K: vertices base..base+K per axis, diffs over K interior starts
};

RegionLattice region_lattice(const HashGrid& grid, const SmoothnessRegion& region, int level) {
  const SceneBounds& bounds = grid.bounds();
  const double e = grid.voxel_edge(level);
  RegionLattice lat;
  lat.steps = std::max(1, static_cast<int>(std::llround(region.size / e)));
  for (int a = 0; a < 3; ++a) {
    const int max_vertex = static_cast<int>(std::floor(bounds.extent()[a] / e));
    lat.steps = std::min(lat.steps, std::max(1, max_vertex));
    int b = static_cast<int>(std::floor((region.origin[a] - bounds.min_corner[a]) / e));
    b = std::max(0, std::min(b, max_vertex - lat.steps));
    lat.base[static_cast<size_t>(a)] = b;
  }
  return lat;
}

}  // namespace

double smoothness_loss(const HashGrid& grid, const VecX& values, const SmoothnessRegion& region) {
  const int F = grid.features_per_level();
  double total = 0.0;
  for (int l = 0; l < grid.levels(); ++l) {
    const RegionLattice lat = region_lattice(grid, region, l);
    const int K = lat.steps;
    double level_sum = 0.0;
    for (int k = 0; k < K; ++k) {
      for (int j = 0; j < K; ++j) {
        for (int i = 0; i < K; ++i) {
          const int ix = lat.base[0] + i, iy = lat.base[1] + j, iz = lat.base[2] + k;
          const Eigen::Index v0 = grid.vertex_param_index(l, ix, iy, iz, 0);
          const Eigen::Index vx = grid.vertex_param_index(l, ix + 1, iy, iz, 0);
          const Eigen::Index vy = grid.vertex_param_index(l, ix, iy + 1, iz, 0);
          const Eigen::Index vz = grid.vertex_param_index(l, ix, iy, iz + 1, 0);
          for (int f = 0; f < F; ++f) {
            const double dx = values[vx + f] - values[v0 + f];
            const double dy = values[vy + f] - values[v0 + f];
            const double dz = values[vz + f] - values[v0 + f];
            level_sum += dx * dx + dy * dy + dz * dz;
          }
        }
      }
    }
    total += level_sum / static_cast<double>(K) / K / K;
  }
  return total;
}

void smoothness_loss_backward(const HashGrid& grid, const VecX& values,
                              const SmoothnessRegion& region, double dloss, VecX& grads) {
  const int F = grid.features_per_level();
  for (int l = 0; l < grid.levels(); ++l) {
    const RegionLattice lat = region_lattice(grid, region, l);
    const int K = lat.steps;
    const double scale = dloss / (static_cast<double>(K) * K * K);
    for (int k = 0; k < K; ++k) {
      for (int j = 0; j < K; ++j) {
        for (int i = 0; i < K; ++i) {
          const int ix = lat.base[0] + i, iy = lat.base[1] + j, iz = lat.base[2] + k;
          const Eigen::Index v0 = grid.vertex_param_index(l, ix, iy, iz, 0);
          const Eigen::Index vx = grid.vertex_param_index(l, ix + 1, iy, iz, 0);
          const Eigen::Index vy = grid.vertex_param_index(l, ix, iy + 1, iz, 0);
          const Eigen::Index vz = grid.vertex_param_index(l, ix, iy, iz + 1, 0);
          for (int f = 0; f < F; ++f) {
            const double dx = values[vx + f] - values[v0 + f];
            const double dy = values[vy + f] - values[v0 + f];
            const double dz = values[vz + f] - values[v0 + f];
            grads[vx + f] += scale * 2.0 * dx;
            grads[vy + f] += scale * 2.0 * dy;
            grads[vz + f] += scale * 2.0 * dz;
            grads[v0 + f] -= scale * 2.0 * (dx + dy + dz);
          }
        }
      }
    }
  }
}

// ---- SDF losses -----------------------------------------------------------------

SdfLosses sdf_losses(const RenderOutput& render, std::span<const double> gt_depth,
                     std::span<const uint8_t> depth_valid, double trunc, double mid_fraction) {
  SdfLosses out;
  double mid_total = 0.0, tail_total = 0.0, fs_total = 0.0;
  const int n_rays = render.ray_count();
  for (int r = 0; r < n_rays; ++r) {
    if (!depth_valid[static_cast<size_t>(r)]) continue;
    ++out.rays_with_depth;
    const double D = gt_depth[static_cast<size_t>(r)];
    const int begin = render.begin_of(r), cnt = render.samples_of(r);
    double mid_sum = 0.0, tail_sum = 0.0, fs_sum = 0.0;
    int nm = 0, nt = 0, nf = 0;
    for (int s = begin; s < begin + cnt; ++s) {
      const double z = render.z[static_cast<size_t>(s)];
      const double sdf = render.sdf[static_cast<size_t>(s)];
      const double dz = z - D;
      if (std::abs(dz) < trunc) {
        const double res = sdf * trunc + z - D;
        if (std::abs(dz) < mid_fraction * trunc) {
          mid_sum += res * res;
          ++nm;
        } else {
          tail_sum += res * res;
          ++nt;
        }
      } else if (dz <= -trunc) {
        const double res = sdf - 1.0;
        fs_sum += res * res;
        ++nf;
      }
    }
    if (nm > 0) {
      mid_total += mid_sum / nm;
      out.mid_empty = false;
    }
    if (nt > 0) {
      tail_total += tail_sum / nt;
      out.tail_empty = false;
    }
    if (nf > 0) {
      fs_total += fs_sum / nf;
      out.fs_empty = false;
    }
  }
  if (out.rays_with_depth > 0) {
    const double inv = 1.0 / static_cast<double>(out.rays_with_depth);
    out.l_sdfm = mid_total * inv;
    out.l_sdft = tail_total * inv;
    out.l_fs = fs_total * inv;
  }
  return out;
}

void sdf_losses_backward(const RenderOutput& render, std::span<const double> gt_depth,
                         std::span<const uint8_t> depth_valid, double trunc, double mid_fraction,
                         double lambda_sdfm, double lambda_sdft, double lambda_fs,
                         std::span<double> dsdf) {
  int rays_with_depth = 0;
  const int n_rays = render.ray_count();
  for (int r = 0; r < n_rays; ++r) {
    if (depth_valid[static_cast<size_t>(r)]) ++rays_with_depth;
  }
  if (rays_with_depth == 0) return;
  const double inv_rays = 1.0 / static_cast<double>(rays_with_depth);
  for (int r = 0; r < n_rays; ++r) {
    if (!depth_valid[static_cast<size_t>(r)]) continue;
    const double D = gt_depth[static_cast<size_t>(r)];
    const int begin = render.begin_of(r), cnt = render.samples_of(r);
    int nm = 0, nt = 0, nf = 0;
    for (int s = begin; s < begin + cnt; ++s) {
      const double dz = render.z[static_cast<size_t>(s)] - D;
      if (std::abs(dz) < trunc) {
        (std::abs(dz) < mid_fraction * trunc) ? ++nm : ++nt;
      } else if (dz <= -trunc) {
        ++nf;
      }
    }
    for (int s = begin; s < begin + cnt; ++s) {
      const double z = render.z[static_cast<size_t>(s)];
      const double sdf = render.sdf[static_cast<size_t>(s)];
      const double dz = z - D;
      if (std::abs(dz) < trunc) {
        const double res = sdf * trunc + z - D;
        if (std::abs(dz) < mid_fraction * trunc) {
          dsdf[static_cast<size_t>(s)] += lambda_sdfm * 2.0 * res * trunc * inv_rays / nm;
        } else {
          dsdf[static_cast<size_t>(s)] += lambda_sdft * 2.0 * res * trunc * inv_rays / nt;
        }
      } else if (dz <= -trunc) {
        dsdf[static_cast<size_t>(s)] += lambda_fs * 2.0 * (sdf - 1.0) * inv_rays / nf;
      }
    }
  }
}

}  // namespace fieldslam
