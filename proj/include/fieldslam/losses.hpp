#pragma once

#include "fieldslam/hash_grid.hpp"
#include "fieldslam/render.hpp"
#include "fieldslam/rng.hpp"
#include "fieldslam/types.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fieldslam {

struct LossWeights {
  double color = 5.0;
  double depth = 0.1;
  double patch = 1.0;
  double smooth = 1e-6;
  double sdfm = 200.0;
  double sdft = 10.0;
  double fs = 5.0;
};

// The seven objective terms, kept separate for logging and keyframe scoring.
// total is always the exact weighted sum of the stored terms.
struct LossBreakdown {
  double l_color = 0.0;
  double l_depth = 0.0;
  double l_patch = 0.0;
  double l_smooth = 0.0;
  double l_sdfm = 0.0;
  double l_sdft = 0.0;
  double l_fs = 0.0;
  LossWeights weights;
  double total = 0.0;
  bool depth_term_empty = false;

  void finalize() {
    total = weights.color * l_color + weights.depth * l_depth + weights.patch * l_patch +
            weights.smooth * l_smooth + weights.sdfm * l_sdfm + weights.sdft * l_sdft +
            weights.fs * l_fs;
  }
  // Name of the first non-finite term, if any.
  std::optional<std::string> non_finite_term() const;
};

struct PatchSpec {
  int side = 32;
  int reps = 10;
  int kernel = 3;
  int stride = 4;
  double c1 = 1e-4;  // (0.01)^2 at dynamic range 1
  double c2 = 9e-4;  // (0.03)^2
};

// ---- color / depth MSE ----------------------------------------------------

struct ColorDepthLoss {
  double l_color = 0.0;
  double l_depth = 0.0;
  bool depth_empty = false;
  int valid_depth_rays = 0;
};

ColorDepthLoss color_depth_loss(std::span<const Vec3> rendered_color,
                                std::span<const double> rendered_depth,
                                std::span<const Vec3> gt_color, std::span<const double> gt_depth,
                                std::span<const uint8_t> depth_valid);

// Accumulates lambda-scaled adjoints of the two MSE terms into dcolor/ddepth.
void color_depth_loss_backward(std::span<const Vec3> rendered_color,
                               std::span<const double> rendered_depth,
                               std::span<const Vec3> gt_color, std::span<const double> gt_depth,
                               std::span<const uint8_t> depth_valid, double lambda_color,
                               double lambda_depth, std::span<Vec3> dcolor,
                               std::span<double> ddepth);

// ---- patch-structural (SSIM) loss -----------------------------------------

struct PatchDraws {
  int side = 0;             // effective patch side (may shrink for small batches)
  bool shrunk = false;
  std::vector<std::vector<int>> draws;  // reps x side*side ray indices
};

// Draws reps index sets without replacement within each draw. Shrinks the
// side to floor(sqrt(n_rays)) when the batch is too small.
PatchDraws make_patch_draws(int n_rays, const PatchSpec& spec, Rng& rng);

// Mean SSIM over 3x3 windows placed at the given stride on one side x side
// patch pair stored as channel planes; x and y are side*side arrays.
double patch_ssim_plane(const double* x, const double* y, int side, const PatchSpec& spec);
void patch_ssim_plane_backward(const double* x, const double* y, int side, const PatchSpec& spec,
                               double dssim, double* dx_accum);

// 1 - mean over draws of the channel-averaged window SSIM.
double patch_loss(std::span<const Vec3> rendered, std::span<const Vec3> gt,
                  const PatchDraws& draws, const PatchSpec& spec);
void patch_loss_backward(std::span<const Vec3> rendered, std::span<const Vec3> gt,
                         const PatchDraws& draws, const PatchSpec& spec, double dloss,
                         std::span<Vec3> dcolor);

// ---- hash-grid smoothness --------------------------------------------------

struct SmoothnessRegion {
  Vec3 origin = Vec3::Zero();  // world-space corner of the sampled region
  double size = 0.24;          // region edge length, meters
};

SmoothnessRegion draw_smoothness_region(const SceneBounds& bounds, double size, Rng& rng);

// Mean over region vertices of the squared feature differences to the +x/+y/+z
// neighbor vertices, per level of the grid's own lattice, summed over levels.
double smoothness_loss(const HashGrid& grid, const VecX& values, const SmoothnessRegion& region);
void smoothness_loss_backward(const HashGrid& grid, const VecX& values,
                              const SmoothnessRegion& region, double dloss, VecX& grads);

// ---- truncation-region SDF losses ------------------------------------------

struct SdfLosses {
  double l_sdfm = 0.0;
  double l_sdft = 0.0;
  double l_fs = 0.0;
  int rays_with_depth = 0;
  bool mid_empty = true;
  bool tail_empty = true;
  bool fs_empty = true;
};

// Per-ray double mean of the squared residual sdf*T + z - D over the middle
// and tail of the truncation band, and of (sdf - 1)^2 over camera-side free
// space (z <= D - T). Rays without valid depth are skipped.
SdfLosses sdf_losses(const RenderOutput& render, std::span<const double> gt_depth,
                     std::span<const uint8_t> depth_valid, double trunc, double mid_fraction);

// Adds lambda-scaled dL/dsdf for every sample into dsdf (flat, RenderOutput
// indexing).
void sdf_losses_backward(const RenderOutput& render, std::span<const double> gt_depth,
                         std::span<const uint8_t> depth_valid, double trunc, double mid_fraction,
                         double lambda_sdfm, double lambda_sdft, double lambda_fs,
                         std::span<double> dsdf);

}  // namespace fieldslam
