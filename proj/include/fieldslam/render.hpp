#pragma once

#include "fieldslam/types.hpp"

#include <span>
#include <vector>

namespace fieldslam {

struct RenderConfig {
  int n_strat = 32;
  int n_surf = 8;
  double trunc_m = 0.06;
  double near_m = 0.0;
  double far_m = 0.0;  // 0 = scene diagonal
  double max_depth_m = 10.0;
};

// sigma = beta * logistic(-beta * sdf); strictly decreasing in sdf for any
// fixed beta > 0, approaching beta behind the surface and 0 in free space.
double sdf_to_density(double sdf, double beta);

struct DensityGrad {
  double d_sdf = 0.0;
  double d_beta = 0.0;
};
DensityGrad sdf_to_density_grad(double sdf, double beta);

// Termination weights and composited color/depth over one ordered ray:
//   w_n = exp(-sum_{k<n} sigma_k) * (1 - exp(-sigma_n)),
//   c = sum w_n rgb_n, d = sum w_n z_n.
void composite(std::span<const double> sigma, std::span<const Vec3> rgb,
               std::span<const double> z, std::span<double> w_out, Vec3* color_out,
               double* depth_out);

// Adjoint of composite: given dL/dc and dL/dd, writes dL/dsigma and
// dL/drgb for every sample. z values are treated as constants.
void composite_backward(std::span<const double> sigma, std::span<const Vec3> rgb,
                        std::span<const double> z, std::span<const double> w, const Vec3& dcolor,
                        double ddepth, std::span<double> dsigma_out, std::span<Vec3> drgb_out);

// Flat per-sample arrays for a batch of rays, indexed via offset/count.
// Training skips samples once the ray is opaque (transmittance below 1e-7)
// and past the truncation band, where no loss term can see them; skipped
// samples have evaluated = 0, sigma = 0 and weight = 0.
struct RenderOutput {
  std::vector<int> offset;
  std::vector<int> count;
  std::vector<double> z;
  std::vector<double> sdf;
  std::vector<Vec3> raw_rgb;  // decoder color at each sample
  std::vector<double> sigma;
  std::vector<double> weight;
  std::vector<uint8_t> evaluated;
  std::vector<Vec3> color;    // per-ray composited color
  std::vector<double> depth;  // per-ray composited depth

  int ray_count() const { return static_cast<int>(offset.size()); }
  int samples_of(int ray) const { return count[static_cast<size_t>(ray)]; }
  int begin_of(int ray) const { return offset[static_cast<size_t>(ray)]; }
};

}  // namespace fieldslam
