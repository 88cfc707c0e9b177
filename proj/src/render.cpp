#include "fieldslam/render.hpp"

#include "fieldslam/test_hook.hpp"

#include <cmath>

namespace fieldslam {

double sdf_to_density(double sdf, double beta) {
  return beta / (1.0 + std::exp(beta * sdf));
}

DensityGrad sdf_to_density_grad(double sdf, double beta) {
  const double s = 1.0 / (1.0 + std::exp(beta * sdf));
  DensityGrad g;
  g.d_sdf = -beta * beta * s * (1.0 - s);
  g.d_beta = s - beta * sdf * s * (1.0 - s);
  g.d_sdf += testhook::adjoint_fault("density");
  return g;
}

void composite(std::span<const double> sigma, std::span<const Vec3> rgb,
               std::span<const double> z, std::span<double> w_out, Vec3* color_out,
               double* depth_out) {
  const size_t n = sigma.size();
  double transmittance_log = 0.0;  // -sum_{k<n} sigma_k
  Vec3 c = Vec3::Zero();
  double d = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double T = std::exp(transmittance_log);
    const double w = T * (1.0 - std::exp(-sigma[i]));
    w_out[i] = w;
    c += w * rgb[i];
    d += w * z[i];
    transmittance_log -= sigma[i];
  }
  if (color_out) *color_out = c;
  if (depth_out) *depth_out = d;
}

void composite_backward(std::span<const double> sigma, std::span<const Vec3> rgb,
                        std::span<const double> z, std::span<const double> w, const Vec3& dcolor,
                        double ddepth, std::span<double> dsigma_out, std::span<Vec3> drgb_out) {
  const int n = static_cast<int>(sigma.size());
  // dL/dw_i, then chain through w_n = T_n (1 - exp(-sigma_n)) with
  // dT_n/dsigma_m = -T_n for m < n:
  //   dL/dsigma_m = T_m exp(-sigma_m) dL/dw_m - sum_{i>m} w_i dL/dw_i.
  double suffix = 0.0;
  std::vector<double> dw(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    dw[static_cast<size_t>(i)] = dcolor.dot(rgb[static_cast<size_t>(i)]) +
                                 ddepth * z[static_cast<size_t>(i)];
    drgb_out[static_cast<size_t>(i)] = w[static_cast<size_t>(i)] * dcolor;
  }
  // Recompute transmittance front-to-back for the local term, suffix sums
  // back-to-front for the occlusion term.
  std::vector<double> T(static_cast<size_t>(n));
  double tlog = 0.0;
  for (int i = 0; i < n; ++i) {
    T[static_cast<size_t>(i)] = std::exp(tlog);
    tlog -= sigma[static_cast<size_t>(i)];
  }
  for (int m = n - 1; m >= 0; --m) {
    const size_t sm = static_cast<size_t>(m);
    dsigma_out[sm] = T[sm] * std::exp(-sigma[sm]) * dw[sm] - suffix;
    suffix += w[sm] * dw[sm];
  }
}

}  // namespace fieldslam
