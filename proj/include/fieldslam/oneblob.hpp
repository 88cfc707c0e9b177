#pragma once

#include "fieldslam/bounds.hpp"
#include "fieldslam/types.hpp"

namespace fieldslam {

struct OneBlobConfig {
  int bins = 16;
};

// Per-axis soft binning of normalized coordinates: activation j is the mass
// of a Gaussian kernel (sigma = 1/bins, centered at the coordinate) over bin
// j. Output dimension is 3*bins. Carries no trainable parameters; it is
// differentiable in x so pose gradients can flow through sample positions.
class OneBlobEncoder {
 public:
  static constexpr int kMaxBins = 64;

  OneBlobEncoder() = default;
  OneBlobEncoder(const SceneBounds& bounds, const OneBlobConfig& cfg);

  int bins() const { return bins_; }
  int dim() const { return 3 * bins_; }
  double sigma() const { return sigma_; }

  void encode(const Vec3& x, double* out) const;

  // dL/dout (dim) -> dL/dx (3). Zero through axes where x is clamped.
  Vec3 backward(const Vec3& x, const double* dout) const;

  // Kernel mass over [lo, hi] for a kernel centered at u, all in normalized
  // coordinates. Exposed for the numeric-integration oracle in tests.
  double bin_mass(double u, double lo, double hi) const;

 private:
  SceneBounds bounds_;
  int bins_ = 16;
  double sigma_ = 1.0 / 16.0;
};

}  // namespace fieldslam
