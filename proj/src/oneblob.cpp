#include "fieldslam/oneblob.hpp"

#include "fieldslam/test_hook.hpp"

#include <cmath>

namespace fieldslam {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

// P[a < Z < b] for a standard normal, stable in both tails. erf saturates to
// +-1 long before erfc underflows, so one-sided intervals go through erfc.
double normal_mass(double a, double b) {
  if (a >= 0.0) return 0.5 * (std::erfc(a * kInvSqrt2) - std::erfc(b * kInvSqrt2));
  if (b <= 0.0) return 0.5 * (std::erfc(-b * kInvSqrt2) - std::erfc(-a * kInvSqrt2));
  return 0.5 * (std::erf(b * kInvSqrt2) - std::erf(a * kInvSqrt2));
}

double normal_pdf(double t) { return kInvSqrt2Pi * std::exp(-0.5 * t * t); }

}  // namespace

OneBlobEncoder::OneBlobEncoder(const SceneBounds& bounds, const OneBlobConfig& cfg)
    : bounds_(bounds), bins_(cfg.bins), sigma_(1.0 / static_cast<double>(cfg.bins)) {
  if (cfg.bins < 1 || cfg.bins > kMaxBins) {
    throw ConfigError("oneblob_bins: must be in [1, " + std::to_string(kMaxBins) + "]");
  }
}

double OneBlobEncoder::bin_mass(double u, double lo, double hi) const {
  return normal_mass((lo - u) / sigma_, (hi - u) / sigma_);
}

void OneBlobEncoder::encode(const Vec3& x, double* out) const {
  const Vec3 u = bounds_.normalized(x);
  const double width = 1.0 / static_cast<double>(bins_);
  // One CDF evaluation per bin edge, shared by the two adjacent bins. Bins
  // fully on one side of the kernel center use matching upper/lower tail
  // probabilities so the difference stays positive even deep in the tails.
  double upper[kMaxBins + 1];  // P[Z > t_j]
  double lower[kMaxBins + 1];  // P[Z < t_j]
  for (int axis = 0; axis < 3; ++axis) {
    const double uc = u[axis];
    for (int j = 0; j <= bins_; ++j) {
      const double t = (j * width - uc) / sigma_;
      if (t >= 0.0) {
        upper[j] = 0.5 * std::erfc(t * kInvSqrt2);
        lower[j] = -1.0;  // unused on this side
      } else {
        lower[j] = 0.5 * std::erfc(-t * kInvSqrt2);
        upper[j] = -1.0;
      }
    }
    double* row = out + axis * bins_;
    for (int j = 0; j < bins_; ++j) {
      if (lower[j] >= 0.0 && lower[j + 1] >= 0.0) {
        row[j] = lower[j + 1] - lower[j];
      } else if (upper[j] >= 0.0 && upper[j + 1] >= 0.0) {
        row[j] = upper[j] - upper[j + 1];
      } else {
        // Straddling bin: both tails are well conditioned here.
        row[j] = (1.0 - upper[j + 1]) - lower[j];
      }
    }
  }
}

Vec3 OneBlobEncoder::backward(const Vec3& x, const double* dout) const {
  const Vec3 u = bounds_.normalized(x);
  const Vec3 ext = bounds_.extent();
  const double width = 1.0 / static_cast<double>(bins_);
  const double fault = testhook::adjoint_fault("oneblob");
  double pdf[kMaxBins + 1];
  Vec3 dx = Vec3::Zero();
  for (int axis = 0; axis < 3; ++axis) {
    // Clamped coordinates have zero derivative through the encoding.
    if (x[axis] <= bounds_.min_corner[axis] || x[axis] >= bounds_.max_corner[axis]) continue;
    for (int j = 0; j <= bins_; ++j) {
      pdf[j] = normal_pdf((j * width - u[axis]) / sigma_);
    }
    const double* row = dout + axis * bins_;
    double du = 0.0;
    for (int j = 0; j < bins_; ++j) {
      // d/du of Phi((edge-u)/sigma) is -pdf/sigma; mass derivative telescopes.
      const double dmass = (pdf[j] - pdf[j + 1]) / sigma_;
      du += row[j] * (dmass + fault);
    }
    dx[axis] = du / ext[axis];
  }
  return dx;
}

}  // namespace fieldslam
