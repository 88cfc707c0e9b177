#include "fieldslam/pose.hpp"

#include <cmath>

namespace fieldslam {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Quat so3_exp_quat(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta < 1e-12) {
    Quat q(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
    q.normalize();
    return q;
  }
  const double half = 0.5 * theta;
  const double s = std::sin(half) / theta;
  return Quat(std::cos(half), s * omega.x(), s * omega.y(), s * omega.z());
}

Pose apply_increment(const Pose& base, const Vec6& xi) {
  Pose out;
  out.q = (so3_exp_quat(xi.head<3>()) * base.q).normalized();
  out.t = base.t + xi.tail<3>();
  return out;
}

void pose_delta(const Pose& a, const Pose& b, double* angle_rad, double* trans_m) {
  const Quat dq = a.q.conjugate() * b.q;
  const double w = std::min(1.0, std::abs(dq.w()));
  if (angle_rad) *angle_rad = 2.0 * std::acos(w);
  if (trans_m) *trans_m = (a.t - b.t).norm();
}

}  // namespace fieldslam
