#pragma once

#include "fieldslam/types.hpp"

namespace fieldslam {

// Rigid camera-to-world transform: p_world = R p_cam + t. The rotation is
// kept as a unit quaternion; optimization applies left-multiplied axis-angle
// plus translation increments and rebases after every step, so increment
// parameters are always evaluated at zero.
struct Pose {
  Quat q = Quat::Identity();
  Vec3 t = Vec3::Zero();

  static Pose identity() { return Pose{}; }

  Mat3 rotation() const { return q.toRotationMatrix(); }
  Vec3 apply(const Vec3& p_cam) const { return q * p_cam + t; }

  Pose inverse() const {
    Pose inv;
    inv.q = q.conjugate();
    inv.t = -(inv.q * t);
    return inv;
  }

  Pose operator*(const Pose& rhs) const {
    Pose out;
    out.q = (q * rhs.q).normalized();
    out.t = q * rhs.t + t;
    return out;
  }

  void renormalize() { q.normalize(); }
};

Mat3 skew(const Vec3& v);

// Axis-angle exponential as a unit quaternion, safe for small angles.
Quat so3_exp_quat(const Vec3& omega);

// xi = [omega; u]: R <- Exp(omega) R, t <- t + u. Quaternion renormalized.
Pose apply_increment(const Pose& base, const Vec6& xi);

// Rotation angle (radians) and translation distance between two poses.
void pose_delta(const Pose& a, const Pose& b, double* angle_rad, double* trans_m);

}  // namespace fieldslam
