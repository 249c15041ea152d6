#pragma once

#include "spnav/types.hpp"

#include <cmath>

namespace spnav {

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

// Canonical form: unit norm, scalar part non-negative.
inline Quat quat_canonical(const Quat& q) {
  Quat out = q.normalized();
  if (out.w() < 0.0) out.coeffs() = -out.coeffs();
  return out;
}

// Exponential map so(3) -> unit quaternion, Hamilton convention.
inline Quat quat_exp(const Vec3& phi) {
  const double theta = phi.norm();
  if (theta < 1e-12) {
    Quat q(1.0, 0.5 * phi.x(), 0.5 * phi.y(), 0.5 * phi.z());
    return q.normalized();
  }
  const double half = 0.5 * theta;
  const Vec3 axis = phi / theta;
  const double s = std::sin(half);
  return Quat(std::cos(half), s * axis.x(), s * axis.y(), s * axis.z());
}

// Logarithm map, returns the rotation vector of the shortest rotation.
inline Vec3 quat_log(const Quat& q_in) {
  Quat q = quat_canonical(q_in);
  const Vec3 v(q.x(), q.y(), q.z());
  const double vn = v.norm();
  if (vn < 1e-12) return 2.0 * v / q.w();
  const double theta = 2.0 * std::atan2(vn, q.w());
  return theta * v / vn;
}

inline Mat3 so3_exp(const Vec3& phi) { return quat_exp(phi).toRotationMatrix(); }

inline Vec3 so3_log(const Mat3& R) { return quat_log(Quat(R)); }

// Right Jacobian of SO(3): Exp(phi + dphi) ~= Exp(phi) Exp(Jr(phi) dphi).
inline Mat3 so3_right_jacobian(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 W = skew(phi);
  if (theta < 1e-7) {
    return Mat3::Identity() - 0.5 * W + (1.0 / 6.0) * W * W;
  }
  const double t2 = theta * theta;
  return Mat3::Identity() - (1.0 - std::cos(theta)) / t2 * W +
         (theta - std::sin(theta)) / (t2 * theta) * W * W;
}

inline Mat3 so3_right_jacobian_inv(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 W = skew(phi);
  if (theta < 1e-7) {
    return Mat3::Identity() + 0.5 * W + (1.0 / 12.0) * W * W;
  }
  const double t2 = theta * theta;
  const double c = 1.0 / t2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() + 0.5 * W + c * W * W;
}

inline Mat3 so3_left_jacobian_inv(const Vec3& phi) {
  return so3_right_jacobian_inv(phi).transpose();
}

}  // namespace spnav
