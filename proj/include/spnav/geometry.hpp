#pragma once

#include "spnav/so3.hpp"
#include "spnav/types.hpp"

#include <stdexcept>

namespace spnav {

struct DegenerateLine : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegeneratePlane : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegeneratePair : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rigid body pose. q rotates global-frame vectors into the body frame,
// p is the body origin expressed in the global frame.
struct Pose {
  Quat q = Quat::Identity();
  Vec3 p = Vec3::Zero();

  Mat3 rotation() const { return q.toRotationMatrix(); }

  static Pose Identity() { return Pose{}; }

  Pose inverse() const {
    Pose out;
    out.q = q.conjugate();
    out.p = -(q.toRotationMatrix() * p);
    return out;
  }

  // Tangent ordering: (dtheta, dp).
  Pose boxplus(const Vec6& delta) const {
    Pose out;
    out.q = quat_canonical(q * quat_exp(delta.head<3>()));
    out.p = p + delta.tail<3>();
    return out;
  }

  Vec6 boxminus(const Pose& other) const {
    Vec6 d;
    d.head<3>() = quat_log(other.q.conjugate() * q);
    d.tail<3>() = p - other.p;
    return d;
  }
};

// Full inertial state. Tangent ordering: (dtheta, dp, dv, dbg, dba).
struct ImuState {
  Pose pose;
  Vec3 v = Vec3::Zero();
  Vec3 bg = Vec3::Zero();
  Vec3 ba = Vec3::Zero();

  static constexpr int kTangentDim = 15;

  ImuState boxplus(const Vec15& delta) const {
    ImuState out = *this;
    out.pose = pose.boxplus(delta.head<6>());
    out.v = v + delta.segment<3>(6);
    out.bg = bg + delta.segment<3>(9);
    out.ba = ba + delta.segment<3>(12);
    return out;
  }

  Vec15 boxminus(const ImuState& other) const {
    Vec15 d;
    d.head<6>() = pose.boxminus(other.pose);
    d.segment<3>(6) = v - other.v;
    d.segment<3>(9) = bg - other.bg;
    d.segment<3>(12) = ba - other.ba;
    return d;
  }
};

// Infinite 3D line in Pluecker coordinates (n, v): n = a x b and v = b - a
// for any two points a, b on the line. Homogeneous up to positive scale.
struct PlueckerLine {
  Vec3 n = Vec3::Zero();
  Vec3 v = Vec3::UnitZ();

  static PlueckerLine FromTwoPoints(const Vec3& a, const Vec3& b) {
    PlueckerLine l;
    l.v = b - a;
    l.n = a.cross(b);
    return l;
  }

  // Perpendicular distance from a point to the line.
  double distance_to_point(const Vec3& x) const { return (x - closest_point_to(x)).norm(); }

  Vec3 closest_point_to(const Vec3& x) const {
    const Vec3 vb = v.normalized();
    const Vec3 c = closest_point_to_origin();
    return c + vb.dot(x - c) * vb;
  }

  Vec3 closest_point_to_origin() const {
    const Vec3 vb = v.normalized();
    const Vec3 nb = n / v.norm();
    return vb.cross(nb);
  }
};

// Minimal closest-point line parameterization: a unit quaternion whose
// rotation columns are (n_bar, v_bar, n_bar x v_bar) plus the distance d
// from the origin. Tangent ordering: (dtheta, dd), dimension 4.
struct LineCP {
  Quat q = Quat::Identity();
  double d = 0.0;

  static constexpr int kTangentDim = 4;

  Vec3 n_bar() const { return q.toRotationMatrix().col(0); }
  Vec3 v_bar() const { return q.toRotationMatrix().col(1); }

  // Closest point of the line to the origin, equal to d * (v_bar x n_bar).
  Vec3 closest_point() const { return -d * q.toRotationMatrix().col(2); }

  // Composite 4-vector d * q, useful for diagnostics.
  Vec4 state_vector() const {
    Vec4 x;
    x << d * q.w(), d * q.x(), d * q.y(), d * q.z();
    return x;
  }

  LineCP boxplus(const Vec4& delta) const {
    LineCP out;
    out.q = quat_canonical(q * quat_exp(delta.head<3>()));
    out.d = d + delta(3);
    return out;
  }

  Vec4 boxminus(const LineCP& other) const {
    Vec4 d4;
    d4.head<3>() = quat_log(other.q.conjugate() * q);
    d4(3) = d - other.d;
    return d4;
  }
};

// Minimal closest-point plane parameterization: cp = d * n with unit normal
// n and distance d > 0 from the origin. Points x on the plane satisfy
// n.dot(x) == d. Tangent is plain 3-vector addition.
struct PlaneCP {
  Vec3 cp = Vec3::UnitZ();

  static constexpr int kTangentDim = 3;

  double distance() const { return cp.norm(); }
  Vec3 normal() const { return cp.normalized(); }

  static PlaneCP FromNormalDistance(const Vec3& n, double d) {
    PlaneCP out;
    out.cp = (d >= 0.0) ? Vec3(d * n.normalized()) : Vec3(-d * (-n).normalized());
    return out;
  }

  PlaneCP boxplus(const Vec3& delta) const { return PlaneCP{cp + delta}; }
  Vec3 boxminus(const PlaneCP& other) const { return cp - other.cp; }
};

// --- Conversions -----------------------------------------------------------

// Closest-point form of a Pluecker line. Throws DegenerateLine when the line
// passes through (or too close to) the origin, where the chart is singular.
LineCP pluecker_to_cp(const PlueckerLine& l);

PlueckerLine cp_to_pluecker(const LineCP& cp);

// --- Frame transforms ------------------------------------------------------

// Global-frame line expressed in the body frame of `pose`:
//   n_b = R (n_g - [p]x v_g),  v_b = R v_g.
PlueckerLine transform_line(const Pose& pose, const PlueckerLine& l);

// Global-frame plane (n, d) expressed in the body frame:
//   n_b = R n_g,  d_b = d_g - p.dot(n_g).
void transform_plane(const Pose& pose, const Vec3& n_g, double d_g, Vec3* n_b, double* d_b);

}  // namespace spnav
