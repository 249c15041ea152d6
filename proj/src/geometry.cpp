#include "spnav/geometry.hpp"

namespace spnav {

LineCP pluecker_to_cp(const PlueckerLine& l) {
  const double vn = l.v.norm();
  if (vn < kEpsLine) {
    throw DegenerateLine("pluecker_to_cp: direction vector has near-zero norm");
  }
  const double nn = l.n.norm();
  const double d = nn / vn;
  if (d < kEpsLine) {
    throw DegenerateLine("pluecker_to_cp: line passes through the origin");
  }
  Mat3 R;
  R.col(0) = l.n / nn;
  R.col(1) = l.v / vn;
  R.col(2) = R.col(0).cross(R.col(1));
  LineCP out;
  out.q = quat_canonical(Quat(R));
  out.d = d;
  return out;
}

PlueckerLine cp_to_pluecker(const LineCP& cp) {
  const Mat3 R = cp.q.toRotationMatrix();
  PlueckerLine out;
  out.n = cp.d * R.col(0);
  out.v = R.col(1);
  return out;
}

PlueckerLine transform_line(const Pose& pose, const PlueckerLine& l) {
  const Mat3 R = pose.rotation();
  PlueckerLine out;
  out.n = R * (l.n - pose.p.cross(l.v));
  out.v = R * l.v;
  return out;
}

void transform_plane(const Pose& pose, const Vec3& n_g, double d_g, Vec3* n_b, double* d_b) {
  *n_b = pose.rotation() * n_g;
  *d_b = d_g - pose.p.dot(n_g);
}

}  // namespace spnav
