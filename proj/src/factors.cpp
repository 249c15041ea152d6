#include "spnav/factors.hpp"

namespace spnav {

FactorEvaluation point_factor(const Pose& pose, const Vec3& point, const PointMeasurement& m,
                              VarKey pose_key, VarKey point_key) {
  FactorEvaluation out;
  const Mat3 R = pose.rotation();
  const Vec3 rel = point - pose.p;

  out.residual = R * rel - m.z;

  MatX J_pose(3, 6);
  J_pose.leftCols<3>() = -R * skew(rel);
  J_pose.rightCols<3>() = -R;

  out.jacobians.emplace_back(pose_key, std::move(J_pose));
  out.jacobians.emplace_back(point_key, MatX(R));
  return out;
}

FactorEvaluation line_factor(const Pose& pose, const LineCP& line, const LineMeasurement& m,
                             VarKey pose_key, VarKey line_key) {
  FactorEvaluation out;
  const Mat3 R = pose.rotation();
  const Mat3 Rl = line.q.toRotationMatrix();

  const Vec3 n_g = line.d * Rl.col(0);
  const Vec3 v_g = Rl.col(1);

  const Vec3 n_shift = n_g - pose.p.cross(v_g);
  const Vec3 n_b = R * n_shift;
  const Vec3 v_b = R * v_g;

  if (n_b.norm() < kEpsLine) {
    out.valid = false;
    out.diagnostic = "line passes through sensor origin";
    return out;
  }

  out.residual.resize(6);
  out.residual.head<3>() = n_b - m.z.head<3>();
  out.residual.tail<3>() = v_b - m.z.tail<3>();

  MatX J_pose(6, 6);
  J_pose.block<3, 3>(0, 0) = -R * skew(n_shift);
  J_pose.block<3, 3>(0, 3) = R * skew(v_g);
  J_pose.block<3, 3>(3, 0) = -R * skew(v_g);
  J_pose.block<3, 3>(3, 3).setZero();

  // Chain through the global Pluecker coordinates: columns (dtheta_l, dd).
  Eigen::Matrix<double, 6, 4> J_g;
  J_g.block<3, 3>(0, 0) = -line.d * Rl * skew(Vec3::UnitX());
  J_g.block<3, 1>(0, 3) = Rl.col(0);
  J_g.block<3, 3>(3, 0) = -Rl * skew(Vec3::UnitY());
  J_g.block<3, 1>(3, 3).setZero();

  Mat6 T;
  T.setZero();
  T.block<3, 3>(0, 0) = R;
  T.block<3, 3>(0, 3) = -R * skew(pose.p);
  T.block<3, 3>(3, 3) = R;

  out.jacobians.emplace_back(pose_key, std::move(J_pose));
  out.jacobians.emplace_back(line_key, MatX(T * J_g));
  return out;
}

FactorEvaluation plane_factor(const Pose& pose, const PlaneCP& plane, const PlaneMeasurement& m,
                              VarKey pose_key, VarKey plane_key) {
  FactorEvaluation out;
  const Mat3 R = pose.rotation();
  const double d_g = plane.distance();
  const Vec3 n_g = plane.normal();

  const double d_b = d_g - pose.p.dot(n_g);
  const Vec3 n_b = R * n_g;

  if (std::abs(d_b) < kEpsPlane) {
    out.valid = false;
    out.diagnostic = "plane passes through sensor origin";
    return out;
  }

  out.residual = d_b * n_b - m.z;

  MatX J_pose(3, 6);
  J_pose.leftCols<3>() = -d_b * R * skew(n_g);
  J_pose.rightCols<3>() = -n_b * n_g.transpose();

  const Mat3 dr_dn = R * (d_b * Mat3::Identity() - n_g * pose.p.transpose());
  const Vec3 dr_dd = n_b;
  const Mat3 dn_dcp = (Mat3::Identity() - n_g * n_g.transpose()) / d_g;
  const Mat3 J_plane = dr_dn * dn_dcp + dr_dd * n_g.transpose();

  out.jacobians.emplace_back(pose_key, std::move(J_pose));
  out.jacobians.emplace_back(plane_key, MatX(J_plane));
  return out;
}

}  // namespace spnav
