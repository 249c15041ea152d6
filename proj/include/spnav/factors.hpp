#pragma once

#include "spnav/geometry.hpp"

#include <string>
#include <utility>
#include <vector>

namespace spnav {

struct PointMeasurement {
  Vec3 z = Vec3::Zero();       // point expressed in the body frame
  Mat3 sigma = Mat3::Identity();
};

struct LineMeasurement {
  Vec6 z = Vec6::Zero();       // Pluecker (n, v) in the body frame, |v| = 1
  Mat6 sigma = Mat6::Identity();
};

struct PlaneMeasurement {
  Vec3 z = Vec3::UnitZ();      // plane closest point in the body frame
  Mat3 sigma = Mat3::Identity();
};

// One linearized factor: residual plus one Jacobian block per connected
// variable. Jacobian columns are the variable's tangent coordinates.
// Covariance weighting happens at the solver level.
struct FactorEvaluation {
  VecX residual;
  std::vector<std::pair<VarKey, MatX>> jacobians;
  bool valid = true;
  std::string diagnostic;

  const MatX& jacobian_of(const VarKey& k) const {
    for (const auto& [key, J] : jacobians) {
      if (key == k) return J;
    }
    throw std::out_of_range("FactorEvaluation: no jacobian for key");
  }
};

// r = R (p_g - p_body) - z
FactorEvaluation point_factor(const Pose& pose, const Vec3& point, const PointMeasurement& m,
                              VarKey pose_key = {VarKind::ImuState, 0},
                              VarKey point_key = {VarKind::Point, 0});

// r = transform_line(pose, cp_to_pluecker(line)) - z, both sides with unit
// direction part. Invalid (skipped) when the transformed line passes through
// the sensor origin.
FactorEvaluation line_factor(const Pose& pose, const LineCP& line, const LineMeasurement& m,
                             VarKey pose_key = {VarKind::ImuState, 0},
                             VarKey line_key = {VarKind::Line, 0});

// r = d_b * n_b - z with (n_b, d_b) the plane in the body frame. Invalid when
// the local closest point collapses onto the sensor origin.
FactorEvaluation plane_factor(const Pose& pose, const PlaneCP& plane, const PlaneMeasurement& m,
                              VarKey pose_key = {VarKind::ImuState, 0},
                              VarKey plane_key = {VarKind::Plane, 0});

}  // namespace spnav
