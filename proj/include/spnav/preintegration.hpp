#pragma once

#include "spnav/factors.hpp"
#include "spnav/geometry.hpp"

#include <vector>

namespace spnav {

struct ImuSample {
  Vec3 gyro = Vec3::Zero();   // rad/s
  Vec3 accel = Vec3::Zero();  // m/s^2, specific force
  double dt = 0.0;            // s
};

struct ImuNoiseSpec {
  double gyro_noise_density = 1e-3;   // rad/s/sqrt(Hz)
  double accel_noise_density = 2e-2;  // m/s^2/sqrt(Hz)
  double gyro_walk_density = 1e-5;    // rad/s^2/sqrt(Hz)
  double accel_walk_density = 3e-4;   // m/s^3/sqrt(Hz)
};

// Relative-motion deltas compounded from raw samples between two frames,
// independent of the global state and of gravity. Covariance and residual
// ordering is (dtheta, dv, dp, dbg, dba).
struct PreintegratedImu {
  Quat dq = Quat::Identity();
  Vec3 dv = Vec3::Zero();
  Vec3 dp = Vec3::Zero();
  double dt = 0.0;

  Vec3 bg0 = Vec3::Zero();
  Vec3 ba0 = Vec3::Zero();

  Mat3 J_q_bg = Mat3::Zero();
  Mat3 J_v_bg = Mat3::Zero();
  Mat3 J_v_ba = Mat3::Zero();
  Mat3 J_p_bg = Mat3::Zero();
  Mat3 J_p_ba = Mat3::Zero();

  Mat15 cov = Mat15::Zero();

  // Deltas corrected to first order for a bias estimate away from the
  // linearization point.
  Quat corrected_dq(const Vec3& bg) const;
  Vec3 corrected_dv(const Vec3& bg, const Vec3& ba) const;
  Vec3 corrected_dp(const Vec3& bg, const Vec3& ba) const;
};

// Midpoint integration of piecewise-constant samples. Floors keep the
// covariance positive definite even for noise-free simulation specs.
PreintegratedImu imu_preintegrate(const std::vector<ImuSample>& samples, const Vec3& bg0,
                                  const Vec3& ba0, const ImuNoiseSpec& noise);

// 15-dim residual (dtheta, dv, dp, dbg, dba) between consecutive IMU states,
// with first-order bias correction of the preintegrated deltas. Gravity is
// applied here, not inside the deltas.
FactorEvaluation imu_factor(const ImuState& state_m, const ImuState& state_m1,
                            const PreintegratedImu& pre, const Vec3& gravity,
                            VarKey key_m = {VarKind::ImuState, 0},
                            VarKey key_m1 = {VarKind::ImuState, 1});

// Propagate a state through the preintegrated deltas (used to seed the next
// window variable before optimization).
ImuState imu_predict(const ImuState& state_m, const PreintegratedImu& pre, const Vec3& gravity);

}  // namespace spnav
