#include "spnav/preintegration.hpp"

#include <algorithm>
#include <stdexcept>

namespace spnav {

namespace {
// Variance floors applied per sample so that zero-noise scenarios still
// produce an invertible covariance.
constexpr double kGyroFloor = 1e-5;
constexpr double kAccelFloor = 1e-4;
constexpr double kWalkFloor = 1e-6;
}  // namespace

Quat PreintegratedImu::corrected_dq(const Vec3& bg) const {
  return quat_canonical(dq * quat_exp(J_q_bg * (bg - bg0)));
}

Vec3 PreintegratedImu::corrected_dv(const Vec3& bg, const Vec3& ba) const {
  return dv + J_v_bg * (bg - bg0) + J_v_ba * (ba - ba0);
}

Vec3 PreintegratedImu::corrected_dp(const Vec3& bg, const Vec3& ba) const {
  return dp + J_p_bg * (bg - bg0) + J_p_ba * (ba - ba0);
}

PreintegratedImu imu_preintegrate(const std::vector<ImuSample>& samples, const Vec3& bg0,
                                  const Vec3& ba0, const ImuNoiseSpec& noise) {
  if (samples.empty()) {
    throw std::invalid_argument("imu_preintegrate: empty sample list");
  }

  PreintegratedImu out;
  out.bg0 = bg0;
  out.ba0 = ba0;

  const double sg2 = std::pow(std::max(noise.gyro_noise_density, kGyroFloor), 2);
  const double sa2 = std::pow(std::max(noise.accel_noise_density, kAccelFloor), 2);
  const double sbg2 = std::pow(std::max(noise.gyro_walk_density, kWalkFloor), 2);
  const double sba2 = std::pow(std::max(noise.accel_walk_density, kWalkFloor), 2);

  for (const ImuSample& s : samples) {
    if (!(s.dt > 0.0)) throw std::invalid_argument("imu_preintegrate: non-positive dt");
    const double dt = s.dt;
    const Vec3 w = s.gyro - bg0;
    const Vec3 a = s.accel - ba0;

    const Mat3 R_k = out.dq.toRotationMatrix();
    const Vec3 half_phi = 0.5 * w * dt;
    const Mat3 E_half = so3_exp(half_phi);
    const Mat3 R_half = R_k * E_half;
    const Vec3 acc_mid = R_half * a;

    const Vec3 phi = w * dt;
    const Mat3 E_full = so3_exp(phi);
    const Mat3 Jr_full = so3_right_jacobian(phi);
    const Mat3 Jr_half = so3_right_jacobian(half_phi);

    // d(acc_mid)/d(bg): through the accumulated rotation and the half step.
    const Mat3 D = -R_k * skew(E_half * a) * out.J_q_bg + R_half * skew(a) * Jr_half * (0.5 * dt);

    // Covariance propagation, error state (dtheta, dv, dp, dbg, dba).
    Mat15 F = Mat15::Identity();
    F.block<3, 3>(0, 0) = E_full.transpose();
    F.block<3, 3>(0, 9) = -Jr_full * dt;
    F.block<3, 3>(3, 0) = -R_k * skew(E_half * a) * dt;
    F.block<3, 3>(3, 9) = R_half * skew(a) * Jr_half * (0.5 * dt) * dt;
    F.block<3, 3>(3, 12) = -R_half * dt;
    F.block<3, 3>(6, 0) = -0.5 * R_k * skew(E_half * a) * dt * dt;
    F.block<3, 3>(6, 3) = Mat3::Identity() * dt;
    F.block<3, 3>(6, 12) = -0.5 * R_half * dt * dt;

    Eigen::Matrix<double, 15, 12> G = Eigen::Matrix<double, 15, 12>::Zero();
    G.block<3, 3>(0, 0) = -Jr_full * dt;
    G.block<3, 3>(3, 3) = -R_half * dt;
    G.block<3, 3>(6, 3) = -0.5 * R_half * dt * dt;
    G.block<3, 3>(9, 6) = Mat3::Identity();
    G.block<3, 3>(12, 9) = Mat3::Identity();

    Eigen::Matrix<double, 12, 1> qd;
    qd << Vec3::Constant(sg2 / dt), Vec3::Constant(sa2 / dt), Vec3::Constant(sbg2 * dt),
        Vec3::Constant(sba2 * dt);

    out.cov = F * out.cov * F.transpose();
    out.cov += G * qd.asDiagonal() * G.transpose();

    // Bias Jacobians (first order).
    out.J_p_bg += out.J_v_bg * dt + 0.5 * dt * dt * D;
    out.J_p_ba += out.J_v_ba * dt - 0.5 * dt * dt * R_half;
    out.J_v_bg += dt * D;
    out.J_v_ba += -dt * R_half;
    out.J_q_bg = E_full.transpose() * out.J_q_bg - Jr_full * dt;

    // Delta propagation.
    out.dp += out.dv * dt + 0.5 * acc_mid * dt * dt;
    out.dv += acc_mid * dt;
    out.dq = quat_canonical(out.dq * quat_exp(phi));
    out.dt += dt;
  }
  return out;
}

FactorEvaluation imu_factor(const ImuState& state_m, const ImuState& state_m1,
                            const PreintegratedImu& pre, const Vec3& gravity, VarKey key_m,
                            VarKey key_m1) {
  FactorEvaluation out;
  const Mat3 R_m = state_m.pose.rotation();
  const Mat3 R_m1 = state_m1.pose.rotation();
  const double T = pre.dt;

  const Vec3 xi = pre.J_q_bg * (state_m.bg - pre.bg0);
  const Mat3 dR_corr = pre.corrected_dq(state_m.bg).toRotationMatrix();
  const Vec3 dv_corr = pre.corrected_dv(state_m.bg, state_m.ba);
  const Vec3 dp_corr = pre.corrected_dp(state_m.bg, state_m.ba);

  const Mat3 E = dR_corr.transpose() * (R_m * R_m1.transpose());
  const Vec3 r_theta = so3_log(E);

  const Vec3 dv_states = state_m1.v - state_m.v - gravity * T;
  const Vec3 dp_states = state_m1.pose.p - state_m.pose.p - state_m.v * T - 0.5 * gravity * T * T;

  out.residual.resize(15);
  out.residual.segment<3>(0) = r_theta;
  out.residual.segment<3>(3) = R_m * dv_states - dv_corr;
  out.residual.segment<3>(6) = R_m * dp_states - dp_corr;
  out.residual.segment<3>(9) = state_m1.bg - state_m.bg;
  out.residual.segment<3>(12) = state_m1.ba - state_m.ba;

  const Mat3 Jr_inv = so3_right_jacobian_inv(r_theta);
  const Mat3 Jl_inv = so3_left_jacobian_inv(r_theta);

  // Columns follow the ImuState tangent: (dtheta, dp, dv, dbg, dba).
  MatX J_m = MatX::Zero(15, 15);
  J_m.block<3, 3>(0, 0) = Jr_inv * R_m1;
  J_m.block<3, 3>(0, 9) = -Jl_inv * so3_right_jacobian(xi) * pre.J_q_bg;
  J_m.block<3, 3>(3, 0) = -R_m * skew(dv_states);
  J_m.block<3, 3>(3, 6) = -R_m;
  J_m.block<3, 3>(3, 9) = -pre.J_v_bg;
  J_m.block<3, 3>(3, 12) = -pre.J_v_ba;
  J_m.block<3, 3>(6, 0) = -R_m * skew(dp_states);
  J_m.block<3, 3>(6, 3) = -R_m;
  J_m.block<3, 3>(6, 6) = -R_m * T;
  J_m.block<3, 3>(6, 9) = -pre.J_p_bg;
  J_m.block<3, 3>(6, 12) = -pre.J_p_ba;
  J_m.block<3, 3>(9, 9) = -Mat3::Identity();
  J_m.block<3, 3>(12, 12) = -Mat3::Identity();

  MatX J_m1 = MatX::Zero(15, 15);
  J_m1.block<3, 3>(0, 0) = -Jr_inv * R_m1;
  J_m1.block<3, 3>(3, 6) = R_m;
  J_m1.block<3, 3>(6, 3) = R_m;
  J_m1.block<3, 3>(9, 9) = Mat3::Identity();
  J_m1.block<3, 3>(12, 12) = Mat3::Identity();

  out.jacobians.emplace_back(key_m, std::move(J_m));
  out.jacobians.emplace_back(key_m1, std::move(J_m1));
  return out;
}

ImuState imu_predict(const ImuState& state_m, const PreintegratedImu& pre, const Vec3& gravity) {
  const double T = pre.dt;
  const Mat3 R_m = state_m.pose.rotation();
  ImuState out;
  out.pose.q = quat_canonical(pre.corrected_dq(state_m.bg).conjugate() * state_m.pose.q);
  out.v = state_m.v + gravity * T + R_m.transpose() * pre.corrected_dv(state_m.bg, state_m.ba);
  out.pose.p = state_m.pose.p + state_m.v * T + 0.5 * gravity * T * T +
               R_m.transpose() * pre.corrected_dp(state_m.bg, state_m.ba);
  out.bg = state_m.bg;
  out.ba = state_m.ba;
  return out;
}

}  // namespace spnav
