#pragma once

#include "spnav/geometry.hpp"
#include "spnav/window_state.hpp"

#include <functional>
#include <random>

namespace spnav::test {

// Central finite differences of f evaluated in the chart around the current
// state: column i is (f(+h e_i) - f(-h e_i)) / 2h.
inline MatX numeric_jacobian(int in_dim, const std::function<VecX(const VecX&)>& f_at_delta,
                             double h = 1e-6) {
  const VecX f0 = f_at_delta(VecX::Zero(in_dim));
  MatX J(f0.size(), in_dim);
  for (int i = 0; i < in_dim; ++i) {
    VecX dp = VecX::Zero(in_dim);
    dp(i) = h;
    const VecX fp = f_at_delta(dp);
    dp(i) = -h;
    const VecX fm = f_at_delta(dp);
    J.col(i) = (fp - fm) / (2.0 * h);
  }
  return J;
}

inline double rel_error(const MatX& analytic, const MatX& numeric) {
  const double scale = std::max(1.0, analytic.cwiseAbs().maxCoeff());
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  double gauss(double sigma = 1.0) {
    return std::normal_distribution<double>(0.0, sigma)(rng_);
  }
  Vec3 vec3(double lo, double hi) {
    return Vec3(uniform(lo, hi), uniform(lo, hi), uniform(lo, hi));
  }
  Vec3 unit_vec3() {
    Vec3 v;
    do {
      v = Vec3(gauss(), gauss(), gauss());
    } while (v.norm() < 1e-3);
    return v.normalized();
  }
  Quat quat() { return quat_canonical(quat_exp(uniform(0.0, 2.5) * unit_vec3())); }

  Pose pose() {
    Pose p;
    p.q = quat();
    p.p = vec3(-3.0, 3.0);
    return p;
  }

  ImuState imu_state() {
    ImuState s;
    s.pose = pose();
    s.v = vec3(-2.0, 2.0);
    s.bg = vec3(-0.02, 0.02);
    s.ba = vec3(-0.2, 0.2);
    return s;
  }

  LineCP line_cp(double d_min = 0.5, double d_max = 4.0) {
    LineCP l;
    l.q = quat();
    l.d = uniform(d_min, d_max);
    return l;
  }

  PlaneCP plane_cp(double d_min = 0.5, double d_max = 5.0) {
    return PlaneCP::FromNormalDistance(unit_vec3(), uniform(d_min, d_max));
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace spnav::test
