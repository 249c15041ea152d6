#include "spnav/simulator.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace spnav {

// --- CubicSpline -----------------------------------------------------------------

CubicSpline::CubicSpline(std::vector<double> knot_times, std::vector<Vec3> knots)
    : times_(std::move(knot_times)), knots_(std::move(knots)) {
  const int n = static_cast<int>(knots_.size());
  if (n < 2 || times_.size() != knots_.size()) {
    throw std::invalid_argument("CubicSpline: need >= 2 knots with matching times");
  }
  second_.assign(n, Vec3::Zero());
  if (n == 2) return;

  // Tridiagonal solve for natural boundary conditions (M_0 = M_{n-1} = 0).
  std::vector<double> h(n - 1);
  for (int i = 0; i + 1 < n; ++i) h[i] = times_[i + 1] - times_[i];
  std::vector<double> diag(n - 2), upper(n - 2), lower(n - 2);
  std::vector<Vec3> rhs(n - 2);
  for (int i = 1; i + 1 < n; ++i) {
    diag[i - 1] = 2.0 * (h[i - 1] + h[i]);
    lower[i - 1] = h[i - 1];
    upper[i - 1] = h[i];
    rhs[i - 1] = 6.0 * ((knots_[i + 1] - knots_[i]) / h[i] - (knots_[i] - knots_[i - 1]) / h[i - 1]);
  }
  for (int i = 1; i < n - 2; ++i) {
    const double w = lower[i] / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  std::vector<Vec3> m(n - 2);
  m[n - 3] = rhs[n - 3] / diag[n - 3];
  for (int i = n - 4; i >= 0; --i) m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
  for (int i = 1; i + 1 < n; ++i) second_[i] = m[i - 1];
}

int CubicSpline::segment_of(double t) const {
  const int n = static_cast<int>(times_.size());
  if (t <= times_.front()) return 0;
  if (t >= times_.back()) return n - 2;
  const int idx = static_cast<int>(std::upper_bound(times_.begin(), times_.end(), t) -
                                   times_.begin()) - 1;
  return std::clamp(idx, 0, n - 2);
}

Vec3 CubicSpline::value(double t) const {
  const int i = segment_of(t);
  const double h = times_[i + 1] - times_[i];
  const double a = (times_[i + 1] - t) / h;
  const double b = (t - times_[i]) / h;
  return a * knots_[i] + b * knots_[i + 1] +
         ((a * a * a - a) * second_[i] + (b * b * b - b) * second_[i + 1]) * (h * h) / 6.0;
}

Vec3 CubicSpline::derivative(double t) const {
  const int i = segment_of(t);
  const double h = times_[i + 1] - times_[i];
  const double a = (times_[i + 1] - t) / h;
  const double b = (t - times_[i]) / h;
  return (knots_[i + 1] - knots_[i]) / h +
         ((-3.0 * a * a + 1.0) * second_[i] + (3.0 * b * b - 1.0) * second_[i + 1]) * h / 6.0;
}

Vec3 CubicSpline::second_derivative(double t) const {
  const int i = segment_of(t);
  const double h = times_[i + 1] - times_[i];
  const double a = (times_[i + 1] - t) / h;
  const double b = (t - times_[i]) / h;
  return a * second_[i] + b * second_[i + 1];
}

// --- World -----------------------------------------------------------------------

WorldPrimitives World::primitives() const {
  WorldPrimitives out;
  out.points = points;
  for (const auto& l : lines) out.lines.push_back(pluecker_to_cp(l));
  for (const auto& p : planes) out.planes.push_back(PlaneCP::FromNormalDistance(p.n, p.d));
  return out;
}

namespace {

double line_origin_distance(const PlueckerLine& l) { return l.n.norm() / l.v.norm(); }

bool near_any_plane(const Vec3& p, const std::vector<PlaneSpec>& planes, double clearance) {
  for (const auto& pl : planes) {
    if (std::abs(pl.n.dot(p) - pl.d) < clearance) return true;
  }
  return false;
}

bool near_any_line(const Vec3& p, const std::vector<PlueckerLine>& lines, double clearance) {
  for (const auto& l : lines) {
    if (l.distance_to_point(p) < clearance) return true;
  }
  return false;
}

}  // namespace

World generate_world(const WorldSpec& spec, const ExtractOptions& prior_opts) {
  if (spec.n_points < 0 || spec.n_lines < 0 || spec.n_planes < 0) {
    throw std::invalid_argument("generate_world: negative primitive count");
  }
  for (int i = 0; i < 3; ++i) {
    if (!(spec.room_min(i) < -spec.clearance && spec.room_max(i) > spec.clearance)) {
      throw std::invalid_argument("generate_world: origin must lie strictly inside the room");
    }
  }

  std::mt19937_64 rng(spec.seed);
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  auto uniform_int = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };

  World world;
  constexpr int kMaxRetries = 2000;

  // Boundary planes, normals away from the origin.
  std::vector<PlaneSpec> boundary;
  for (int axis = 0; axis < 3; ++axis) {
    PlaneSpec hi, lo;
    hi.n = Vec3::Unit(axis);
    hi.d = spec.room_max(axis);
    lo.n = -Vec3::Unit(axis);
    lo.d = -spec.room_min(axis);
    boundary.push_back(hi);
    boundary.push_back(lo);
  }
  for (int i = 0; i < std::min<int>(6, spec.n_planes); ++i) world.planes.push_back(boundary[i]);

  // Interior axis-aligned partitions at grid offsets.
  int retries = 0;
  while (static_cast<int>(world.planes.size()) < spec.n_planes) {
    if (++retries > kMaxRetries) throw GenerationFailed("generate_world: partition placement");
    const int axis = uniform_int(0, 2);
    const double lo = spec.room_min(axis) + spec.grid;
    const double hi = spec.room_max(axis) - spec.grid;
    const int steps = static_cast<int>(std::floor((hi - lo) / spec.grid));
    if (steps <= 0) continue;
    const double c = lo + spec.grid * uniform_int(0, steps);
    if (std::abs(c) < std::max(spec.clearance, 0.5 * spec.grid)) continue;
    PlaneSpec p;
    p.n = (c > 0 ? 1.0 : -1.0) * Vec3::Unit(axis);
    p.d = std::abs(c);
    const bool dup = std::any_of(world.planes.begin(), world.planes.end(), [&](const PlaneSpec& q) {
      return (q.n - p.n).norm() < 1e-12 && std::abs(q.d - p.d) < 1e-12;
    });
    if (dup) continue;
    world.planes.push_back(p);
  }

  // Axis-aligned edge lines hosted on planes.
  retries = 0;
  while (static_cast<int>(world.lines.size()) < spec.n_lines) {
    if (++retries > kMaxRetries) throw GenerationFailed("generate_world: line placement");
    const PlaneSpec& host = world.planes[uniform_int(0, static_cast<int>(world.planes.size()) - 1)];
    int host_axis = 0;
    host.n.cwiseAbs().maxCoeff(&host_axis);
    // Direction lies in the host plane.
    const int dir_axis = (host_axis + 1 + uniform_int(0, 1)) % 3;
    const int offset_axis = 3 - host_axis - dir_axis;
    const double lo = spec.room_min(offset_axis) + spec.grid;
    const double hi = spec.room_max(offset_axis) - spec.grid;
    const int steps = static_cast<int>(std::floor((hi - lo) / spec.grid));
    if (steps <= 0) continue;
    const double c = lo + spec.grid * uniform_int(0, steps);

    Vec3 a = Vec3::Zero();
    a(host_axis) = host.n(host_axis) * host.d;  // signed plane offset
    a(offset_axis) = c;
    const Vec3 b = a + Vec3::Unit(dir_axis);
    const PlueckerLine line = PlueckerLine::FromTwoPoints(a, b);
    if (line_origin_distance(line) < std::max(spec.clearance, kEpsLine * 10.0)) continue;
    const bool dup = std::any_of(world.lines.begin(), world.lines.end(), [&](const PlueckerLine& q) {
      return (q.v.normalized() - line.v.normalized()).norm() < 1e-12 &&
             (q.closest_point_to_origin() - line.closest_point_to_origin()).norm() < 1e-12;
    });
    if (dup) continue;
    world.lines.push_back(line);
  }

  // Points: a fraction exactly on structure, the rest in clear free space.
  const int n_on = static_cast<int>(std::lround(spec.frac_points_on_structure * spec.n_points));
  retries = 0;
  while (static_cast<int>(world.points.size()) < n_on &&
         (!world.lines.empty() || !world.planes.empty())) {
    if (++retries > kMaxRetries) throw GenerationFailed("generate_world: on-structure points");
    Vec3 p;
    const bool use_line = !world.lines.empty() && (world.planes.empty() || uniform_int(0, 1) == 0);
    if (use_line) {
      const PlueckerLine& l = world.lines[uniform_int(0, static_cast<int>(world.lines.size()) - 1)];
      const Vec3 c = l.closest_point_to_origin();
      const Vec3 v = l.v.normalized();
      int dir_axis = 0;
      v.cwiseAbs().maxCoeff(&dir_axis);
      const double t = uniform(spec.room_min(dir_axis) + 0.1, spec.room_max(dir_axis) - 0.1);
      p = c + (t - c(dir_axis)) / v(dir_axis) * v;
    } else {
      const PlaneSpec& pl = world.planes[uniform_int(0, static_cast<int>(world.planes.size()) - 1)];
      int host_axis = 0;
      pl.n.cwiseAbs().maxCoeff(&host_axis);
      p = Vec3::Zero();
      p(host_axis) = pl.n(host_axis) * pl.d;
      for (int axis = 0; axis < 3; ++axis) {
        if (axis == host_axis) continue;
        p(axis) = uniform(spec.room_min(axis) + 0.1, spec.room_max(axis) - 0.1);
      }
    }
    bool inside = true;
    for (int axis = 0; axis < 3; ++axis) {
      inside = inside && p(axis) >= spec.room_min(axis) && p(axis) <= spec.room_max(axis);
    }
    if (!inside || p.norm() < spec.clearance) continue;
    world.points.push_back(p);
  }

  retries = 0;
  while (static_cast<int>(world.points.size()) < spec.n_points) {
    if (++retries > kMaxRetries) throw GenerationFailed("generate_world: free-space points");
    Vec3 p;
    for (int axis = 0; axis < 3; ++axis) {
      p(axis) = uniform(spec.room_min(axis) + 0.1, spec.room_max(axis) - 0.1);
    }
    if (p.norm() < spec.clearance) continue;
    if (near_any_plane(p, world.planes, spec.clearance)) continue;
    if (near_any_line(p, world.lines, spec.clearance)) continue;
    bool crowded = false;
    for (const auto& q : world.points) crowded = crowded || (q - p).norm() < spec.clearance;
    if (crowded) continue;
    world.points.push_back(p);
  }

  world.prior_db = extract_priors(world.primitives(), prior_opts);
  return world;
}

// --- Trajectory --------------------------------------------------------------------

Trajectory::Trajectory(const std::vector<Vec3>& waypoints, double duration,
                       OrientationProfile profile)
    : duration_(duration), profile_(profile) {
  if (waypoints.size() < 4) throw std::invalid_argument("Trajectory: need >= 4 waypoints");
  if (!(duration > 0.0)) throw std::invalid_argument("Trajectory: non-positive duration");
  std::vector<double> times(waypoints.size());
  const double dt = duration / static_cast<double>(waypoints.size() - 1);
  for (std::size_t i = 0; i < waypoints.size(); ++i) times[i] = dt * static_cast<double>(i);
  spline_ = CubicSpline(times, waypoints);
}

void Trajectory::euler_angles(double t, double* yaw, double* pitch, double* roll) const {
  const Vec3 v = velocity(t);
  const double vxy2 = v.x() * v.x() + v.y() * v.y();
  *yaw = (vxy2 > 1e-20) ? std::atan2(v.y(), v.x()) : 0.0;
  const double w_r = 2.0 * M_PI * profile_.roll_freq;
  const double w_p = 2.0 * M_PI * profile_.pitch_freq;
  *roll = profile_.roll_amplitude * std::sin(w_r * t);
  *pitch = profile_.pitch_amplitude * std::sin(w_p * t);
}

void Trajectory::euler_rates(double t, double* dyaw, double* dpitch, double* droll) const {
  const Vec3 v = velocity(t);
  const Vec3 a = acceleration(t);
  const double vxy2 = v.x() * v.x() + v.y() * v.y();
  *dyaw = (vxy2 > 1e-20) ? (v.x() * a.y() - v.y() * a.x()) / vxy2 : 0.0;
  const double w_r = 2.0 * M_PI * profile_.roll_freq;
  const double w_p = 2.0 * M_PI * profile_.pitch_freq;
  *droll = profile_.roll_amplitude * w_r * std::cos(w_r * t);
  *dpitch = profile_.pitch_amplitude * w_p * std::cos(w_p * t);
}

Pose Trajectory::pose(double t) const {
  double yaw, pitch, roll;
  euler_angles(t, &yaw, &pitch, &roll);
  const Mat3 C = (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
                  Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                  Eigen::AngleAxisd(roll, Vec3::UnitX()))
                     .toRotationMatrix();  // body -> global
  Pose out;
  out.q = quat_canonical(Quat(C.transpose()));
  out.p = position(t);
  return out;
}

Vec3 Trajectory::angular_rate(double t) const {
  double yaw, pitch, roll;
  double dyaw, dpitch, droll;
  euler_angles(t, &yaw, &pitch, &roll);
  euler_rates(t, &dyaw, &dpitch, &droll);
  // ZYX Euler-angle rates to body rates.
  const double sr = std::sin(roll), cr = std::cos(roll);
  const double sp = std::sin(pitch), cp = std::cos(pitch);
  Vec3 w;
  w.x() = droll - dyaw * sp;
  w.y() = dpitch * cr + dyaw * cp * sr;
  w.z() = -dpitch * sr + dyaw * cp * cr;
  return w;
}

Vec3 Trajectory::specific_force(double t, const Vec3& gravity) const {
  return pose(t).rotation() * (acceleration(t) - gravity);
}

Trajectory generate_trajectory(const std::vector<Vec3>& waypoints, double duration,
                               OrientationProfile profile, const Vec3* room_min,
                               const Vec3* room_max) {
  if (room_min && room_max) {
    for (const Vec3& w : waypoints) {
      for (int axis = 0; axis < 3; ++axis) {
        if (w(axis) < (*room_min)(axis) || w(axis) > (*room_max)(axis)) {
          throw std::invalid_argument("generate_trajectory: waypoint outside room");
        }
      }
    }
  }
  return Trajectory(waypoints, duration, profile);
}

// --- IMU simulation -----------------------------------------------------------------

std::vector<TimedImuSample> simulate_imu(const Trajectory& traj, const ImuSimSpec& spec,
                                         std::uint64_t seed) {
  const double dt = 1.0 / spec.rate_hz;
  const int n = static_cast<int>(std::floor(traj.duration() * spec.rate_hz + 0.5));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> randn(0.0, 1.0);
  auto draw3 = [&]() { return Vec3(randn(rng), randn(rng), randn(rng)); };

  const double white_g = spec.noise.gyro_noise_density * std::sqrt(spec.rate_hz);
  const double white_a = spec.noise.accel_noise_density * std::sqrt(spec.rate_hz);
  const double walk_g = spec.noise.gyro_walk_density * std::sqrt(dt);
  const double walk_a = spec.noise.accel_walk_density * std::sqrt(dt);

  Vec3 bg = Vec3::Zero();
  Vec3 ba = Vec3::Zero();
  std::vector<TimedImuSample> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    const double t0 = k * dt;
    const double tm = t0 + 0.5 * dt;
    TimedImuSample s;
    s.t = t0;
    s.sample.dt = dt;
    s.sample.gyro = traj.angular_rate(tm) + bg + white_g * draw3();
    s.sample.accel = traj.specific_force(tm, spec.gravity) + ba + white_a * draw3();
    out.push_back(s);
    bg += walk_g * draw3();
    ba += walk_a * draw3();
  }
  return out;
}

// --- Measurements ---------------------------------------------------------------------

std::vector<MeasurementFrame> simulate_measurements(const Trajectory& traj, const World& world,
                                                    const FovSpec& fov,
                                                    const MeasurementNoiseSpec& noise,
                                                    double rate_hz, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> randn(0.0, 1.0);
  auto draw3 = [&]() { return Vec3(randn(rng), randn(rng), randn(rng)); };

  const double cos_max = std::cos(fov.half_angle_deg * M_PI / 180.0);
  const double dt = 1.0 / rate_hz;
  const int n_frames = static_cast<int>(std::floor(traj.duration() * rate_hz)) + 1;

  auto in_fov = [&](const Vec3& dir_to_target, double dist) {
    if (dist > fov.range || dist < 1e-12) return false;
    return dir_to_target.x() / dist >= cos_max;
  };

  std::vector<MeasurementFrame> frames;
  frames.reserve(n_frames);
  for (int k = 0; k < n_frames; ++k) {
    MeasurementFrame frame;
    frame.t = std::min(k * dt, traj.duration());
    const Pose pose = traj.pose(frame.t);

    for (std::size_t i = 0; i < world.points.size(); ++i) {
      const Vec3 z0 = pose.rotation() * (world.points[i] - pose.p);
      if (!in_fov(z0, z0.norm())) continue;
      frame.points.push_back({static_cast<int>(i), z0 + noise.sigma_point * draw3()});
    }

    for (std::size_t i = 0; i < world.lines.size(); ++i) {
      PlueckerLine local = transform_line(pose, world.lines[i]);
      const double vn = local.v.norm();
      local.n /= vn;
      local.v /= vn;
      const double dist = local.n.norm();
      if (dist < kEpsLine) continue;  // through the sensor, degenerate
      const Vec3 closest = local.v.cross(local.n);
      if (!in_fov(closest, dist)) continue;
      Vec3 nz = local.n + noise.sigma_line * draw3();
      Vec3 vz = local.v + noise.sigma_line * draw3();
      const double vzn = vz.norm();
      if (vzn < kEpsLine) continue;
      vz /= vzn;
      nz -= nz.dot(vz) * vz;  // restore Pluecker orthogonality
      if (nz.norm() < kEpsLine) continue;
      LineObservation obs;
      obs.id = static_cast<int>(i);
      obs.z << nz, vz;
      frame.lines.push_back(obs);
    }

    for (std::size_t i = 0; i < world.planes.size(); ++i) {
      Vec3 n_b;
      double d_b;
      transform_plane(pose, world.planes[i].n, world.planes[i].d, &n_b, &d_b);
      if (std::abs(d_b) < kEpsPlane) continue;
      const Vec3 cp = d_b * n_b;
      if (!in_fov(cp, std::abs(d_b))) continue;
      const Vec3 z = cp + noise.sigma_plane * draw3();
      if (z.norm() < kEpsPlane) continue;
      frame.planes.push_back({static_cast<int>(i), z});
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

// --- Evaluation ------------------------------------------------------------------------

RmseResult evaluate_rmse(const std::vector<TimedPose>& estimate,
                         const std::vector<TimedPose>& ground_truth, bool align) {
  if (estimate.size() != ground_truth.size() || estimate.empty()) {
    throw std::invalid_argument("evaluate_rmse: trajectory size mismatch");
  }
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    if (std::abs(estimate[i].t - ground_truth[i].t) > 1e-9) {
      throw std::invalid_argument("evaluate_rmse: timestamp mismatch");
    }
  }

  Mat3 R_align = Mat3::Identity();
  Vec3 t_align = Vec3::Zero();
  if (align) {
    MatX src(3, estimate.size()), dst(3, estimate.size());
    for (std::size_t i = 0; i < estimate.size(); ++i) {
      src.col(i) = estimate[i].pose.p;
      dst.col(i) = ground_truth[i].pose.p;
    }
    const MatX T = Eigen::umeyama(src, dst, false);
    R_align = T.topLeftCorner<3, 3>();
    t_align = T.topRightCorner<3, 1>();
  }

  double sum_t2 = 0.0;
  double sum_r2 = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const Vec3 p_est = R_align * estimate[i].pose.p + t_align;
    sum_t2 += (p_est - ground_truth[i].pose.p).squaredNorm();
    const Mat3 R_err = (estimate[i].pose.rotation() * R_align.transpose()) *
                       ground_truth[i].pose.rotation().transpose();
    const double ang = so3_log(R_err).norm() * 180.0 / M_PI;
    sum_r2 += ang * ang;
  }
  const double n = static_cast<double>(estimate.size());
  return {std::sqrt(sum_t2 / n), std::sqrt(sum_r2 / n)};
}

std::string trajectory_to_csv(const Trajectory& traj, double rate_hz) {
  std::ostringstream os;
  os << "t,x,y,z,qw,qx,qy,qz\n";
  char buf[256];
  const double dt = 1.0 / rate_hz;
  for (double t = 0.0; t <= traj.duration() + 1e-9; t += dt) {
    const Pose pose = traj.pose(std::min(t, traj.duration()));
    std::snprintf(buf, sizeof(buf), "%.9f,%.9f,%.9f,%.9f,%.17g,%.17g,%.17g,%.17g\n", t,
                  pose.p.x(), pose.p.y(), pose.p.z(), pose.q.w(), pose.q.x(), pose.q.y(),
                  pose.q.z());
    os << buf;
  }
  return os.str();
}

}  // namespace spnav
