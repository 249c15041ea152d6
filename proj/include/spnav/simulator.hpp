#pragma once

#include "spnav/geometry.hpp"
#include "spnav/preintegration.hpp"
#include "spnav/structure_priors.hpp"

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace spnav {

struct GenerationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- Natural cubic spline -----------------------------------------------------

// Interpolating natural cubic spline through uniformly spaced knots,
// C2 everywhere, with analytic first and second derivatives.
class CubicSpline {
 public:
  CubicSpline() = default;
  CubicSpline(std::vector<double> knot_times, std::vector<Vec3> knots);

  Vec3 value(double t) const;
  Vec3 derivative(double t) const;
  Vec3 second_derivative(double t) const;

  double t_min() const { return times_.front(); }
  double t_max() const { return times_.back(); }

 private:
  int segment_of(double t) const;
  std::vector<double> times_;
  std::vector<Vec3> knots_;
  std::vector<Vec3> second_;  // second derivatives at knots
};

// --- World ---------------------------------------------------------------------

struct PlaneSpec {
  Vec3 n = Vec3::UnitZ();  // unit normal pointing away from the origin
  double d = 1.0;          // distance to origin, > 0
};

struct WorldSpec {
  int n_points = 40;
  int n_lines = 15;
  int n_planes = 15;
  Vec3 room_min = Vec3(-5.0, -4.0, -1.5);
  Vec3 room_max = Vec3(5.0, 4.0, 1.5);
  double grid = 0.5;                   // structural offsets snap to this
  double clearance = 0.25;             // free-space margin around primitives
  double frac_points_on_structure = 0.5;
  std::uint64_t seed = 1;
};

struct World {
  std::vector<Vec3> points;
  std::vector<PlueckerLine> lines;
  std::vector<PlaneSpec> planes;
  StructurePriorDB prior_db;  // ground-truth extraction over the primitives

  WorldPrimitives primitives() const;
};

// Axis-aligned 2.5D room: boundary walls, floor/ceiling, interior partition
// planes, axis-aligned edge lines hosted on planes, and points either on
// structure or in free space. Deterministic for a given spec.
World generate_world(const WorldSpec& spec, const ExtractOptions& prior_opts = ExtractOptions{});

// --- Trajectory ------------------------------------------------------------------

struct OrientationProfile {
  double roll_amplitude = 0.0;   // rad
  double roll_freq = 0.1;        // Hz
  double pitch_amplitude = 0.0;  // rad
  double pitch_freq = 0.13;      // Hz
};

// C2 position spline with yaw following the velocity heading and optional
// smooth roll/pitch excitation. Provides analytic pose, velocity,
// acceleration and body angular rate.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(const std::vector<Vec3>& waypoints, double duration, OrientationProfile profile = {});

  double duration() const { return duration_; }

  Vec3 position(double t) const { return spline_.value(t); }
  Vec3 velocity(double t) const { return spline_.derivative(t); }
  Vec3 acceleration(double t) const { return spline_.second_derivative(t); }

  // Rotation global -> body and body origin, as a Pose.
  Pose pose(double t) const;
  // Body-frame angular velocity.
  Vec3 angular_rate(double t) const;
  // Body-frame specific force for gravity g.
  Vec3 specific_force(double t, const Vec3& gravity) const;

 private:
  void euler_angles(double t, double* yaw, double* pitch, double* roll) const;
  void euler_rates(double t, double* dyaw, double* dpitch, double* droll) const;

  CubicSpline spline_;
  double duration_ = 0.0;
  OrientationProfile profile_;
};

// Requires at least 4 waypoints; throws on waypoints outside the room when
// room bounds are provided.
Trajectory generate_trajectory(const std::vector<Vec3>& waypoints, double duration,
                               OrientationProfile profile = {},
                               const Vec3* room_min = nullptr, const Vec3* room_max = nullptr);

// --- IMU simulation ---------------------------------------------------------------

struct ImuSimSpec {
  ImuNoiseSpec noise;                  // densities; zeros give exact samples
  double rate_hz = 200.0;
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
};

struct TimedImuSample {
  double t = 0.0;  // start of the integration interval
  ImuSample sample;
};

// Samples cover [t, t + dt) with inputs evaluated at the interval midpoint.
// Bias random walks and white noise are seeded and reproducible.
std::vector<TimedImuSample> simulate_imu(const Trajectory& traj, const ImuSimSpec& spec,
                                         std::uint64_t seed);

// --- Feature measurements -----------------------------------------------------------

struct FovSpec {
  double range = 8.0;               // m
  double half_angle_deg = 60.0;     // around the body +x axis
};

struct MeasurementNoiseSpec {
  double sigma_point = 0.02;  // m per axis
  double sigma_line = 0.01;   // per normalized Pluecker component
  double sigma_plane = 0.02;  // m per closest-point axis
};

struct PointObservation {
  int id;
  Vec3 z;
};
struct LineObservation {
  int id;
  Vec6 z;  // local Pluecker, unit direction part
};
struct PlaneObservation {
  int id;
  Vec3 z;  // local closest point
};

struct MeasurementFrame {
  double t = 0.0;
  std::vector<PointObservation> points;
  std::vector<LineObservation> lines;
  std::vector<PlaneObservation> planes;
};

std::vector<MeasurementFrame> simulate_measurements(const Trajectory& traj, const World& world,
                                                    const FovSpec& fov,
                                                    const MeasurementNoiseSpec& noise,
                                                    double rate_hz, std::uint64_t seed);

// --- Evaluation ---------------------------------------------------------------------

struct TimedPose {
  double t = 0.0;
  Pose pose;
};

struct RmseResult {
  double translation_m = 0.0;
  double rotation_deg = 0.0;
};

// Root-mean-square position error and rotation-angle error. Timestamps must
// match pairwise. No alignment unless align=true (shared simulation frame).
RmseResult evaluate_rmse(const std::vector<TimedPose>& estimate,
                         const std::vector<TimedPose>& ground_truth, bool align = false);

std::string trajectory_to_csv(const Trajectory& traj, double rate_hz);

}  // namespace spnav
