#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spnav/geometry.hpp"
#include "spnav/window_state.hpp"
#include "test_support.hpp"

using namespace spnav;
using test::Rng;

TEST_CASE("boxplus with zero tangent is identity for all types") {
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    const Pose p = rng.pose();
    const Pose p2 = p.boxplus(Vec6::Zero());
    CHECK((p2.p - p.p).norm() == 0.0);
    CHECK(p2.q.angularDistance(p.q) == doctest::Approx(0.0));

    const ImuState s = rng.imu_state();
    CHECK(s.boxplus(Vec15::Zero()).boxminus(s).norm() == doctest::Approx(0.0));

    const LineCP l = rng.line_cp();
    CHECK(l.boxplus(Vec4::Zero()).boxminus(l).norm() == doctest::Approx(0.0));

    const PlaneCP pl = rng.plane_cp();
    CHECK(pl.boxplus(Vec3::Zero()).boxminus(pl).norm() == 0.0);
  }
}

TEST_CASE("boxplus of identity pose by yaw pi/2") {
  Vec6 delta = Vec6::Zero();
  delta(2) = M_PI / 2.0;
  const Pose p = Pose::Identity().boxplus(delta);
  CHECK(p.q.w() == doctest::Approx(std::cos(M_PI / 4.0)).epsilon(1e-12));
  CHECK(p.q.z() == doctest::Approx(std::sin(M_PI / 4.0)).epsilon(1e-12));
  CHECK(p.q.x() == doctest::Approx(0.0));
  CHECK(p.q.y() == doctest::Approx(0.0));
  CHECK(p.q.norm() == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("boxplus is first-order additive in the tangent") {
  Rng rng(11);
  for (int i = 0; i < 20; ++i) {
    const Pose x = rng.pose();
    Vec6 d1, d2;
    for (int k = 0; k < 6; ++k) {
      d1(k) = rng.uniform(-1.0, 1.0);
      d2(k) = rng.uniform(-1.0, 1.0);
    }
    auto err_at = [&](double scale) {
      const Pose a = x.boxplus(scale * d1).boxplus(scale * d2);
      const Pose b = x.boxplus((scale * (d1 + d2)).eval());
      return a.boxminus(b).norm();
    };
    const double e1 = err_at(1e-4);
    const double e2 = err_at(5e-5);
    CHECK(e1 <= 1e-7);
    // Second-order: halving the perturbation shrinks the error ~4x.
    if (e1 > 1e-12) CHECK(e2 <= e1 / 3.0);
  }
}

TEST_CASE("quaternion canonicalization keeps w nonnegative and unit norm") {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    Pose p = rng.pose();
    Vec6 d;
    for (int k = 0; k < 6; ++k) d(k) = rng.uniform(-2.0, 2.0);
    p = p.boxplus(d);
    CHECK(p.q.w() >= 0.0);
    CHECK(std::abs(p.q.norm() - 1.0) <= 1e-12);
    const Mat3 R = p.rotation();
    CHECK((R * R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("pluecker_to_cp on the z-axis line through (1,0,0)") {
  const PlueckerLine l = PlueckerLine::FromTwoPoints(Vec3(1, 0, 0), Vec3(1, 0, 1));
  CHECK((l.n - Vec3(0, -1, 0)).norm() == doctest::Approx(0.0));
  CHECK((l.v - Vec3(0, 0, 1)).norm() == doctest::Approx(0.0));

  const LineCP cp = pluecker_to_cp(l);
  CHECK(cp.d == doctest::Approx(1.0).epsilon(1e-12));
  const Mat3 R = cp.q.toRotationMatrix();
  CHECK((R.col(0) - Vec3(0, -1, 0)).norm() <= 1e-12);
  CHECK((R.col(1) - Vec3(0, 0, 1)).norm() <= 1e-12);
  CHECK((R.col(2) - Vec3(-1, 0, 0)).norm() <= 1e-12);
  // Closest point follows the v x n convention.
  CHECK((cp.closest_point() - Vec3(1, 0, 0)).norm() <= 1e-12);
}

TEST_CASE("pluecker_to_cp is scale invariant") {
  const PlueckerLine l = PlueckerLine::FromTwoPoints(Vec3(1, 2, -1), Vec3(0, 1, 1));
  PlueckerLine l2;
  l2.n = 2.0 * l.n;
  l2.v = 2.0 * l.v;
  const LineCP a = pluecker_to_cp(l);
  const LineCP b = pluecker_to_cp(l2);
  CHECK(a.d == doctest::Approx(b.d).epsilon(1e-12));
  CHECK(a.q.angularDistance(b.q) <= 1e-12);
}

TEST_CASE("degenerate lines are rejected") {
  PlueckerLine through_origin;
  through_origin.n = Vec3::Zero();
  through_origin.v = Vec3::UnitX();
  CHECK_THROWS_AS(pluecker_to_cp(through_origin), DegenerateLine);

  PlueckerLine zero_dir;
  zero_dir.n = Vec3::UnitX();
  zero_dir.v = Vec3::Zero();
  CHECK_THROWS_AS(pluecker_to_cp(zero_dir), DegenerateLine);
}

TEST_CASE("cp_to_pluecker inverts pluecker_to_cp") {
  const PlueckerLine l = PlueckerLine::FromTwoPoints(Vec3(1, 0, 0), Vec3(1, 0, 1));
  const PlueckerLine back = cp_to_pluecker(pluecker_to_cp(l));
  CHECK((back.n - Vec3(0, -1, 0)).norm() <= 1e-12);
  CHECK((back.v - Vec3(0, 0, 1)).norm() <= 1e-12);
}

TEST_CASE("cp_to_pluecker with d = 0 gives a line through the origin") {
  Rng rng(5);
  LineCP cp = rng.line_cp();
  cp.d = 0.0;
  const PlueckerLine l = cp_to_pluecker(cp);
  CHECK(l.n.norm() == doctest::Approx(0.0));
  CHECK(l.v.norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("conversion round trips on 1000 random non-degenerate lines") {
  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const LineCP cp = rng.line_cp(0.1, 5.0);
    const PlueckerLine l = cp_to_pluecker(cp);
    CHECK(std::abs(l.n.dot(l.v)) <= 1e-12);
    const LineCP back = pluecker_to_cp(l);
    CHECK(std::abs(back.d - cp.d) <= 1e-12);
    CHECK(back.q.angularDistance(cp.q) <= 1e-9);
    // d equals |n| / |v| of the equivalent Pluecker line.
    CHECK(std::abs(cp.d - l.n.norm() / l.v.norm()) <= 1e-9);
  }
}

TEST_CASE("transform_line identity and translation examples") {
  const PlueckerLine l = PlueckerLine::FromTwoPoints(Vec3(1, 0, 0), Vec3(1, 0, 1));
  const PlueckerLine same = transform_line(Pose::Identity(), l);
  CHECK((same.n - l.n).norm() <= 1e-15);
  CHECK((same.v - l.v).norm() <= 1e-15);

  Pose t;
  t.p = Vec3(1, 0, 0);
  const PlueckerLine local = transform_line(t, l);
  CHECK(local.n.norm() <= 1e-15);  // passes through the sensor origin
}

TEST_CASE("transform_line round trip and incidence preservation") {
  Rng rng(23);
  for (int i = 0; i < 200; ++i) {
    const Pose pose = rng.pose();
    const LineCP cp = rng.line_cp(0.2, 4.0);
    const PlueckerLine l = cp_to_pluecker(cp);

    const PlueckerLine local = transform_line(pose, l);
    CHECK(std::abs(local.n.dot(local.v)) <= 1e-12);

    const PlueckerLine back = transform_line(pose.inverse(), local);
    CHECK((back.n - l.n).norm() <= 1e-12);
    CHECK((back.v - l.v).norm() <= 1e-12);

    // A point on the line maps to a point on the transformed line.
    const Vec3 p_on = l.closest_point_to_origin() + rng.uniform(-2.0, 2.0) * l.v.normalized();
    const Vec3 p_local = pose.rotation() * (p_on - pose.p);
    CHECK(local.distance_to_point(p_local) <= 1e-9);
  }
}

TEST_CASE("transform_plane examples and incidence") {
  Vec3 n_b;
  double d_b;
  transform_plane(Pose::Identity(), Vec3(0, 0, 1), 2.0, &n_b, &d_b);
  CHECK((n_b - Vec3(0, 0, 1)).norm() <= 1e-15);
  CHECK(d_b == doctest::Approx(2.0));

  Pose lifted;
  lifted.p = Vec3(0, 0, 1);
  transform_plane(lifted, Vec3(0, 0, 1), 2.0, &n_b, &d_b);
  CHECK(d_b == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(29);
  for (int i = 0; i < 200; ++i) {
    const Pose pose = rng.pose();
    const Vec3 n = rng.unit_vec3();
    const double d = rng.uniform(0.5, 5.0);

    transform_plane(pose, n, d, &n_b, &d_b);
    CHECK(std::abs(n_b.norm() - 1.0) <= 1e-12);

    Vec3 n_back;
    double d_back;
    transform_plane(pose.inverse(), n_b, d_b, &n_back, &d_back);
    CHECK((n_back - n).norm() <= 1e-12);
    CHECK(std::abs(d_back - d) <= 1e-12);

    // Point-on-plane incidence: n.p = d maps to n_b.p_b = d_b.
    Vec3 tangent = n.cross(Vec3::UnitX());
    if (tangent.norm() < 1e-6) tangent = n.cross(Vec3::UnitY());
    const Vec3 p_on = d * n + rng.uniform(-2.0, 2.0) * tangent.normalized();
    const Vec3 p_local = pose.rotation() * (p_on - pose.p);
    CHECK(std::abs(n_b.dot(p_local) - d_b) <= 1e-9);
  }
}

TEST_CASE("sliding window state layout and boxplus") {
  SlidingWindowState x;
  Rng rng(31);
  x.imu_states().insert(0, rng.imu_state());
  x.imu_states().insert(1, rng.imu_state());
  x.points().insert(10, rng.vec3(-2, 2));
  x.lines().insert(20, rng.line_cp());
  x.planes().insert(30, rng.plane_cp());

  CHECK(x.tangent_dim() == 15 * 2 + 3 + 4 + 3);
  CHECK(x.offset_of({VarKind::ImuState, 1}) == 15);
  CHECK(x.offset_of({VarKind::Point, 10}) == 30);
  CHECK(x.offset_of({VarKind::Line, 20}) == 33);
  CHECK(x.offset_of({VarKind::Plane, 30}) == 37);

  const VecX zero = VecX::Zero(x.tangent_dim());
  CHECK(x.boxplus(zero).boxminus(x).norm() == doctest::Approx(0.0));

  VecX delta(x.tangent_dim());
  for (int i = 0; i < delta.size(); ++i) delta(i) = rng.uniform(-0.01, 0.01);
  const VecX recovered = x.boxplus(delta).boxminus(x);
  CHECK((recovered - delta).norm() <= 1e-9);

  CHECK_THROWS_AS(x.boxplus(VecX::Zero(3)), std::invalid_argument);
}
