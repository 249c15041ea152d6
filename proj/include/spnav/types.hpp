#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <functional>

namespace spnav {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec15 = Eigen::Matrix<double, 15, 1>;
using VecX = Eigen::VectorXd;

using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat15 = Eigen::Matrix<double, 15, 15>;
using MatX = Eigen::MatrixXd;

using Quat = Eigen::Quaterniond;

// Geometric degeneracy thresholds. Lines/planes closer than this to the
// frame origin have a singular closest-point parameterization.
inline constexpr double kEpsLine = 1e-6;
inline constexpr double kEpsPlane = 1e-6;

// Cosine margin that gates the parallel-distance branch of line-line,
// line-plane and plane-plane measurements.
inline constexpr double kTauParallel = 1e-3;

enum class VarKind : std::uint8_t { ImuState = 0, Point = 1, Line = 2, Plane = 3 };

struct VarKey {
  VarKind kind;
  std::int32_t id;

  friend bool operator==(const VarKey& a, const VarKey& b) {
    return a.kind == b.kind && a.id == b.id;
  }
  friend bool operator<(const VarKey& a, const VarKey& b) {
    if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
    return a.id < b.id;
  }
};

struct VarKeyHash {
  std::size_t operator()(const VarKey& k) const {
    return std::hash<std::uint64_t>()((static_cast<std::uint64_t>(k.kind) << 32) ^
                                      static_cast<std::uint32_t>(k.id));
  }
};

}  // namespace spnav
