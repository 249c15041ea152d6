#include "spnav/graph.hpp"

#include <stdexcept>

namespace spnav {

VarValue value_of(const SlidingWindowState& x, const VarKey& key) {
  switch (key.kind) {
    case VarKind::ImuState: return x.imu_states().at(key.id);
    case VarKind::Point: return x.points().at(key.id);
    case VarKind::Line: return x.lines().at(key.id);
    case VarKind::Plane: return x.planes().at(key.id);
  }
  throw std::out_of_range("value_of: bad kind");
}

void set_value(SlidingWindowState* x, const VarKey& key, const VarValue& v) {
  switch (key.kind) {
    case VarKind::ImuState: x->imu_states().at(key.id) = std::get<ImuState>(v); return;
    case VarKind::Point: x->points().at(key.id) = std::get<Vec3>(v); return;
    case VarKind::Line: x->lines().at(key.id) = std::get<LineCP>(v); return;
    case VarKind::Plane: x->planes().at(key.id) = std::get<PlaneCP>(v); return;
  }
  throw std::out_of_range("set_value: bad kind");
}

VecX value_boxminus(const VarValue& a, const VarValue& b) {
  if (std::holds_alternative<ImuState>(a)) {
    return std::get<ImuState>(a).boxminus(std::get<ImuState>(b));
  }
  if (std::holds_alternative<Vec3>(a)) {
    return std::get<Vec3>(a) - std::get<Vec3>(b);
  }
  if (std::holds_alternative<LineCP>(a)) {
    return std::get<LineCP>(a).boxminus(std::get<LineCP>(b));
  }
  return std::get<PlaneCP>(a).boxminus(std::get<PlaneCP>(b));
}

namespace {
int value_dim(const VarValue& v) {
  if (std::holds_alternative<ImuState>(v)) return 15;
  if (std::holds_alternative<Vec3>(v)) return 3;
  if (std::holds_alternative<LineCP>(v)) return 4;
  return 3;
}
}  // namespace

// --- Feature factors ---------------------------------------------------------

PointFactor::PointFactor(VarKey pose_key, VarKey point_key, PointMeasurement m)
    : keys_{pose_key, point_key}, m_(std::move(m)) {
  info_ = m_.sigma.inverse();
}

FactorEvaluation PointFactor::evaluate(const SlidingWindowState& x) const {
  return point_factor(x.imu_states().at(keys_[0].id).pose, x.points().at(keys_[1].id), m_,
                      keys_[0], keys_[1]);
}

LineFactor::LineFactor(VarKey pose_key, VarKey line_key, LineMeasurement m)
    : keys_{pose_key, line_key}, m_(std::move(m)) {
  info_ = m_.sigma.inverse();
}

FactorEvaluation LineFactor::evaluate(const SlidingWindowState& x) const {
  return line_factor(x.imu_states().at(keys_[0].id).pose, x.lines().at(keys_[1].id), m_, keys_[0],
                     keys_[1]);
}

PlaneFactor::PlaneFactor(VarKey pose_key, VarKey plane_key, PlaneMeasurement m)
    : keys_{pose_key, plane_key}, m_(std::move(m)) {
  info_ = m_.sigma.inverse();
}

FactorEvaluation PlaneFactor::evaluate(const SlidingWindowState& x) const {
  return plane_factor(x.imu_states().at(keys_[0].id).pose, x.planes().at(keys_[1].id), m_,
                      keys_[0], keys_[1]);
}

// --- IMU factor ---------------------------------------------------------------

ImuFactor::ImuFactor(VarKey key_m, VarKey key_m1, PreintegratedImu pre, Vec3 gravity)
    : keys_{key_m, key_m1}, pre_(std::move(pre)), gravity_(std::move(gravity)) {
  info_ = pre_.cov.inverse();
  info_ = 0.5 * (info_ + info_.transpose().eval());
}

FactorEvaluation ImuFactor::evaluate(const SlidingWindowState& x) const {
  return imu_factor(x.imu_states().at(keys_[0].id), x.imu_states().at(keys_[1].id), pre_, gravity_,
                    keys_[0], keys_[1]);
}

// --- Priors -------------------------------------------------------------------

PriorFactor::PriorFactor(std::vector<VarKey> keys, std::vector<VarValue> means, MatX information)
    : keys_(std::move(keys)), means_(std::move(means)), info_(std::move(information)) {
  int dim = 0;
  for (const auto& v : means_) dim += value_dim(v);
  if (info_.rows() != dim || info_.cols() != dim) {
    throw std::invalid_argument("PriorFactor: information size mismatch");
  }
}

FactorEvaluation PriorFactor::evaluate(const SlidingWindowState& x) const {
  FactorEvaluation out;
  int dim = 0;
  for (const auto& v : means_) dim += value_dim(v);
  out.residual.resize(dim);
  int off = 0;
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    const VecX d = value_boxminus(value_of(x, keys_[i]), means_[i]);
    out.residual.segment(off, d.size()) = d;
    MatX J = MatX::Zero(dim, d.size());
    J.block(off, 0, d.size(), d.size()).setIdentity();
    out.jacobians.emplace_back(keys_[i], std::move(J));
    off += static_cast<int>(d.size());
  }
  return out;
}

MarginalPriorFactor::MarginalPriorFactor(std::vector<VarKey> keys, std::vector<VarValue> anchors,
                                         MatX J, VecX r0)
    : keys_(std::move(keys)), anchors_(std::move(anchors)), J_(std::move(J)), r0_(std::move(r0)) {
  info_ = MatX::Identity(J_.rows(), J_.rows());
  int off = 0;
  for (const auto& v : anchors_) {
    col_offsets_.push_back(off);
    off += value_dim(v);
  }
  if (J_.cols() != off) throw std::invalid_argument("MarginalPriorFactor: jacobian size mismatch");
}

FactorEvaluation MarginalPriorFactor::evaluate(const SlidingWindowState& x) const {
  FactorEvaluation out;
  VecX delta(J_.cols());
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    const VecX d = value_boxminus(value_of(x, keys_[i]), anchors_[i]);
    delta.segment(col_offsets_[i], d.size()) = d;
  }
  out.residual = r0_ + J_ * delta;
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    const int dim = value_dim(anchors_[i]);
    out.jacobians.emplace_back(keys_[i], MatX(J_.middleCols(col_offsets_[i], dim)));
  }
  return out;
}

// --- Structure priors -----------------------------------------------------------

StructurePriorFactor::StructurePriorFactor(VarKey a, VarKey b, std::vector<Component> components)
    : keys_{a, b}, components_(std::move(components)) {
  if (components_.empty()) {
    throw std::invalid_argument("StructurePriorFactor: no components");
  }
  const int n = static_cast<int>(components_.size());
  info_ = MatX::Zero(n, n);
  for (int i = 0; i < n; ++i) info_(i, i) = 1.0 / (components_[i].sigma * components_[i].sigma);
}

FactorEvaluation StructurePriorFactor::evaluate(const SlidingWindowState& x) const {
  FactorEvaluation out;
  const VarKey& ka = keys_[0];
  const VarKey& kb = keys_[1];
  const int n = static_cast<int>(components_.size());
  out.residual.resize(n);
  MatX Ja(n, SlidingWindowState::dim_of(ka.kind));
  MatX Jb(n, SlidingWindowState::dim_of(kb.kind));

  for (int i = 0; i < n; ++i) {
    const auto& c = components_[i];
    double h = 0.0;
    switch (c.kind) {
      case PriorKind::PointPointDist: {
        const Vec3& pa = x.points().at(ka.id);
        const Vec3& pb = x.points().at(kb.id);
        if ((pb - pa).norm() <= 1e-9) {
          out.valid = false;
          out.diagnostic = "coincident points in structure prior";
          return out;
        }
        const auto e = point_point(pa, pb);
        h = e.dist;
        Ja.row(i) = e.J_a;
        Jb.row(i) = e.J_b;
        break;
      }
      case PriorKind::PointLineDist: {
        const auto e = point_line(x.points().at(ka.id), x.lines().at(kb.id));
        h = e.dist;
        Ja.row(i) = e.J_point;
        Jb.row(i) = e.J_line;
        break;
      }
      case PriorKind::PointPlaneDist: {
        const auto e = point_plane(x.points().at(ka.id), x.planes().at(kb.id));
        h = e.dist;
        Ja.row(i) = e.J_point;
        Jb.row(i) = e.J_plane;
        break;
      }
      case PriorKind::LineLineAngle:
      case PriorKind::LineLineDist: {
        const auto e = line_line(x.lines().at(ka.id), x.lines().at(kb.id));
        if (c.kind == PriorKind::LineLineAngle) {
          h = e.angle;
          Ja.row(i) = e.J_angle_a;
          Jb.row(i) = e.J_angle_b;
        } else {
          h = e.dist;
          Ja.row(i) = e.J_dist_a;
          Jb.row(i) = e.J_dist_b;
        }
        break;
      }
      case PriorKind::LinePlaneAngle:
      case PriorKind::LinePlaneDist: {
        const auto e = line_plane(x.lines().at(ka.id), x.planes().at(kb.id));
        if (c.kind == PriorKind::LinePlaneAngle) {
          h = e.angle;
          Ja.row(i) = e.J_angle_line;
          Jb.row(i) = e.J_angle_plane;
        } else {
          h = e.dist;
          Ja.row(i) = e.J_dist_line;
          Jb.row(i) = e.J_dist_plane;
        }
        break;
      }
      case PriorKind::PlanePlaneAngle:
      case PriorKind::PlanePlaneDist: {
        const auto e = plane_plane(x.planes().at(ka.id), x.planes().at(kb.id));
        if (c.kind == PriorKind::PlanePlaneAngle) {
          h = e.angle;
          Ja.row(i) = e.J_angle_a;
          Jb.row(i) = e.J_angle_b;
        } else {
          h = e.dist;
          Ja.row(i) = e.J_dist_a;
          Jb.row(i) = e.J_dist_b;
        }
        break;
      }
    }
    out.residual(i) = h - c.z;
  }
  out.jacobians.emplace_back(ka, std::move(Ja));
  out.jacobians.emplace_back(kb, std::move(Jb));
  return out;
}

}  // namespace spnav
