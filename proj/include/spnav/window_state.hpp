#pragma once

#include "spnav/geometry.hpp"

#include <cassert>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

namespace spnav {

// Insertion-ordered id -> value container. Iteration and tangent layout
// follow insertion order, which keeps the solver deterministic.
template <typename T>
class OrderedVars {
 public:
  bool contains(int id) const { return index_.count(id) != 0; }

  const T& at(int id) const { return items_[index_.at(id)].second; }
  T& at(int id) { return items_[index_.at(id)].second; }

  void insert(int id, T value) {
    if (contains(id)) throw std::invalid_argument("OrderedVars: duplicate id");
    index_[id] = items_.size();
    items_.emplace_back(id, std::move(value));
  }

  void erase(int id) {
    const std::size_t pos = index_.at(id);
    items_.erase(items_.begin() + static_cast<std::ptrdiff_t>(pos));
    index_.clear();
    for (std::size_t i = 0; i < items_.size(); ++i) index_[items_[i].first] = i;
  }

  std::size_t size() const { return items_.size(); }
  const std::vector<std::pair<int, T>>& items() const { return items_; }
  std::vector<std::pair<int, T>>& mutable_items() { return items_; }

 private:
  std::vector<std::pair<int, T>> items_;
  std::unordered_map<int, std::size_t> index_;
};

// All variables jointly estimated in one window: IMU states followed by
// point, line and plane features. Tangent layout is the concatenation of
// the per-variable tangents in insertion order within each family.
class SlidingWindowState {
 public:
  OrderedVars<ImuState>& imu_states() { return imu_; }
  OrderedVars<Vec3>& points() { return points_; }
  OrderedVars<LineCP>& lines() { return lines_; }
  OrderedVars<PlaneCP>& planes() { return planes_; }
  const OrderedVars<ImuState>& imu_states() const { return imu_; }
  const OrderedVars<Vec3>& points() const { return points_; }
  const OrderedVars<LineCP>& lines() const { return lines_; }
  const OrderedVars<PlaneCP>& planes() const { return planes_; }

  bool contains(const VarKey& k) const {
    switch (k.kind) {
      case VarKind::ImuState: return imu_.contains(k.id);
      case VarKind::Point: return points_.contains(k.id);
      case VarKind::Line: return lines_.contains(k.id);
      case VarKind::Plane: return planes_.contains(k.id);
    }
    return false;
  }

  static int dim_of(VarKind kind) {
    switch (kind) {
      case VarKind::ImuState: return ImuState::kTangentDim;
      case VarKind::Point: return 3;
      case VarKind::Line: return LineCP::kTangentDim;
      case VarKind::Plane: return PlaneCP::kTangentDim;
    }
    return 0;
  }

  int tangent_dim() const {
    return 15 * static_cast<int>(imu_.size()) + 3 * static_cast<int>(points_.size()) +
           4 * static_cast<int>(lines_.size()) + 3 * static_cast<int>(planes_.size());
  }

  // Tangent dimension of the IMU-state prefix of the layout.
  int imu_tangent_dim() const { return 15 * static_cast<int>(imu_.size()); }

  std::vector<VarKey> ordered_keys() const {
    std::vector<VarKey> keys;
    keys.reserve(imu_.size() + points_.size() + lines_.size() + planes_.size());
    for (const auto& [id, s] : imu_.items()) keys.push_back({VarKind::ImuState, id});
    for (const auto& [id, s] : points_.items()) keys.push_back({VarKind::Point, id});
    for (const auto& [id, s] : lines_.items()) keys.push_back({VarKind::Line, id});
    for (const auto& [id, s] : planes_.items()) keys.push_back({VarKind::Plane, id});
    return keys;
  }

  // Offset of a variable's tangent block within the window tangent vector.
  int offset_of(const VarKey& k) const {
    int off = 0;
    auto scan = [&](const auto& vars, int dim, int id) -> int {
      for (const auto& [vid, v] : vars.items()) {
        if (vid == id) return off;
        off += dim;
      }
      throw std::out_of_range("SlidingWindowState::offset_of: unknown variable");
    };
    switch (k.kind) {
      case VarKind::ImuState: return scan(imu_, 15, k.id);
      case VarKind::Point:
        off = imu_tangent_dim();
        return scan(points_, 3, k.id);
      case VarKind::Line:
        off = imu_tangent_dim() + 3 * static_cast<int>(points_.size());
        return scan(lines_, 4, k.id);
      case VarKind::Plane:
        off = imu_tangent_dim() + 3 * static_cast<int>(points_.size()) +
              4 * static_cast<int>(lines_.size());
        return scan(planes_, 3, k.id);
    }
    throw std::out_of_range("SlidingWindowState::offset_of: unknown kind");
  }

  SlidingWindowState boxplus(const VecX& delta) const {
    if (delta.size() != tangent_dim()) {
      throw std::invalid_argument("SlidingWindowState::boxplus: dimension mismatch");
    }
    SlidingWindowState out = *this;
    int off = 0;
    for (auto& [id, s] : out.imu_.mutable_items()) {
      s = s.boxplus(delta.segment<15>(off));
      off += 15;
    }
    for (auto& [id, p] : out.points_.mutable_items()) {
      p += delta.segment<3>(off);
      off += 3;
    }
    for (auto& [id, l] : out.lines_.mutable_items()) {
      l = l.boxplus(delta.segment<4>(off));
      off += 4;
    }
    for (auto& [id, pl] : out.planes_.mutable_items()) {
      pl = pl.boxplus(delta.segment<3>(off));
      off += 3;
    }
    return out;
  }

  // Tangent-space difference *this boxminus other; both states must share
  // the same variable layout.
  VecX boxminus(const SlidingWindowState& other) const {
    VecX d(tangent_dim());
    int off = 0;
    for (const auto& [id, s] : imu_.items()) {
      d.segment<15>(off) = s.boxminus(other.imu_.at(id));
      off += 15;
    }
    for (const auto& [id, p] : points_.items()) {
      d.segment<3>(off) = p - other.points_.at(id);
      off += 3;
    }
    for (const auto& [id, l] : lines_.items()) {
      d.segment<4>(off) = l.boxminus(other.lines_.at(id));
      off += 4;
    }
    for (const auto& [id, pl] : planes_.items()) {
      d.segment<3>(off) = pl.boxminus(other.planes_.at(id));
      off += 3;
    }
    return d;
  }

 private:
  OrderedVars<ImuState> imu_;
  OrderedVars<Vec3> points_;
  OrderedVars<LineCP> lines_;
  OrderedVars<PlaneCP> planes_;
};

}  // namespace spnav
