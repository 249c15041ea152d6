#pragma once

#include "spnav/factors.hpp"
#include "spnav/preintegration.hpp"
#include "spnav/structure_priors.hpp"
#include "spnav/window_state.hpp"

#include <array>
#include <memory>
#include <variant>
#include <vector>

namespace spnav {

enum class FactorFamily : int {
  Prior = 0,
  MarginalPrior,
  Imu,
  Point,
  Line,
  Plane,
  StructurePrior,
};

inline constexpr int kNumFactorFamilies = 7;

using VarValue = std::variant<ImuState, Vec3, LineCP, PlaneCP>;

VarValue value_of(const SlidingWindowState& x, const VarKey& key);
void set_value(SlidingWindowState* x, const VarKey& key, const VarValue& v);
VecX value_boxminus(const VarValue& a, const VarValue& b);

class Factor {
 public:
  virtual ~Factor() = default;
  virtual FactorEvaluation evaluate(const SlidingWindowState& x) const = 0;
  virtual const std::vector<VarKey>& keys() const = 0;
  // Inverse measurement covariance over the residual.
  virtual const MatX& information() const = 0;
  virtual FactorFamily family() const = 0;
  virtual bool robust() const = 0;
};

class PointFactor final : public Factor {
 public:
  PointFactor(VarKey pose_key, VarKey point_key, PointMeasurement m);
  FactorEvaluation evaluate(const SlidingWindowState& x) const override;
  const std::vector<VarKey>& keys() const override { return keys_; }
  const MatX& information() const override { return info_; }
  FactorFamily family() const override { return FactorFamily::Point; }
  bool robust() const override { return true; }

 private:
  std::vector<VarKey> keys_;
  PointMeasurement m_;
  MatX info_;
};

class LineFactor final : public Factor {
 public:
  LineFactor(VarKey pose_key, VarKey line_key, LineMeasurement m);
  FactorEvaluation evaluate(const SlidingWindowState& x) const override;
  const std::vector<VarKey>& keys() const override { return keys_; }
  const MatX& information() const override { return info_; }
  FactorFamily family() const override { return FactorFamily::Line; }
  bool robust() const override { return true; }

 private:
  std::vector<VarKey> keys_;
  LineMeasurement m_;
  MatX info_;
};

class PlaneFactor final : public Factor {
 public:
  PlaneFactor(VarKey pose_key, VarKey plane_key, PlaneMeasurement m);
  FactorEvaluation evaluate(const SlidingWindowState& x) const override;
  const std::vector<VarKey>& keys() const override { return keys_; }
  const MatX& information() const override { return info_; }
  FactorFamily family() const override { return FactorFamily::Plane; }
  bool robust() const override { return true; }

 private:
  std::vector<VarKey> keys_;
  PlaneMeasurement m_;
  MatX info_;
};

class ImuFactor final : public Factor {
 public:
  ImuFactor(VarKey key_m, VarKey key_m1, PreintegratedImu pre, Vec3 gravity);
  FactorEvaluation evaluate(const SlidingWindowState& x) const override;
  const std::vector<VarKey>& keys() const override { return keys_; }
  const MatX& information() const override { return info_; }
  FactorFamily family() const override { return FactorFamily::Imu; }
  bool robust() const override { return false; }
  const PreintegratedImu& preintegrated() const { return pre_; }

 private:
  std::vector<VarKey> keys_;
  PreintegratedImu pre_;
  Vec3 gravity_;
  MatX info_;
};

// Gaussian prior on a subset of variables, anchored at stored means:
// r = x boxminus mean, jacobian identity.
class PriorFactor final : public Factor {
 public:
  PriorFactor(std::vector<VarKey> keys, std::vector<VarValue> means, MatX information);
  FactorEvaluation evaluate(const SlidingWindowState& x) const override;
  const std::vector<VarKey>& keys() const override { return keys_; }
  const MatX& information() const override { return info_; }
  FactorFamily family() const override { return FactorFamily::Prior; }
  bool robust() const override { return false; }

 private:
  std::vector<VarKey> keys_;
  std::vector<VarValue> means_;
  MatX info_;
};

// Linearized prior produced by marginalization: r = r0 + J (x boxminus x0),
// with identity weighting (J is already whitened).
class MarginalPriorFactor final : public Factor {
 public:
  MarginalPriorFactor(std::vector<VarKey> keys, std::vector<VarValue> anchors, MatX J, VecX r0);
  FactorEvaluation evaluate(const SlidingWindowState& x) const override;
  const std::vector<VarKey>& keys() const override { return keys_; }
  const MatX& information() const override { return info_; }
  FactorFamily family() const override { return FactorFamily::MarginalPrior; }
  bool robust() const override { return false; }

 private:
  std::vector<VarKey> keys_;
  std::vector<VarValue> anchors_;
  MatX J_;
  VecX r0_;
  MatX info_;
  std::vector<int> col_offsets_;
};

// One or two stacked scalar structure-prior components on a feature pair;
// a pair that carries both an angle and a parallel-distance prior shares
// one factor (and one robust loss).
class StructurePriorFactor final : public Factor {
 public:
  struct Component {
    PriorKind kind;
    double z;
    double sigma;
  };

  StructurePriorFactor(VarKey a, VarKey b, std::vector<Component> components);
  FactorEvaluation evaluate(const SlidingWindowState& x) const override;
  const std::vector<VarKey>& keys() const override { return keys_; }
  const MatX& information() const override { return info_; }
  FactorFamily family() const override { return FactorFamily::StructurePrior; }
  bool robust() const override { return true; }
  const std::vector<Component>& components() const { return components_; }

 private:
  std::vector<VarKey> keys_;
  std::vector<Component> components_;
  MatX info_;
};

struct FactorGraph {
  SlidingWindowState state;
  std::vector<std::shared_ptr<Factor>> factors;

  std::array<int, kNumFactorFamilies> count_by_family() const {
    std::array<int, kNumFactorFamilies> counts{};
    for (const auto& f : factors) counts[static_cast<int>(f->family())]++;
    return counts;
  }
};

}  // namespace spnav
