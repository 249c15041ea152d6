#pragma once

#include "spnav/geometry.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace spnav {

using RowVec3 = Eigen::Matrix<double, 1, 3>;
using RowVec4 = Eigen::Matrix<double, 1, 4>;

enum class PriorKind : int {
  PointPointDist = 0,
  PointLineDist,
  PointPlaneDist,
  LineLineAngle,
  LineLineDist,   // parallel lines only
  LinePlaneAngle,
  LinePlaneDist,  // line parallel to plane only
  PlanePlaneAngle,
  PlanePlaneDist,  // parallel planes only
};

inline constexpr int kNumPriorKinds = 9;

const char* prior_kind_name(PriorKind kind);
std::optional<PriorKind> prior_kind_from_name(const std::string& name);
bool prior_kind_is_angle(PriorKind kind);

// --- Pairwise measurement functions with analytic Jacobians ---------------
//
// Jacobian rows are 1-dim (scalar measurements); columns follow the feature
// tangents: 3 for points/planes, 4 for lines (dtheta, dd).

struct PointPointEval {
  double dist = 0.0;
  RowVec3 J_a = RowVec3::Zero();
  RowVec3 J_b = RowVec3::Zero();
};
// Throws DegeneratePair for coincident points.
PointPointEval point_point(const Vec3& a, const Vec3& b);

struct PointLineEval {
  double dist = 0.0;  // smoothed norm of the 2D displacement
  Vec2 displacement = Vec2::Zero();
  RowVec3 J_point = RowVec3::Zero();
  RowVec4 J_line = RowVec4::Zero();
};
PointLineEval point_line(const Vec3& point, const LineCP& line);

struct PointPlaneEval {
  double dist = 0.0;  // signed: n.dot(p) - d
  RowVec3 J_point = RowVec3::Zero();
  RowVec3 J_plane = RowVec3::Zero();
};
PointPlaneEval point_plane(const Vec3& point, const PlaneCP& plane);

struct LineLineEval {
  double angle = 0.0;  // cosine of the direction angle
  RowVec4 J_angle_a = RowVec4::Zero();
  RowVec4 J_angle_b = RowVec4::Zero();
  bool parallel = false;
  double dist = 0.0;  // only meaningful when parallel
  RowVec4 J_dist_a = RowVec4::Zero();
  RowVec4 J_dist_b = RowVec4::Zero();
  double skew_dist = 0.0;  // common-normal distance, not emitted as a prior
};
LineLineEval line_line(const LineCP& a, const LineCP& b);

struct LinePlaneEval {
  double angle = 0.0;  // cosine between line direction and plane normal
  RowVec4 J_angle_line = RowVec4::Zero();
  RowVec3 J_angle_plane = RowVec3::Zero();
  bool parallel = false;
  double dist = 0.0;  // signed, only meaningful when parallel
  RowVec4 J_dist_line = RowVec4::Zero();
  RowVec3 J_dist_plane = RowVec3::Zero();
};
LinePlaneEval line_plane(const LineCP& line, const PlaneCP& plane);

struct PlanePlaneEval {
  double angle = 0.0;
  RowVec3 J_angle_a = RowVec3::Zero();
  RowVec3 J_angle_b = RowVec3::Zero();
  bool parallel = false;
  double dist = 0.0;
  RowVec3 J_dist_a = RowVec3::Zero();
  RowVec3 J_dist_b = RowVec3::Zero();
};
PlanePlaneEval plane_plane(const PlaneCP& a, const PlaneCP& b);

// --- Prior database ---------------------------------------------------------

struct StructurePrior {
  PriorKind kind = PriorKind::PointPointDist;
  double value = 0.0;  // meters or cosine
  double sigma = 1e-3;
  int support = 1;  // number of raw quantities merged into this entry
};

struct ExtractionDiagnostics {
  // Clusters dropped because their members were not identical (span above
  // the exactness tolerance): unidentifiable under scalar association.
  int dropped_clusters = 0;
  int dropped_values = 0;
};

struct ExtractOptions {
  double tau_dist = 0.05;   // association threshold, meters
  double tau_cos = 0.02;    // association threshold, cosine
  double sigma_floor = 1e-3;
  double max_cluster_span = 1e-9;  // members beyond this are coincidental
  int min_support = 1;
  bool strict = false;  // escalate wide clusters to ExtractionRejected
  std::array<bool, kNumPriorKinds> enabled = {true, true, true, true, true,
                                              true, true, true, true};

  double tau_for(PriorKind kind) const { return prior_kind_is_angle(kind) ? tau_cos : tau_dist; }
};

struct ExtractionRejected : std::runtime_error {
  PriorKind kind;
  std::vector<std::pair<double, double>> offending_clusters;  // (lo, hi)
  ExtractionRejected(PriorKind k, std::vector<std::pair<double, double>> clusters);
};

// Sparse per-kind sets of scalar priors, each kind sorted ascending with
// consecutive values more than 2*tau apart.
class StructurePriorDB {
 public:
  void add(const StructurePrior& prior);
  const std::vector<StructurePrior>& entries(PriorKind kind) const;
  std::size_t total_size() const;
  bool empty() const { return total_size() == 0; }

  // Entry of `kind` nearest to `value`, if any.
  std::optional<StructurePrior> nearest(PriorKind kind, double value) const;

  // Sorted-order and 2*tau separation check.
  bool satisfies_sparseness(const ExtractOptions& opts) const;

  std::string serialize_jsonl() const;
  static StructurePriorDB deserialize_jsonl(const std::string& text);

 private:
  std::array<std::vector<StructurePrior>, kNumPriorKinds> by_kind_;
};

struct WorldPrimitives {
  std::vector<Vec3> points;
  std::vector<LineCP> lines;
  std::vector<PlaneCP> planes;
};

// Offline extraction: evaluates every enabled pairwise quantity, clusters the
// values per kind (1-D single linkage with gap 2*tau) and stores cluster
// means with empirical std floored by the sigma policy.
StructurePriorDB extract_priors(const WorldPrimitives& primitives, const ExtractOptions& opts,
                                ExtractionDiagnostics* diag = nullptr);

// --- Online association -----------------------------------------------------

struct AssociatedPriorFactor {
  PriorKind kind;
  VarKey a;
  VarKey b;
  StructurePrior prior;
  double predicted = 0.0;  // h(a, b) at association time
};

struct FeatureEstimates {
  std::vector<std::pair<int, Vec3>> points;      // id, estimate
  std::vector<std::pair<int, LineCP>> lines;
  std::vector<std::pair<int, PlaneCP>> planes;
};

// A factor is emitted for each feature pair whose predicted quantity lies
// within tau of the nearest database entry of the matching kind. Both
// features must meet the confidence threshold. Parallel-gated distance kinds
// are only tested when the angle gate holds at the current estimates.
std::vector<AssociatedPriorFactor> associate(const FeatureEstimates& estimates,
                                             const std::map<VarKey, double>& confidences,
                                             double confidence_threshold,
                                             const StructurePriorDB& db,
                                             const ExtractOptions& opts);

}  // namespace spnav
