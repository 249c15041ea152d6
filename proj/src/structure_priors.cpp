#include "spnav/structure_priors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace spnav {

namespace {
constexpr double kSmoothNorm = 1e-18;  // keeps the norm differentiable at 0

const char* kKindNames[kNumPriorKinds] = {
    "point_point_dist", "point_line_dist", "point_plane_dist",
    "line_line_angle",  "line_line_dist",  "line_plane_angle",
    "line_plane_dist",  "plane_plane_angle", "plane_plane_dist"};
}  // namespace

const char* prior_kind_name(PriorKind kind) { return kKindNames[static_cast<int>(kind)]; }

std::optional<PriorKind> prior_kind_from_name(const std::string& name) {
  for (int i = 0; i < kNumPriorKinds; ++i) {
    if (name == kKindNames[i]) return static_cast<PriorKind>(i);
  }
  return std::nullopt;
}

bool prior_kind_is_angle(PriorKind kind) {
  return kind == PriorKind::LineLineAngle || kind == PriorKind::LinePlaneAngle ||
         kind == PriorKind::PlanePlaneAngle;
}

// --- Pairwise measurements ---------------------------------------------------

PointPointEval point_point(const Vec3& a, const Vec3& b) {
  const Vec3 diff = b - a;
  const double d = diff.norm();
  if (d <= 1e-9) throw DegeneratePair("point_point: coincident points");
  PointPointEval out;
  out.dist = d;
  out.J_b = diff.transpose() / d;
  out.J_a = -out.J_b;
  return out;
}

PointLineEval point_line(const Vec3& point, const LineCP& line) {
  const Mat3 R = line.q.toRotationMatrix();
  const Vec3 e1 = R.col(0);
  const Vec3 e3 = R.col(2);

  PointLineEval out;
  out.displacement << e1.dot(point), e3.dot(point) + line.d;
  out.dist = std::sqrt(out.displacement.squaredNorm() + kSmoothNorm);

  const Vec2 u = out.displacement / out.dist;

  Eigen::Matrix<double, 2, 3> d_disp_d_point;
  d_disp_d_point.row(0) = e1.transpose();
  d_disp_d_point.row(1) = e3.transpose();
  out.J_point = u.transpose() * d_disp_d_point;

  Eigen::Matrix<double, 2, 4> d_disp_d_line = Eigen::Matrix<double, 2, 4>::Zero();
  d_disp_d_line.block<1, 3>(0, 0) = -point.transpose() * R * skew(Vec3::UnitX());
  d_disp_d_line.block<1, 3>(1, 0) = -point.transpose() * R * skew(Vec3::UnitZ());
  d_disp_d_line(1, 3) = 1.0;
  out.J_line = u.transpose() * d_disp_d_line;
  return out;
}

PointPlaneEval point_plane(const Vec3& point, const PlaneCP& plane) {
  const double d_k = plane.distance();
  const Vec3 n = plane.normal();
  PointPlaneEval out;
  out.dist = n.dot(point) - d_k;
  out.J_point = n.transpose();
  out.J_plane =
      point.transpose() * (Mat3::Identity() - n * n.transpose()) / d_k - n.transpose();
  return out;
}

LineLineEval line_line(const LineCP& a, const LineCP& b) {
  const Mat3 Ra = a.q.toRotationMatrix();
  const Mat3 Rb = b.q.toRotationMatrix();
  const Vec3 va = Ra.col(1);
  const Vec3 vb = Rb.col(1);

  LineLineEval out;
  out.angle = std::clamp(va.dot(vb), -1.0, 1.0);
  out.J_angle_a.head<3>() = -vb.transpose() * Ra * skew(Vec3::UnitY());
  out.J_angle_b.head<3>() = -va.transpose() * Rb * skew(Vec3::UnitY());

  const Vec3 ca = -a.d * Ra.col(2);
  const Vec3 cb = -b.d * Rb.col(2);
  const Vec3 diff = ca - cb;

  out.parallel = std::abs(out.angle) >= 1.0 - kTauParallel;
  out.dist = std::sqrt(diff.squaredNorm() + kSmoothNorm);
  const Vec3 u = diff / out.dist;
  out.J_dist_a.head<3>() = u.transpose() * (a.d * Ra * skew(Vec3::UnitZ()));
  out.J_dist_a(3) = u.dot(-Ra.col(2));
  out.J_dist_b.head<3>() = -u.transpose() * (b.d * Rb * skew(Vec3::UnitZ()));
  out.J_dist_b(3) = -u.dot(-Rb.col(2));
  if (!out.parallel) {
    const Vec3 cross = va.cross(vb);
    const double cn = cross.norm();
    if (cn > 1e-12) out.skew_dist = std::abs(cross.dot(diff)) / cn;
  }
  return out;
}

LinePlaneEval line_plane(const LineCP& line, const PlaneCP& plane) {
  const Mat3 Rl = line.q.toRotationMatrix();
  const Vec3 v = Rl.col(1);
  const double d_k = plane.distance();
  const Vec3 n = plane.normal();
  const Mat3 dn_dcp = (Mat3::Identity() - n * n.transpose()) / d_k;

  LinePlaneEval out;
  out.angle = std::clamp(v.dot(n), -1.0, 1.0);
  out.J_angle_line.head<3>() = -n.transpose() * Rl * skew(Vec3::UnitY());
  out.J_angle_plane = v.transpose() * dn_dcp;

  out.parallel = std::abs(out.angle) <= kTauParallel;
  const Vec3 c = -line.d * Rl.col(2);  // closest point of the line to origin
  out.dist = n.dot(c) - d_k;
  out.J_dist_line.head<3>() = n.transpose() * (line.d * Rl * skew(Vec3::UnitZ()));
  out.J_dist_line(3) = n.dot(-Rl.col(2));
  out.J_dist_plane = c.transpose() * dn_dcp - n.transpose();
  return out;
}

PlanePlaneEval plane_plane(const PlaneCP& a, const PlaneCP& b) {
  const Vec3 na = a.normal();
  const Vec3 nb = b.normal();
  PlanePlaneEval out;
  out.angle = std::clamp(na.dot(nb), -1.0, 1.0);
  out.J_angle_a = nb.transpose() * (Mat3::Identity() - na * na.transpose()) / a.distance();
  out.J_angle_b = na.transpose() * (Mat3::Identity() - nb * nb.transpose()) / b.distance();

  out.parallel = std::abs(out.angle) >= 1.0 - kTauParallel;
  const Vec3 diff = b.cp - a.cp;
  out.dist = std::sqrt(diff.squaredNorm() + kSmoothNorm);
  const Vec3 u = diff / out.dist;
  out.J_dist_b = u.transpose();
  out.J_dist_a = -u.transpose();
  return out;
}

// --- Database ----------------------------------------------------------------

ExtractionRejected::ExtractionRejected(PriorKind k, std::vector<std::pair<double, double>> clusters)
    : std::runtime_error(std::string("extract_priors: non-sparse quantities for kind ") +
                         prior_kind_name(k)),
      kind(k),
      offending_clusters(std::move(clusters)) {}

void StructurePriorDB::add(const StructurePrior& prior) {
  auto& list = by_kind_[static_cast<int>(prior.kind)];
  auto it = std::lower_bound(list.begin(), list.end(), prior.value,
                             [](const StructurePrior& p, double v) { return p.value < v; });
  list.insert(it, prior);
}

const std::vector<StructurePrior>& StructurePriorDB::entries(PriorKind kind) const {
  return by_kind_[static_cast<int>(kind)];
}

std::size_t StructurePriorDB::total_size() const {
  std::size_t n = 0;
  for (const auto& list : by_kind_) n += list.size();
  return n;
}

std::optional<StructurePrior> StructurePriorDB::nearest(PriorKind kind, double value) const {
  const auto& list = by_kind_[static_cast<int>(kind)];
  if (list.empty()) return std::nullopt;
  auto it = std::lower_bound(list.begin(), list.end(), value,
                             [](const StructurePrior& p, double v) { return p.value < v; });
  if (it == list.end()) return *(it - 1);
  if (it == list.begin()) return *it;
  const auto prev = it - 1;
  return (value - prev->value <= it->value - value) ? *prev : *it;
}

bool StructurePriorDB::satisfies_sparseness(const ExtractOptions& opts) const {
  for (int k = 0; k < kNumPriorKinds; ++k) {
    const auto& list = by_kind_[k];
    const double tau = opts.tau_for(static_cast<PriorKind>(k));
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i].value - list[i - 1].value <= 2.0 * tau) return false;
    }
  }
  return true;
}

std::string StructurePriorDB::serialize_jsonl() const {
  std::ostringstream os;
  for (const auto& list : by_kind_) {
    for (const auto& p : list) {
      nlohmann::json j;
      j["kind"] = prior_kind_name(p.kind);
      j["value"] = p.value;
      j["sigma"] = p.sigma;
      j["support"] = p.support;
      os << j.dump() << "\n";
    }
  }
  return os.str();
}

StructurePriorDB StructurePriorDB::deserialize_jsonl(const std::string& text) {
  StructurePriorDB db;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    StructurePrior p;
    const auto kind = prior_kind_from_name(j.at("kind").get<std::string>());
    if (!kind) throw std::runtime_error("StructurePriorDB: unknown kind " + j.dump());
    p.kind = *kind;
    p.value = j.at("value").get<double>();
    p.sigma = j.at("sigma").get<double>();
    p.support = j.at("support").get<int>();
    db.add(p);
  }
  return db;
}

// --- Extraction --------------------------------------------------------------

namespace {

struct KindValues {
  std::vector<double> values;
};

void cluster_and_store(PriorKind kind, std::vector<double>& values, const ExtractOptions& opts,
                       StructurePriorDB* db, ExtractionDiagnostics* diag,
                       std::vector<std::pair<double, double>>* wide_clusters) {
  if (values.empty()) return;
  std::sort(values.begin(), values.end());
  const double gap = 2.0 * opts.tau_for(kind);

  std::size_t start = 0;
  for (std::size_t i = 1; i <= values.size(); ++i) {
    const bool boundary = (i == values.size()) || (values[i] - values[i - 1] > gap);
    if (!boundary) continue;
    const std::size_t count = i - start;
    const double lo = values[start];
    const double hi = values[i - 1];
    const double span = hi - lo;
    if (span > opts.max_cluster_span) {
      if (wide_clusters) wide_clusters->emplace_back(lo, hi);
      if (diag) {
        diag->dropped_clusters += 1;
        diag->dropped_values += static_cast<int>(count);
      }
    } else if (static_cast<int>(count) >= opts.min_support) {
      const double mean = std::accumulate(values.begin() + start, values.begin() + i, 0.0) /
                          static_cast<double>(count);
      double var = 0.0;
      for (std::size_t j = start; j < i; ++j) var += (values[j] - mean) * (values[j] - mean);
      const double stddev = count > 1 ? std::sqrt(var / static_cast<double>(count - 1)) : 0.0;
      StructurePrior p;
      p.kind = kind;
      p.value = mean;
      p.sigma = std::max(stddev, opts.sigma_floor);
      p.support = static_cast<int>(count);
      db->add(p);
    }
    start = i;
  }
}

}  // namespace

StructurePriorDB extract_priors(const WorldPrimitives& primitives, const ExtractOptions& opts,
                                ExtractionDiagnostics* diag) {
  std::array<std::vector<double>, kNumPriorKinds> values;
  auto enabled = [&](PriorKind k) { return opts.enabled[static_cast<int>(k)]; };
  auto push = [&](PriorKind k, double v) { values[static_cast<int>(k)].push_back(v); };

  const auto& pts = primitives.points;
  const auto& lines = primitives.lines;
  const auto& planes = primitives.planes;

  if (enabled(PriorKind::PointPointDist)) {
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = i + 1; j < pts.size(); ++j)
        push(PriorKind::PointPointDist, point_point(pts[i], pts[j]).dist);
  }
  if (enabled(PriorKind::PointLineDist)) {
    for (const auto& p : pts)
      for (const auto& l : lines) push(PriorKind::PointLineDist, point_line(p, l).dist);
  }
  if (enabled(PriorKind::PointPlaneDist)) {
    for (const auto& p : pts)
      for (const auto& pl : planes) push(PriorKind::PointPlaneDist, point_plane(p, pl).dist);
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      const auto eval = line_line(lines[i], lines[j]);
      if (enabled(PriorKind::LineLineAngle)) push(PriorKind::LineLineAngle, eval.angle);
      if (enabled(PriorKind::LineLineDist) && eval.parallel)
        push(PriorKind::LineLineDist, eval.dist);
    }
  }
  for (const auto& l : lines) {
    for (const auto& pl : planes) {
      const auto eval = line_plane(l, pl);
      if (enabled(PriorKind::LinePlaneAngle)) push(PriorKind::LinePlaneAngle, eval.angle);
      if (enabled(PriorKind::LinePlaneDist) && eval.parallel)
        push(PriorKind::LinePlaneDist, eval.dist);
    }
  }
  for (std::size_t i = 0; i < planes.size(); ++i) {
    for (std::size_t j = i + 1; j < planes.size(); ++j) {
      const auto eval = plane_plane(planes[i], planes[j]);
      if (enabled(PriorKind::PlanePlaneAngle)) push(PriorKind::PlanePlaneAngle, eval.angle);
      if (enabled(PriorKind::PlanePlaneDist) && eval.parallel)
        push(PriorKind::PlanePlaneDist, eval.dist);
    }
  }

  StructurePriorDB db;
  for (int k = 0; k < kNumPriorKinds; ++k) {
    std::vector<std::pair<double, double>> wide;
    cluster_and_store(static_cast<PriorKind>(k), values[k], opts, &db, diag, &wide);
    if (opts.strict && !wide.empty()) {
      throw ExtractionRejected(static_cast<PriorKind>(k), std::move(wide));
    }
  }
  return db;
}

// --- Association -------------------------------------------------------------

namespace {

void try_emit(PriorKind kind, const VarKey& a, const VarKey& b, double predicted,
              const StructurePriorDB& db, const ExtractOptions& opts,
              std::vector<AssociatedPriorFactor>* out) {
  const auto entry = db.nearest(kind, predicted);
  if (!entry) return;
  if (std::abs(predicted - entry->value) > opts.tau_for(kind)) return;
  AssociatedPriorFactor f;
  f.kind = kind;
  f.a = a;
  f.b = b;
  f.prior = *entry;
  f.predicted = predicted;
  out->push_back(f);
}

}  // namespace

std::vector<AssociatedPriorFactor> associate(const FeatureEstimates& estimates,
                                             const std::map<VarKey, double>& confidences,
                                             double confidence_threshold,
                                             const StructurePriorDB& db,
                                             const ExtractOptions& opts) {
  std::vector<AssociatedPriorFactor> out;
  auto confident = [&](const VarKey& k) {
    auto it = confidences.find(k);
    return it != confidences.end() && it->second >= confidence_threshold;
  };

  std::vector<std::pair<VarKey, const Vec3*>> pts;
  std::vector<std::pair<VarKey, const LineCP*>> lines;
  std::vector<std::pair<VarKey, const PlaneCP*>> planes;
  for (const auto& [id, v] : estimates.points) {
    VarKey k{VarKind::Point, id};
    if (confident(k)) pts.emplace_back(k, &v);
  }
  for (const auto& [id, v] : estimates.lines) {
    VarKey k{VarKind::Line, id};
    if (confident(k)) lines.emplace_back(k, &v);
  }
  for (const auto& [id, v] : estimates.planes) {
    VarKey k{VarKind::Plane, id};
    if (confident(k)) planes.emplace_back(k, &v);
  }

  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      if ((*pts[i].second - *pts[j].second).norm() <= 1e-9) continue;
      const auto eval = point_point(*pts[i].second, *pts[j].second);
      try_emit(PriorKind::PointPointDist, pts[i].first, pts[j].first, eval.dist, db, opts, &out);
    }
  }
  for (const auto& [pk, p] : pts) {
    for (const auto& [lk, l] : lines) {
      try_emit(PriorKind::PointLineDist, pk, lk, point_line(*p, *l).dist, db, opts, &out);
    }
    for (const auto& [plk, pl] : planes) {
      try_emit(PriorKind::PointPlaneDist, pk, plk, point_plane(*p, *pl).dist, db, opts, &out);
    }
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      const auto eval = line_line(*lines[i].second, *lines[j].second);
      try_emit(PriorKind::LineLineAngle, lines[i].first, lines[j].first, eval.angle, db, opts,
               &out);
      if (eval.parallel) {
        try_emit(PriorKind::LineLineDist, lines[i].first, lines[j].first, eval.dist, db, opts,
                 &out);
      }
    }
  }
  for (const auto& [lk, l] : lines) {
    for (const auto& [plk, pl] : planes) {
      const auto eval = line_plane(*l, *pl);
      try_emit(PriorKind::LinePlaneAngle, lk, plk, eval.angle, db, opts, &out);
      if (eval.parallel) {
        try_emit(PriorKind::LinePlaneDist, lk, plk, eval.dist, db, opts, &out);
      }
    }
  }
  for (std::size_t i = 0; i < planes.size(); ++i) {
    for (std::size_t j = i + 1; j < planes.size(); ++j) {
      const auto eval = plane_plane(*planes[i].second, *planes[j].second);
      try_emit(PriorKind::PlanePlaneAngle, planes[i].first, planes[j].first, eval.angle, db, opts,
               &out);
      if (eval.parallel) {
        try_emit(PriorKind::PlanePlaneDist, planes[i].first, planes[j].first, eval.dist, db, opts,
                 &out);
      }
    }
  }
  return out;
}

}  // namespace spnav
