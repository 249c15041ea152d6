#include "spnav/solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <unordered_map>

namespace spnav {

double huber_weight(double r2, double delta) {
  if (r2 <= delta * delta) return 1.0;
  return delta / std::sqrt(r2);
}

double huber_cost(double r2, double delta) {
  if (r2 <= delta * delta) return r2;
  return 2.0 * delta * std::sqrt(r2) - delta * delta;
}

namespace {

using OffsetMap = std::unordered_map<VarKey, int, VarKeyHash>;

OffsetMap build_offsets(const SlidingWindowState& x) {
  OffsetMap offsets;
  int off = 0;
  for (const VarKey& k : x.ordered_keys()) {
    offsets.emplace(k, off);
    off += SlidingWindowState::dim_of(k.kind);
  }
  return offsets;
}

}  // namespace

NormalEquations build_normal_equations(const std::vector<std::shared_ptr<Factor>>& factors,
                                       const SlidingWindowState& x, double huber_delta) {
  const int dim = x.tangent_dim();
  NormalEquations ne;
  ne.H = MatX::Zero(dim, dim);
  ne.b = VecX::Zero(dim);
  const OffsetMap offsets = build_offsets(x);

  for (const auto& factor : factors) {
    const FactorEvaluation eval = factor->evaluate(x);
    if (!eval.valid) {
      ne.skipped_factors++;
      continue;
    }
    const MatX& info = factor->information();
    const VecX wr = info * eval.residual;
    const double r2 = eval.residual.dot(wr);
    double w = 1.0;
    if (factor->robust()) {
      ne.cost += huber_cost(r2, huber_delta);
      w = huber_weight(r2, huber_delta);
    } else {
      ne.cost += r2;
    }

    // Upper-triangle accumulation in block-offset order, mirrored afterwards,
    // keeps H bitwise symmetric.
    for (std::size_t i = 0; i < eval.jacobians.size(); ++i) {
      const auto& [ki, Ji] = eval.jacobians[i];
      const int oi = offsets.at(ki);
      ne.b.segment(oi, Ji.cols()) += w * (Ji.transpose() * wr);
      for (std::size_t j = 0; j < eval.jacobians.size(); ++j) {
        const auto& [kj, Jj] = eval.jacobians[j];
        const int oj = offsets.at(kj);
        if (oj < oi) continue;
        ne.H.block(oi, oj, Ji.cols(), Jj.cols()) += w * (Ji.transpose() * info * Jj);
      }
    }
  }

  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < i; ++j) ne.H(i, j) = ne.H(j, i);
  }
  return ne;
}

std::optional<VecX> lm_step(const NormalEquations& ne, double lambda) {
  const int n = static_cast<int>(ne.H.rows());
  MatX A = ne.H;
  A.diagonal().array() += lambda;
  Eigen::LLT<MatX> llt(A);
  if (llt.info() != Eigen::Success) return std::nullopt;
  VecX dx = llt.solve(-ne.b);
  // One step of iterative refinement tightens the linear-solve residual.
  dx += llt.solve(-ne.b - A * dx);
  const double resid = (A * dx + ne.b).norm();
  const double scale = std::max(ne.b.norm(), 1.0);
  if (!dx.allFinite() || resid > 1e-10 * scale * std::sqrt(static_cast<double>(n) + 1.0)) {
    return std::nullopt;
  }
  return dx;
}

SlidingWindowState optimize(const std::vector<std::shared_ptr<Factor>>& factors,
                            const SlidingWindowState& x0, const SolverConfig& config,
                            OptimizeReport* report) {
  using Clock = std::chrono::steady_clock;
  OptimizeReport local;
  OptimizeReport& rep = report ? *report : local;
  rep = OptimizeReport{};

  SlidingWindowState x = x0;
  NormalEquations ne = build_normal_equations(factors, x, config.huber_delta);
  rep.cost_trace.push_back(ne.cost);
  rep.skipped_factors = ne.skipped_factors;
  double lambda = config.lambda0;

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    const auto t0 = Clock::now();
    std::optional<VecX> dx;
    while (!(dx = lm_step(ne, lambda))) {
      lambda *= config.lambda_up;
      if (lambda > config.lambda_max) {
        rep.diverged = true;
        rep.final_cost = ne.cost;
        return x;
      }
    }

    const SlidingWindowState x_try = x.boxplus(*dx);
    NormalEquations ne_try = build_normal_equations(factors, x_try, config.huber_delta);
    const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
    rep.iteration_seconds.push_back(dt);
    rep.iterations++;

    if (ne_try.cost < ne.cost) {
      const double decrease = ne.cost - ne_try.cost;
      x = x_try;
      ne = std::move(ne_try);
      rep.cost_trace.push_back(ne.cost);
      lambda = std::max(lambda / config.lambda_down, 1e-12);
      if (dx->norm() <= config.tol_dx || decrease <= config.tol_cost_rel * ne.cost + 1e-15) {
        rep.converged = true;
        break;
      }
    } else {
      rep.rejected_steps++;
      if (dx->norm() <= config.tol_dx) {
        rep.converged = true;
        break;
      }
      lambda *= config.lambda_up;
      if (lambda > config.lambda_max) {
        rep.diverged = true;
        break;
      }
    }
  }
  rep.final_cost = ne.cost;
  return x;
}

// --- Marginalization ----------------------------------------------------------

namespace {

void remove_variable(SlidingWindowState* x, const VarKey& k) {
  switch (k.kind) {
    case VarKind::ImuState: x->imu_states().erase(k.id); return;
    case VarKind::Point: x->points().erase(k.id); return;
    case VarKind::Line: x->lines().erase(k.id); return;
    case VarKind::Plane: x->planes().erase(k.id); return;
  }
}

}  // namespace

void marginalize_variables(FactorGraph* graph, const std::vector<VarKey>& to_remove,
                           const SolverConfig& config) {
  const std::set<VarKey> removed(to_remove.begin(), to_remove.end());

  std::vector<std::shared_ptr<Factor>> touched;
  std::vector<std::shared_ptr<Factor>> kept;
  for (const auto& f : graph->factors) {
    const bool touches = std::any_of(f->keys().begin(), f->keys().end(),
                                     [&](const VarKey& k) { return removed.count(k) != 0; });
    (touches ? touched : kept).push_back(f);
  }

  // Local ordering: eliminated variables first, then boundary neighbors in
  // deterministic key order.
  std::set<VarKey> boundary_set;
  for (const auto& f : touched) {
    for (const VarKey& k : f->keys()) {
      if (!removed.count(k)) boundary_set.insert(k);
    }
  }
  std::vector<VarKey> local_keys(to_remove.begin(), to_remove.end());
  std::vector<VarKey> boundary(boundary_set.begin(), boundary_set.end());
  local_keys.insert(local_keys.end(), boundary.begin(), boundary.end());

  std::unordered_map<VarKey, int, VarKeyHash> local_off;
  int dim = 0;
  int elim_dim = 0;
  for (const VarKey& k : local_keys) {
    local_off.emplace(k, dim);
    dim += SlidingWindowState::dim_of(k.kind);
    if (removed.count(k)) elim_dim += SlidingWindowState::dim_of(k.kind);
  }

  MatX H = MatX::Zero(dim, dim);
  VecX b = VecX::Zero(dim);
  for (const auto& f : touched) {
    const FactorEvaluation eval = f->evaluate(graph->state);
    if (!eval.valid) continue;
    const MatX& info = f->information();
    const VecX wr = info * eval.residual;
    const double w =
        f->robust() ? huber_weight(eval.residual.dot(wr), config.huber_delta) : 1.0;
    for (const auto& [ki, Ji] : eval.jacobians) {
      const int oi = local_off.at(ki);
      b.segment(oi, Ji.cols()) += w * (Ji.transpose() * wr);
      for (const auto& [kj, Jj] : eval.jacobians) {
        const int oj = local_off.at(kj);
        H.block(oi, oj, Ji.cols(), Jj.cols()) += w * (Ji.transpose() * info * Jj);
      }
    }
  }

  graph->factors = std::move(kept);

  const int bdim = dim - elim_dim;
  if (bdim > 0 && !touched.empty()) {
    const MatX Hee = H.topLeftCorner(elim_dim, elim_dim) + 1e-9 * MatX::Identity(elim_dim, elim_dim);
    const MatX Heb = H.topRightCorner(elim_dim, bdim);
    const MatX Hbb = H.bottomRightCorner(bdim, bdim);
    const VecX be = b.head(elim_dim);
    const VecX bb = b.tail(bdim);

    Eigen::LDLT<MatX> ldlt(Hee);
    const MatX HeeInvHeb = ldlt.solve(Heb);
    MatX Hm = Hbb - Heb.transpose() * HeeInvHeb;
    Hm = 0.5 * (Hm + Hm.transpose().eval());
    const VecX bm = bb - HeeInvHeb.transpose() * be;

    // Factorize the dense prior as r = J dx + r0 with unit weighting.
    Eigen::SelfAdjointEigenSolver<MatX> eig(Hm);
    const VecX evals = eig.eigenvalues();
    const double tol = std::max(evals.cwiseAbs().maxCoeff(), 1.0) * 1e-12;
    std::vector<int> keep;
    for (int i = 0; i < evals.size(); ++i) {
      if (evals(i) > tol) keep.push_back(i);
    }
    if (!keep.empty()) {
      MatX J(static_cast<int>(keep.size()), bdim);
      VecX r0(static_cast<int>(keep.size()));
      const MatX U = eig.eigenvectors();
      // r0 satisfies J^T r0 = bm on the kept subspace.
      for (std::size_t r = 0; r < keep.size(); ++r) {
        const double s = std::sqrt(evals(keep[r]));
        J.row(static_cast<int>(r)) = s * U.col(keep[r]).transpose();
        r0(static_cast<int>(r)) = U.col(keep[r]).dot(bm) / s;
      }
      std::vector<VarValue> anchors;
      anchors.reserve(boundary.size());
      for (const VarKey& k : boundary) anchors.push_back(value_of(graph->state, k));
      graph->factors.push_back(
          std::make_shared<MarginalPriorFactor>(boundary, std::move(anchors), std::move(J),
                                                std::move(r0)));
    }
  }

  for (const VarKey& k : to_remove) remove_variable(&graph->state, k);
}

void marginalize_oldest(FactorGraph* graph, const SolverConfig& config) {
  if (graph->state.imu_states().size() == 0) return;
  const int oldest = graph->state.imu_states().items().front().first;
  const VarKey oldest_key{VarKind::ImuState, oldest};

  // Features remain only while some measurement factor ties them to a
  // surviving frame.
  std::set<VarKey> feature_keys;
  for (const VarKey& k : graph->state.ordered_keys()) {
    if (k.kind != VarKind::ImuState) feature_keys.insert(k);
  }
  std::set<VarKey> supported;
  for (const auto& f : graph->factors) {
    const FactorFamily fam = f->family();
    if (fam != FactorFamily::Point && fam != FactorFamily::Line && fam != FactorFamily::Plane) {
      continue;
    }
    if (f->keys()[0] == oldest_key) continue;
    supported.insert(f->keys()[1]);
  }

  std::vector<VarKey> to_remove{oldest_key};
  for (const VarKey& k : feature_keys) {
    if (!supported.count(k)) to_remove.push_back(k);
  }
  marginalize_variables(graph, to_remove, config);
}

}  // namespace spnav
