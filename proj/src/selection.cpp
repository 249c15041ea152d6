#include "spnav/selection.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>

namespace spnav {

std::optional<CandidateInfo> candidate_fim(const AssociatedPriorFactor& factor,
                                           const SlidingWindowState& linearization, int id) {
  StructurePriorFactor f(factor.a, factor.b,
                         {{factor.kind, factor.prior.value, factor.prior.sigma}});
  const FactorEvaluation eval = f.evaluate(linearization);
  if (!eval.valid) return std::nullopt;

  CandidateInfo out;
  out.id = id;
  const int n = linearization.tangent_dim();
  out.whitened_jacobian = MatX::Zero(eval.residual.size(), n);
  for (const auto& [key, J] : eval.jacobians) {
    out.whitened_jacobian.middleCols(linearization.offset_of(key), J.cols()) = J;
  }
  // Whiten rows by the per-component sigma.
  const MatX& info = f.information();
  for (int r = 0; r < out.whitened_jacobian.rows(); ++r) {
    out.whitened_jacobian.row(r) *= std::sqrt(info(r, r));
  }
  if (!out.whitened_jacobian.allFinite()) return std::nullopt;
  return out;
}

MatX pose_marginal_information(const MatX& H, const std::vector<int>& pose_indices, double eps) {
  const int n = static_cast<int>(H.rows());
  std::vector<bool> is_pose(n, false);
  for (int i : pose_indices) is_pose[i] = true;
  std::vector<int> rest;
  for (int i = 0; i < n; ++i) {
    if (!is_pose[i]) rest.push_back(i);
  }
  const int np = static_cast<int>(pose_indices.size());
  const int nf = static_cast<int>(rest.size());
  if (nf == 0) return H;

  MatX Hpp(np, np), Hpf(np, nf), Hff(nf, nf);
  for (int i = 0; i < np; ++i) {
    for (int j = 0; j < np; ++j) Hpp(i, j) = H(pose_indices[i], pose_indices[j]);
    for (int j = 0; j < nf; ++j) Hpf(i, j) = H(pose_indices[i], rest[j]);
  }
  for (int i = 0; i < nf; ++i) {
    for (int j = 0; j < nf; ++j) Hff(i, j) = H(rest[i], rest[j]);
  }
  Hff.diagonal().array() += eps;

  Eigen::LDLT<MatX> ldlt(Hff);
  MatX M = Hpp - Hpf * ldlt.solve(Hpf.transpose());
  M = 0.5 * (M + M.transpose().eval());
  return M;
}

double logdet_psd(const MatX& M) {
  Eigen::LLT<MatX> llt(M);
  if (llt.info() == Eigen::Success) {
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }
  Eigen::SelfAdjointEigenSolver<MatX> eig(M);
  double out = 0.0;
  for (int i = 0; i < eig.eigenvalues().size(); ++i) {
    out += std::log(std::max(eig.eigenvalues()(i), 1e-300));
  }
  return out;
}

double logdet_gain(const MatX& base, const CandidateInfo& candidate,
                   const std::vector<int>& pose_indices, double eps) {
  const MatX with = base + candidate.info_matrix();
  return logdet_psd(pose_marginal_information(with, pose_indices, eps)) -
         logdet_psd(pose_marginal_information(base, pose_indices, eps));
}

// --- Incremental evaluator ------------------------------------------------------

GainContext::GainContext(const MatX& base, int pose_dim, double eps) : pose_dim_(pose_dim) {
  MatX damped = base;
  const int nf = static_cast<int>(base.rows()) - pose_dim;
  if (nf > 0) damped.bottomRightCorner(nf, nf).diagonal().array() += eps;
  full_.compute(damped);
  if (full_.info() != Eigen::Success) {
    throw std::runtime_error("GainContext: base information is not positive definite");
  }
  if (nf > 0) {
    feat_.compute(damped.bottomRightCorner(nf, nf));
    if (feat_.info() != Eigen::Success) {
      throw std::runtime_error("GainContext: feature block is not positive definite");
    }
  }
}

namespace {
double logdet_small(const MatX& M) {
  if (M.rows() == 1) return std::log(M(0, 0));
  if (M.rows() == 2) return std::log(M(0, 0) * M(1, 1) - M(0, 1) * M(1, 0));
  return logdet_psd(M);
}
}  // namespace

// gain = logdet(marg(H + A^T A)) - logdet(marg(H))
//      = logdet(I + A H^-1 A^T) - logdet(I + A_f H_ff^-1 A_f^T)
// where marg is the Schur complement onto the leading pose block and the
// feature block carries the same eps damping in both routes.
double GainContext::gain(const CandidateInfo& candidate) const {
  const MatX& A = candidate.whitened_jacobian;
  const int r = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  const int nf = n - pose_dim_;

  const MatX full_term = MatX::Identity(r, r) + A * full_.solve(A.transpose());
  double out = logdet_small(full_term);
  if (nf > 0) {
    const MatX Af = A.rightCols(nf);
    const MatX feat_term = MatX::Identity(r, r) + Af * feat_.solve(Af.transpose());
    out -= logdet_small(feat_term);
  }
  return out;
}

void GainContext::commit(const CandidateInfo& candidate) {
  const MatX& A = candidate.whitened_jacobian;
  const int nf = static_cast<int>(A.cols()) - pose_dim_;
  for (int r = 0; r < A.rows(); ++r) {
    full_.rankUpdate(A.row(r).transpose(), 1.0);
    if (nf > 0) feat_.rankUpdate(A.row(r).tail(nf).transpose(), 1.0);
  }
}

// --- Selectors --------------------------------------------------------------------

namespace {
constexpr double kGainFloor = 1e-12;
}

SelectionResult greedy_select(const std::vector<CandidateInfo>& candidates, const MatX& base,
                              int pose_dim, int k, int lazy_threshold) {
  SelectionResult result;
  if (k <= 0 || candidates.empty()) return result;
  GainContext ctx(base, pose_dim);

  const int n = static_cast<int>(candidates.size());
  std::vector<bool> chosen(n, false);

  if (n <= lazy_threshold) {
    for (int step = 0; step < k; ++step) {
      int best = -1;
      double best_gain = -1.0;
      for (int i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        const double g = ctx.gain(candidates[i]);
        result.gain_evaluations++;
        if (g > best_gain) {
          best_gain = g;
          best = i;
        }
      }
      if (best < 0 || best_gain < kGainFloor) break;
      chosen[best] = true;
      ctx.commit(candidates[best]);
      result.chosen.push_back(candidates[best].id);
      result.step_gains.push_back(best_gain);
      result.total_gain += best_gain;
    }
    return result;
  }

  // Lazy greedy: stale upper bounds in a max-heap; exact for submodular
  // gains because a re-evaluated top element that stays on top is optimal.
  struct Entry {
    double gain;
    int idx;
    int stamp;
  };
  auto cmp = [&](const Entry& a, const Entry& b) {
    if (a.gain != b.gain) return a.gain < b.gain;
    return candidates[a.idx].id > candidates[b.idx].id;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(cmp)> heap(cmp);
  for (int i = 0; i < n; ++i) {
    const double g = ctx.gain(candidates[i]);
    result.gain_evaluations++;
    heap.push({g, i, 0});
  }

  int stamp = 0;
  while (static_cast<int>(result.chosen.size()) < k && !heap.empty()) {
    Entry top = heap.top();
    heap.pop();
    if (top.stamp == stamp) {
      if (top.gain < kGainFloor) break;
      chosen[top.idx] = true;
      ctx.commit(candidates[top.idx]);
      result.chosen.push_back(candidates[top.idx].id);
      result.step_gains.push_back(top.gain);
      result.total_gain += top.gain;
      stamp++;
      continue;
    }
    const double g = ctx.gain(candidates[top.idx]);
    result.gain_evaluations++;
    heap.push({g, top.idx, stamp});
  }
  return result;
}

SelectionResult exhaustive_select(const std::vector<CandidateInfo>& candidates, const MatX& base,
                                  int pose_dim, int k) {
  const int n = static_cast<int>(candidates.size());
  if (n > 15 || k > 4) {
    throw std::invalid_argument("exhaustive_select: limited to n <= 15, k <= 4");
  }
  SelectionResult result;
  if (k <= 0 || n == 0) return result;
  k = std::min(k, n);

  std::vector<int> pose_indices(pose_dim);
  for (int i = 0; i < pose_dim; ++i) pose_indices[i] = i;
  const double base_logdet = logdet_psd(pose_marginal_information(base, pose_indices));

  std::vector<int> subset(k);
  std::vector<int> best_subset;
  double best_gain = -1.0;

  // Enumerate k-combinations in lexicographic order.
  for (int i = 0; i < k; ++i) subset[i] = i;
  while (true) {
    MatX M = base;
    for (int i : subset) M += candidates[i].info_matrix();
    const double gain = logdet_psd(pose_marginal_information(M, pose_indices)) - base_logdet;
    result.gain_evaluations++;
    if (gain > best_gain) {
      best_gain = gain;
      best_subset = subset;
    }
    int pos = k - 1;
    while (pos >= 0 && subset[pos] == n - k + pos) pos--;
    if (pos < 0) break;
    subset[pos]++;
    for (int i = pos + 1; i < k; ++i) subset[i] = subset[i - 1] + 1;
  }

  result.total_gain = std::max(best_gain, 0.0);
  for (int i : best_subset) result.chosen.push_back(candidates[i].id);
  return result;
}

}  // namespace spnav
