#pragma once

#include "spnav/graph.hpp"
#include "spnav/structure_priors.hpp"
#include "spnav/window_state.hpp"

#include <Eigen/Cholesky>

#include <optional>
#include <vector>

namespace spnav {

// Low-rank information contribution of one candidate structure prior:
// I_s = A^T A with A the covariance-whitened Jacobian scattered over the
// window tangent space.
struct CandidateInfo {
  int id = 0;
  MatX whitened_jacobian;  // rows <= 2, cols = window tangent dim

  MatX info_matrix() const { return whitened_jacobian.transpose() * whitened_jacobian; }
};

// Evaluates the candidate factor at the linearization point. Returns nullopt
// (candidate dropped) for degenerate geometry.
std::optional<CandidateInfo> candidate_fim(const AssociatedPriorFactor& factor,
                                           const SlidingWindowState& linearization, int id);

// Schur complement of H onto the listed coordinates, with the complement
// block damped by eps for guaranteed invertibility.
MatX pose_marginal_information(const MatX& H, const std::vector<int>& pose_indices,
                               double eps = 1e-9);

double logdet_psd(const MatX& M);

// Direct (dense) evaluation of the pose-marginal log-det information gain of
// one candidate on top of `base`. Reference route; the greedy selector uses
// an algebraically identical low-rank path.
double logdet_gain(const MatX& base, const CandidateInfo& candidate,
                   const std::vector<int>& pose_indices, double eps = 1e-9);

struct SelectionResult {
  std::vector<int> chosen;          // candidate ids in selection order
  std::vector<double> step_gains;   // log-det gain of each greedy step
  double total_gain = 0.0;
  long gain_evaluations = 0;
};

// Greedy maximization of the pose-marginal log-det gain under budget k.
// The pose block must be the leading `pose_dim` coordinates of the tangent.
// Plain greedy below `lazy_threshold` candidates, lazy greedy (exact under
// submodularity) above. Ties break toward the lowest candidate id.
SelectionResult greedy_select(const std::vector<CandidateInfo>& candidates, const MatX& base,
                              int pose_dim, int k, int lazy_threshold = 50);

// Exhaustive search over all size-k subsets, feasible only for small
// problems; the benchmark's optimal-selection column and the test oracle.
SelectionResult exhaustive_select(const std::vector<CandidateInfo>& candidates, const MatX& base,
                                  int pose_dim, int k);

// Incremental gain evaluator shared by the selectors: holds Cholesky factors
// of the damped base and of its feature block, updated rank-one as
// candidates are committed.
class GainContext {
 public:
  GainContext(const MatX& base, int pose_dim, double eps = 1e-9);
  double gain(const CandidateInfo& candidate) const;
  void commit(const CandidateInfo& candidate);

 private:
  int pose_dim_;
  Eigen::LLT<MatX> full_;
  Eigen::LLT<MatX> feat_;
};

}  // namespace spnav
