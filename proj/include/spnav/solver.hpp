#pragma once

#include "spnav/graph.hpp"

#include <optional>
#include <vector>

namespace spnav {

struct SolverConfig {
  int max_iterations = 8;
  double lambda0 = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 2.0;
  double lambda_max = 1e10;
  double tol_dx = 1e-8;        // convergence on |step|
  double tol_cost_rel = 1e-9;  // convergence on relative cost decrease
  double huber_delta = 1.345;  // on the Mahalanobis norm
  int window_length = 10;      // frames kept before marginalization
};

// IRLS weight of the Huber loss given the squared Mahalanobis distance.
double huber_weight(double r2, double delta);

// rho(r2): r2 below the knee, 2*delta*sqrt(r2) - delta^2 above.
double huber_cost(double r2, double delta);

struct NormalEquations {
  MatX H;
  VecX b;
  double cost = 0.0;
  int skipped_factors = 0;
};

// Gauss-Newton normal equations of the robustified cost at the given state.
// The step later solves (H + lambda I) dx = -b.
NormalEquations build_normal_equations(const std::vector<std::shared_ptr<Factor>>& factors,
                                       const SlidingWindowState& x, double huber_delta);

// Damped step. Returns nullopt when the factorization fails or the linear
// solve is inaccurate; the caller retries with a larger lambda.
std::optional<VecX> lm_step(const NormalEquations& ne, double lambda);

struct OptimizeReport {
  std::vector<double> cost_trace;  // initial cost followed by accepted costs
  std::vector<double> iteration_seconds;
  int iterations = 0;
  int rejected_steps = 0;
  bool diverged = false;
  bool converged = false;
  double final_cost = 0.0;
  int skipped_factors = 0;
};

// Levenberg-Marquardt over the window manifold.
SlidingWindowState optimize(const std::vector<std::shared_ptr<Factor>>& factors,
                            const SlidingWindowState& x0, const SolverConfig& config,
                            OptimizeReport* report = nullptr);

// Eliminates the given variables by Schur complement of the graph Hessian at
// the current state. Factors touching the eliminated variables are replaced
// by a single linear MarginalPriorFactor on their remaining neighbors.
void marginalize_variables(FactorGraph* graph, const std::vector<VarKey>& to_remove,
                           const SolverConfig& config);

// Slides the window: the oldest IMU state plus all features observed only by
// it are marginalized out. Call after optimize when the window exceeds
// config.window_length.
void marginalize_oldest(FactorGraph* graph, const SolverConfig& config);

}  // namespace spnav
