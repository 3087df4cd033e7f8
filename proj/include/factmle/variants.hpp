#pragma once

#include <utility>
#include <vector>

#include "factmle/model.hpp"
#include "factmle/solver.hpp"

namespace factmle {

/// Configuration of the ridge-penalized problem f(phi) + gamma*sum phi_i^2
/// over phi > 0 (the box bound is replaced by the penalty).
struct RidgeConfig {
  double gamma = 1e-2;
  int r = 1;
  double tol = 1e-8;
  int max_iters = 2000;
  InitKind init = InitKind::FullDiagonal;
  std::uint64_t seed = 0;
  Eigen::VectorXd warm_start;
  StopRule stop_rule = StopRule::ObjectiveRelative;
};

/// Closed-form minimizer of -log phi + (s_ii - grad_i) phi + gamma phi^2
/// per coordinate. Keeps psi_i = 1/phi_i >= sqrt(2*gamma).
UniquenessPrecision ridge_step(const CovarianceInput& cov, const UniquenessPrecision& u,
                               const SubgradientWorkspace& grad, double gamma);

/// DC iteration with the ridge update; the trace records the penalized
/// objective (rho = 2*gamma in the descent certificate).
std::pair<UniquenessPrecision, SolverTrace> solve_ridge(
    const CovarianceInput& cov, const RidgeConfig& config,
    const IterationObserver& observer = {});

/// Epsilon-continuation toward the unregularized problem: box problems
/// are solved along a decreasing schedule with warm starts; coordinates
/// that land on the boundary between steps are fixed at the terminal
/// bound and excluded from later updates.
struct ContinuationConfig {
  std::vector<double> eps_schedule = {1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
  double pin_threshold = 1.001;  // pin when psi_i <= threshold * eps
};

struct ContinuationResult {
  UniquenessPrecision phi;
  std::vector<int> pinned;               // indices fixed at the boundary
  SolverTrace trace;                     // concatenated over schedule steps
  std::vector<double> step_final_objectives;
};

ContinuationResult solve_continuation(const CovarianceInput& cov, SolverConfig config,
                                      const ContinuationConfig& cc);

/// Ridge analogue of the continuation scheme: gamma is annealed
/// geometrically (factor 1/10) from config.gamma down to gamma_end with
/// warm starts; no pinning is needed since the penalty keeps psi
/// strictly positive.
std::pair<UniquenessPrecision, SolverTrace> solve_ridge_continuation(
    const CovarianceInput& cov, RidgeConfig config, double gamma_end = 1e-8);

/// One entry of a warm-started rank path.
struct PathEntry {
  int rank = 0;
  UniquenessPrecision phi;
  FactorModel model;
  SolverTrace trace;
};

/// Solves for each rank in order, warm-starting from the previous
/// solution (the decision variable does not depend on r).
std::vector<PathEntry> solve_path(const CovarianceInput& cov,
                                  const std::vector<int>& ranks, SolverConfig config);

}  // namespace factmle
