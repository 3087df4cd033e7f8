#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "factmle/data_io.hpp"
#include "factmle/objective.hpp"

namespace factmle {

enum class InitKind { FullDiagonal, HalfDiagonal, UniformRandom, WarmStart };
enum class StopRule { ObjectiveRelative, IterateRelative };
enum class Termination { Converged, MaxIters, Stalled };

struct SolverConfig {
  int r = 1;
  double eps = 1e-7;      // box bound: phi <= 1/eps; 0 disables the bound
  double tol = 1e-8;      // eta in the stopping rules
  int max_iters = 2000;
  // FullDiagonal starts at the no-factor fit psi_i = s_ii, which leaves
  // degenerate inputs (S* already at unit spectrum) fixed immediately.
  InitKind init = InitKind::FullDiagonal;
  std::uint64_t seed = 0;          // for UniformRandom
  Eigen::VectorXd warm_start;      // for WarmStart
  StopRule stop_rule = StopRule::ObjectiveRelative;
};

/// Per-iteration record of a solve. objectives has one entry per visited
/// iterate (iterations + 1 values); step_norms and cum_seconds one entry
/// per step. rho is the strong-convexity constant backing the descent
/// certificate (eps^2 for the box solver, 2*gamma for ridge, 0 when no
/// uniform bound applies).
struct SolverTrace {
  std::vector<double> objectives;
  std::vector<double> step_norms;
  std::vector<double> cum_seconds;
  Termination termination = Termination::MaxIters;
  int iterations = 0;
  double rho = 0.0;
};

/// Observer invoked with each accepted iterate (including the initial
/// one, at iteration 0).
using IterationObserver = std::function<void(int, const Eigen::VectorXd&)>;

/// One closed-form update: phi_i = min{1/(s_ii - grad_i), 1/eps}.
/// The denominator is nonnegative by construction (a drop below -1e-6
/// signals an eigensolver failure upstream).
UniquenessPrecision dc_step(const CovarianceInput& cov, const UniquenessPrecision& u,
                            const SubgradientWorkspace& grad);

/// Runs the DC iteration from the configured initializer until the stop
/// rule fires or the iteration budget is exhausted. One eigensolve per
/// iteration.
std::pair<UniquenessPrecision, SolverTrace> solve(const CovarianceInput& cov,
                                                  const SolverConfig& config,
                                                  const IterationObserver& observer = {});

/// Restricted variant used by the continuation scheme: coordinates with
/// mask[i] true are held at their incoming value and excluded from
/// updates and stationarity.
std::pair<UniquenessPrecision, SolverTrace> solve_restricted(
    const CovarianceInput& cov, const SolverConfig& config,
    const std::vector<bool>& frozen, const Eigen::VectorXd& start,
    const IterationObserver& observer = {});

/// Result of auditing a trace against the descent guarantees.
struct DescentReport {
  int steps_checked = 0;
  double worst_margin = 0.0;   // min over k of lhs - rhs in the per-step bound
  double rate_lhs = 0.0;       // min_k rho * ||step_k||^2
  double rate_rhs = 0.0;       // (2/K) * (f(1) - f(K+1))
};

/// Verifies, for every recorded step, that the objective decrease
/// dominates (rho/2)*||step||^2, and that the aggregate finite-time rate
/// bound holds. Throws CertificationFailure naming the first violating
/// iteration.
DescentReport certify_descent(const SolverTrace& trace);

/// Initial iterate for a configuration (exposed for reuse by variants).
Eigen::VectorXd initial_phi(const CovarianceInput& cov, const SolverConfig& config);

}  // namespace factmle
