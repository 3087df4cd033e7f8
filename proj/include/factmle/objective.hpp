#pragma once

#include <Eigen/Dense>

#include "factmle/data_io.hpp"
#include "factmle/spectra.hpp"

namespace factmle {

/// Decision variable of the solver: componentwise precisions
/// phi_i = 1/psi_i, constrained to the box 0 < phi_i <= 1/eps.
/// eps == 0 disables the upper bound (used by the unconstrained
/// block-structured variant).
struct UniquenessPrecision {
  Eigen::VectorXd phi;
  double eps = 1e-7;
};

/// True iff phi lies in (0, 1/eps]^p (with a relative roundoff slack on
/// the upper bound).
bool is_feasible(const UniquenessPrecision& u);

/// The DC objective f = f1 - f2 at one point.
///
/// f1 is the separable convex part sum_i(-log phi_i + s_ii phi_i); f2 the
/// convex spectral part built from the top-r eigenvalues of
/// Phi^{1/2} S Phi^{1/2}. Each eigenvalue contributes
/// -(log(max{1,l}) - max{1,l} + 1) to f2, so f2 >= 0 and eigenvalues
/// at or below 1 contribute nothing.
struct ObjectiveValue {
  double f = 0.0;
  double f1 = 0.0;
  double f2 = 0.0;
  Eigen::VectorXd lambda_star;  // eigenvalues used (length min(r+1, rank bound))
};

/// Subgradient of the spectral part f2 at one point, together with the
/// spectral weights delta_i = max{0, 1 - 1/lambda_i} that generate it.
/// tie_flag reports lambda_r ~ lambda_{r+1}, where the subgradient is
/// not unique (any top-r selection is a valid choice).
struct SubgradientWorkspace {
  Eigen::VectorXd grad;   // length p
  Eigen::VectorXd delta;  // length r
  bool tie_flag = false;
};

ObjectiveValue objective(const CovarianceInput& cov, const UniquenessPrecision& u,
                         int r);

/// Same, reusing an already computed spectrum at u (one eigensolve per
/// solver iteration serves both the objective and the subgradient).
ObjectiveValue objective_with_spectrum(const CovarianceInput& cov,
                                       const UniquenessPrecision& u, int r,
                                       const ScaledSpectrum& spectrum);

/// Spectral form of the objective for strictly positive definite S:
/// sum over all p eigenvalues of (-log l + l) plus the rank-r spectral
/// term; equals f(phi) - log det(S).
double full_rank_objective(const CovarianceInput& cov, const UniquenessPrecision& u,
                           int r);

SubgradientWorkspace subgradient_f2(const CovarianceInput& cov,
                                    const UniquenessPrecision& u, int r,
                                    const ScaledSpectrum& spectrum);

/// Spectral weight applied to eigenvalue l (0 when l <= 1, including a
/// snap window around 1 that avoids cancellation in 1 - 1/l).
double spectral_weight(double lambda);

/// Contribution of eigenvalue l to -f2 (nonpositive, 0 when l <= 1).
double spectral_term(double lambda);

/// Gradient of the separable part: d f1 / d phi_i = -1/phi_i + s_ii.
Eigen::VectorXd grad_f1(const CovarianceInput& cov, const UniquenessPrecision& u);

}  // namespace factmle
