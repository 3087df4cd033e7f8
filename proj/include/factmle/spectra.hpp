#pragma once

#include <Eigen/Dense>

#include "factmle/data_io.hpp"

namespace factmle {

enum class SpectrumStrategy { Auto, DenseFull, GramThin, IterativeLowRank };

/// Top eigenpairs of the scaled covariance S* = Phi^{1/2} S Phi^{1/2}.
///
/// `eigenvalues` holds q = min(r + 1, rank bound) values sorted
/// descending, clamped at zero; `vectors` the matching orthonormal
/// columns. Eigenvalues of S* beyond q are zero and are treated as such
/// downstream. The extra guard pair (when available) lets callers detect
/// a tie between the r-th and (r+1)-th values.
struct ScaledSpectrum {
  Eigen::VectorXd eigenvalues;  // length q, descending, >= 0
  Eigen::MatrixXd vectors;      // p x q, orthonormal columns
  SpectrumStrategy strategy = SpectrumStrategy::DenseFull;

  double value_or_zero(Eigen::Index i) const {
    return i < eigenvalues.size() ? eigenvalues[i] : 0.0;
  }
};

/// Computes the r largest eigenpairs of Phi^{1/2} S Phi^{1/2} (plus one
/// guard pair when available).
///
/// With Auto the strategy is picked from the input shape: a thin Gram
/// factorization when X is available with n < p, a dense solve when S is
/// materialized and small, and seeded subspace (block power) iteration
/// otherwise. All strategies are deterministic for fixed inputs.
ScaledSpectrum eig_top(const CovarianceInput& cov, const Eigen::VectorXd& phi, int r,
                       SpectrumStrategy strategy = SpectrumStrategy::Auto);

/// All p eigenvalues of Phi^{1/2} S Phi^{1/2}, descending (dense path;
/// requires a materialized S).
Eigen::VectorXd full_spectrum(const CovarianceInput& cov, const Eigen::VectorXd& phi);

/// max_i ||S* u_i - lambda_i u_i||_2, evaluated through covariance
/// products (diagnostic, used by tests).
double spectrum_residual(const CovarianceInput& cov, const Eigen::VectorXd& phi,
                         const ScaledSpectrum& spectrum);

/// Scales a symmetric matrix as diag(d) * s * diag(d). Shared by every
/// dense path so that equal inputs give bitwise-equal matrices.
Eigen::MatrixXd scale_symmetric(const Eigen::MatrixXd& s, const Eigen::VectorXd& d);

/// Flips eigenvector signs so the entry of largest magnitude is
/// positive (first occurrence wins ties).
void canonicalize_sign(Eigen::MatrixXd& vectors);

}  // namespace factmle
