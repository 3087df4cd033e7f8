#pragma once

#include <Eigen/Dense>

#include "factmle/data_io.hpp"
#include "factmle/objective.hpp"

namespace factmle {

/// A fitted factor model: Sigma = diag(psi) + loadings * loadings^T.
/// Kept in factored form; see implied_covariance_dense for small p.
struct FactorModel {
  Eigen::VectorXd psi;       // length p, strictly positive
  Eigen::MatrixXd loadings;  // p x r (columns with no signal are zero)
  double neg_loglik = 0.0;
  int rank_used = 0;         // number of nonzero columns
};

/// Recovers the loading matrix from a solved phi: column i is
/// psi^{1/2} .* u_i * sqrt(lambda_i - 1) for eigenvalues above 1, zero
/// otherwise. The returned model's likelihood equals the DC objective at
/// phi.
FactorModel recover_loadings(const CovarianceInput& cov, const UniquenessPrecision& u,
                             int r);

/// -log det(Sigma^{-1}) + tr(Sigma^{-1} S), evaluated through the
/// Sherman-Morrison-Woodbury identity and the matching log-determinant
/// identity; never inverts a dense p x p matrix.
double neg_loglik(const CovarianceInput& cov, const FactorModel& model);

/// Dense Sigma = diag(psi) + L L^T; refused for large p.
Eigen::MatrixXd implied_covariance_dense(const FactorModel& model);

}  // namespace factmle
