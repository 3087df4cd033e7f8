#pragma once

// Independent reference computations used to check the library. These
// deliberately avoid the library's own evaluation paths: full dense
// eigendecompositions, numeric differentiation, 1-D golden-section
// minimization, and brute-force grid search.

#include <Eigen/Dense>
#include <functional>

#include "factmle/rng.hpp"

namespace oracle {

// Random SPD matrix diag + low-rank with unit-scale entries.
Eigen::MatrixXd random_spd(int p, factmle::Rng& rng);

// Log-uniform vector in [lo, hi].
Eigen::VectorXd random_loguniform(int p, double lo, double hi, factmle::Rng& rng);

// All eigenvalues of diag(sqrt(phi)) * s * diag(sqrt(phi)), descending.
Eigen::VectorXd scaled_eigenvalues(const Eigen::MatrixXd& s, const Eigen::VectorXd& phi);

// f(phi) evaluated through a full dense eigendecomposition.
double objective_dense(const Eigen::MatrixXd& s, const Eigen::VectorXd& phi, int r);

// Spectral part f2 alone (nonnegative).
double f2_dense(const Eigen::MatrixXd& s, const Eigen::VectorXd& phi, int r);

// log det(Sigma) + tr(Sigma^{-1} S) with dense inversion.
double neg_loglik_dense(const Eigen::MatrixXd& s, const Eigen::VectorXd& psi,
                        const Eigen::MatrixXd& loadings);

// Central finite differences of f2.
Eigen::VectorXd fd_subgradient(const Eigen::MatrixXd& s, const Eigen::VectorXd& phi,
                               int r, double step);

// Minimizer of a unimodal function on [lo, hi].
double golden_section(const std::function<double(double)>& f, double lo, double hi,
                      int iters = 200);

// Largest eigenvalue of a symmetric 3x3 matrix, closed form.
double lambda_max_3x3(double a11, double a22, double a33, double a12, double a13,
                      double a23);

// Brute-force minimum of the rank-1 objective for p = 3 over a log-spaced
// grid of [eps, 1/eps]^3.
double grid_min_p3(const Eigen::Matrix3d& s, double eps, int points_per_dim,
                   int threads);

}  // namespace oracle
