#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "factmle/model.hpp"
#include "factmle/solver.hpp"

namespace factmle {

/// Ordered partition of {0..p-1} into contiguous ranges.
struct BlockStructure {
  std::vector<int> sizes;

  Eigen::Index total() const;
  std::vector<Eigen::Index> offsets() const;
  void validate(Eigen::Index p) const;
  bool all_singletons() const;
};

/// Block-diagonal precision matrix: one SPD block per range.
struct BlockPrecision {
  std::vector<Eigen::MatrixXd> blocks;

  Eigen::VectorXd diagonal() const;
  static BlockPrecision identity(const BlockStructure& structure);
  static BlockPrecision from_diagonal(const BlockStructure& structure,
                                      const Eigen::VectorXd& phi);
};

struct BlockObjective {
  double h = 0.0;   // f1-style part minus the spectral part
  double f1 = 0.0;  // -log det Phi + tr(S Phi)
  double f2 = 0.0;  // nonnegative spectral part
  Eigen::VectorXd lambda_star;
};

/// Objective of the block-structured problem at Phi; eigenvalues are
/// those of Phi^{1/2} S Phi^{1/2} with the blockwise symmetric root.
BlockObjective block_objective(const CovarianceInput& cov,
                               const BlockStructure& structure,
                               const BlockPrecision& phi, int r);

/// Diagonal blocks of the spectral-part subgradient, extracted from the
/// two thin factors of Phi^{-1/2} U D1 U^T Phi^{1/2} S without forming
/// the p x p product.
std::vector<Eigen::MatrixXd> block_subgradient(const CovarianceInput& cov,
                                               const BlockStructure& structure,
                                               const BlockPrecision& phi, int r);

/// Per-block closed-form update Phi_a = (S_aa - grad_aa)^{-1}, with a
/// minimum-eigenvalue floor guarding singular updates.
BlockPrecision block_dc_step(const CovarianceInput& cov, const BlockStructure& structure,
                             const BlockPrecision& phi,
                             const std::vector<Eigen::MatrixXd>& grad_blocks);

struct BlockSolverConfig {
  int r = 1;
  double tol = 1e-8;
  int max_iters = 2000;
};

std::pair<BlockPrecision, SolverTrace> solve_block(const CovarianceInput& cov,
                                                   const BlockStructure& structure,
                                                   const BlockSolverConfig& config,
                                                   const IterationObserver& observer = {});

/// Fitted model with block-diagonal unique covariance.
struct BlockModel {
  std::vector<Eigen::MatrixXd> psi_blocks;  // Psi = Phi^{-1}, blockwise
  Eigen::MatrixXd loadings;
  double neg_loglik = 0.0;
  int rank_used = 0;
};

BlockModel recover_block_model(const CovarianceInput& cov,
                               const BlockStructure& structure,
                               const BlockPrecision& phi, int r);

}  // namespace factmle
