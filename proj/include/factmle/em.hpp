#pragma once

#include <cstdint>
#include <utility>

#include "factmle/model.hpp"
#include "factmle/solver.hpp"

namespace factmle {

/// Configuration of the EM benchmark solver. The stopping rule mirrors
/// the DC solver's objective-relative criterion so head-to-head runs are
/// comparable.
struct EmConfig {
  int r = 1;
  int max_iters = 2000;
  double tol = 1e-8;
  std::uint64_t seed = 0;        // reserved; the default start is deterministic
  double psi_floor = 1e-10;
};

/// Classic EM for the Gaussian factor model, operating on the covariance
/// sufficient statistic. The E-step takes posterior factor moments under
/// the current (psi, L); the M-step updates both in closed form. The
/// trace records the negative log-likelihood per iteration, which EM
/// never increases.
std::pair<FactorModel, SolverTrace> solve_em(const CovarianceInput& cov,
                                             const EmConfig& config,
                                             const IterationObserver& observer = {});

}  // namespace factmle
