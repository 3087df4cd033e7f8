#include "factmle/em.hpp"

#include <chrono>
#include <cmath>

#include "factmle/errors.hpp"
#include "factmle/spectra.hpp"

namespace factmle {

namespace {
constexpr double kIncreaseRel = 1e-8;
}

std::pair<FactorModel, SolverTrace> solve_em(const CovarianceInput& cov,
                                             const EmConfig& config,
                                             const IterationObserver& observer) {
  const Eigen::Index p = cov.p();
  if (config.r < 1 || config.r >= p) throw DomainError("rank must satisfy 1 <= r < p");
  if (!(config.tol > 0.0)) throw DomainError("tolerance must be positive");
  if (config.max_iters < 1) throw DomainError("max_iters must be at least 1");
  if (!(config.psi_floor > 0.0)) throw DomainError("psi floor must be positive");
  const int r = config.r;

  // Deterministic start: psi at the marginal variances (the no-factor
  // fit), loadings from the top eigenvectors of S scaled by their excess
  // over the noise level estimated from the discarded tail eigenvalues,
  // psi_bar = (tr(S) - sum of top-r eigenvalues) / (p - r). A tail-based
  // level keeps genuine factor directions alive (columns zeroed here are
  // an absorbing state of the EM recursion) while degenerate inputs with
  // a flat spectrum start, and stay, at the no-factor model.
  FactorModel model;
  model.psi = cov.diagonal();
  const ScaledSpectrum top = eig_top(cov, Eigen::VectorXd::Ones(p), r);
  const Eigen::Index kept = std::min<Eigen::Index>(r, top.eigenvalues.size());
  const double psi_bar =
      std::max((cov.diagonal().sum() - top.eigenvalues.head(kept).sum()) /
                   static_cast<double>(p - r),
               0.0);
  model.loadings = Eigen::MatrixXd::Zero(p, r);
  for (Eigen::Index j = 0; j < kept; ++j) {
    const double scale = std::sqrt(std::max(top.eigenvalues[j] - psi_bar, 0.0));
    model.loadings.col(j) = top.vectors.col(j) * scale;
  }

  SolverTrace trace;
  trace.rho = 0.0;

  const auto t0 = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  double nll_prev = neg_loglik(cov, model);
  trace.objectives.push_back(nll_prev);
  if (observer) observer(0, model.psi);

  trace.termination = Termination::MaxIters;
  for (int k = 1; k <= config.max_iters; ++k) {
    const Eigen::VectorXd inv_psi = model.psi.cwiseInverse();
    const Eigen::MatrixXd a = inv_psi.asDiagonal() * model.loadings;  // Psi^{-1} L
    Eigen::MatrixXd m = model.loadings.transpose() * a;
    m = 0.5 * (m + m.transpose()).eval();

    Eigen::LLT<Eigen::MatrixXd> llt(Eigen::MatrixXd::Identity(r, r) + m);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("EM posterior covariance is not positive definite");
    }
    const Eigen::MatrixXd g = llt.solve(Eigen::MatrixXd::Identity(r, r));

    const Eigen::MatrixXd sa = cov.apply_covariance(a);   // S Psi^{-1} L, p x r
    const Eigen::MatrixXd c = sa * g;                     // S beta^T, p x r
    Eigen::MatrixXd second = g + g * (a.transpose() * sa) * g;  // E[f f^T]
    second = 0.5 * (second + second.transpose()).eval();

    Eigen::LLT<Eigen::MatrixXd> llt2(second);
    if (llt2.info() != Eigen::Success) {
      throw NumericalError("EM second-moment matrix is not positive definite");
    }
    const Eigen::MatrixXd loadings_next = llt2.solve(c.transpose()).transpose();

    Eigen::VectorXd psi_next =
        cov.diagonal() - (loadings_next.array() * c.array()).rowwise().sum().matrix();
    psi_next = psi_next.cwiseMax(config.psi_floor);

    const double step_norm = std::sqrt((psi_next - model.psi).squaredNorm() +
                                       (loadings_next - model.loadings).squaredNorm());
    model.psi = std::move(psi_next);
    model.loadings = loadings_next;

    const double nll_next = neg_loglik(cov, model);
    trace.objectives.push_back(nll_next);
    trace.step_norms.push_back(step_norm);
    trace.cum_seconds.push_back(elapsed());
    trace.iterations = k;
    if (observer) observer(k, model.psi);

    if (nll_next > nll_prev + kIncreaseRel * std::max(1.0, std::abs(nll_prev))) {
      throw NumericalError("EM likelihood increased at iteration " + std::to_string(k));
    }
    if (nll_prev - nll_next < config.tol * std::max(1.0, std::abs(nll_next))) {
      trace.termination = Termination::Converged;
      nll_prev = nll_next;
      break;
    }
    nll_prev = nll_next;
  }

  model.neg_loglik = nll_prev;
  model.rank_used = 0;
  for (Eigen::Index j = 0; j < model.loadings.cols(); ++j) {
    if (model.loadings.col(j).norm() > 0.0) ++model.rank_used;
  }
  return {std::move(model), std::move(trace)};
}

}  // namespace factmle
