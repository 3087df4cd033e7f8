#include "factmle/objective.hpp"

#include <cmath>

#include "factmle/errors.hpp"

namespace factmle {

namespace {

constexpr double kUnitSnap = 1e-12;   // |lambda - 1| below this is treated as 1
constexpr double kTieRel = 1e-9;      // relative tie threshold on lambda_r

void check_feasible(const UniquenessPrecision& u) {
  if (!is_feasible(u)) throw DomainError("phi is outside the feasible box");
}

}  // namespace

bool is_feasible(const UniquenessPrecision& u) {
  if (u.phi.size() == 0) return false;
  const double hi = u.eps > 0.0 ? (1.0 / u.eps) * (1.0 + 1e-12) : 0.0;
  for (Eigen::Index i = 0; i < u.phi.size(); ++i) {
    if (!(u.phi[i] > 0.0)) return false;
    if (u.eps > 0.0 && u.phi[i] > hi) return false;
  }
  return true;
}

double spectral_weight(double lambda) {
  if (std::abs(lambda - 1.0) <= kUnitSnap) return 0.0;
  if (lambda <= 1.0) return 0.0;
  return 1.0 - 1.0 / lambda;
}

double spectral_term(double lambda) {
  if (std::abs(lambda - 1.0) <= kUnitSnap) return 0.0;
  if (lambda <= 1.0) return 0.0;
  return std::log(lambda) - lambda + 1.0;
}

ObjectiveValue objective_with_spectrum(const CovarianceInput& cov,
                                       const UniquenessPrecision& u, int r,
                                       const ScaledSpectrum& spectrum) {
  check_feasible(u);
  const Eigen::VectorXd& diag = cov.diagonal();

  ObjectiveValue out;
  out.f1 = (diag.array() * u.phi.array() - u.phi.array().log()).sum();
  double h = 0.0;
  const Eigen::Index top = std::min<Eigen::Index>(r, spectrum.eigenvalues.size());
  for (Eigen::Index i = 0; i < top; ++i) h += spectral_term(spectrum.eigenvalues[i]);
  out.f2 = -h;
  out.f = out.f1 - out.f2;
  out.lambda_star = spectrum.eigenvalues;
  return out;
}

ObjectiveValue objective(const CovarianceInput& cov, const UniquenessPrecision& u,
                         int r) {
  check_feasible(u);
  return objective_with_spectrum(cov, u, r, eig_top(cov, u.phi, r));
}

double full_rank_objective(const CovarianceInput& cov, const UniquenessPrecision& u,
                           int r) {
  check_feasible(u);
  if (r < 1 || r >= cov.p()) throw DomainError("rank must satisfy 1 <= r < p");
  if (!cov.has_covariance()) {
    throw DomainError("full-rank objective requires a materialized covariance");
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_s(cov.covariance(),
                                                       Eigen::EigenvaluesOnly);
  const Eigen::VectorXd s_eigs = eig_s.eigenvalues();
  if (!(s_eigs.minCoeff() > 1e-10 * s_eigs.maxCoeff())) {
    throw DomainError("covariance matrix is numerically singular");
  }

  const Eigen::VectorXd lambda = full_spectrum(cov, u.phi);
  double value = 0.0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    value += -std::log(lambda[i]) + lambda[i];
  }
  for (int i = 0; i < r; ++i) value += spectral_term(lambda[i]);
  return value;
}

SubgradientWorkspace subgradient_f2(const CovarianceInput& cov,
                                    const UniquenessPrecision& u, int r,
                                    const ScaledSpectrum& spectrum) {
  check_feasible(u);
  const Eigen::Index p = cov.p();
  const Eigen::VectorXd& lambda = spectrum.eigenvalues;
  const Eigen::Index top = std::min<Eigen::Index>(r, lambda.size());

  SubgradientWorkspace out;
  out.delta = Eigen::VectorXd::Zero(r);
  for (Eigen::Index i = 0; i < top; ++i) out.delta[i] = spectral_weight(lambda[i]);

  const double lam_r = r <= lambda.size() ? spectrum.value_or_zero(r - 1) : 0.0;
  const double lam_next = spectrum.value_or_zero(r);
  out.tie_flag =
      std::abs(lam_r - lam_next) <= kTieRel * std::max(std::abs(lam_r), 1e-300);

  // Columns with zero weight do not contribute.
  Eigen::Index active = 0;
  for (Eigen::Index i = 0; i < top; ++i) {
    if (out.delta[i] > 0.0) ++active;
  }
  if (active == 0) {
    out.grad = Eigen::VectorXd::Zero(p);
    return out;
  }

  Eigen::MatrixXd u_act(p, active);
  Eigen::VectorXd delta_act(active);
  {
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < top; ++i) {
      if (out.delta[i] > 0.0) {
        u_act.col(k) = spectrum.vectors.col(i);
        delta_act[k] = out.delta[i];
        ++k;
      }
    }
  }

  // grad = diag(Phi^{-1/2} U D1 U^T Phi^{1/2} S), formed as the rowwise
  // product of two thin factors; no p x p intermediate.
  const Eigen::VectorXd d = u.phi.cwiseSqrt();
  Eigen::MatrixXd t1 = u_act;  // p x q: Phi^{-1/2} U D1
  for (Eigen::Index j = 0; j < active; ++j) {
    t1.col(j) = (t1.col(j).array() / d.array()) * delta_act[j];
  }

  Eigen::MatrixXd scaled = d.asDiagonal() * u_act;  // Phi^{1/2} U, p x q
  Eigen::MatrixXd t2;                               // q x p: U^T Phi^{1/2} S
  const bool gram_route =
      cov.has_data() && (!cov.has_covariance() || 2 * cov.data().rows() < p);
  if (gram_route) {
    const Eigen::MatrixXd& x = cov.data();
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    Eigen::MatrixXd t21 = inv_n * (x * scaled).transpose();  // q x n
    t2.noalias() = t21 * x;
  } else {
    t2.noalias() = scaled.transpose() * cov.covariance();
  }

  out.grad = (t1.array() * t2.transpose().array()).rowwise().sum();
  return out;
}

Eigen::VectorXd grad_f1(const CovarianceInput& cov, const UniquenessPrecision& u) {
  return cov.diagonal() - u.phi.cwiseInverse();
}

}  // namespace factmle
