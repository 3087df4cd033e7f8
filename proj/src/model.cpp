#include "factmle/model.hpp"

#include <cmath>

#include "factmle/errors.hpp"
#include "factmle/spectra.hpp"

namespace factmle {

namespace {
constexpr double kUnitSnap = 1e-12;
constexpr Eigen::Index kDenseLimit = 2048;
}  // namespace

FactorModel recover_loadings(const CovarianceInput& cov, const UniquenessPrecision& u,
                             int r) {
  if (!is_feasible(u)) throw DomainError("phi is outside the feasible box");
  const Eigen::Index p = cov.p();
  const ScaledSpectrum spectrum = eig_top(cov, u.phi, r);

  FactorModel model;
  model.psi = u.phi.cwiseInverse();
  model.loadings = Eigen::MatrixXd::Zero(p, r);
  const Eigen::VectorXd psi_sqrt = model.psi.cwiseSqrt();
  const Eigen::Index top = std::min<Eigen::Index>(r, spectrum.eigenvalues.size());
  for (Eigen::Index i = 0; i < top; ++i) {
    const double lambda = spectrum.eigenvalues[i];
    if (lambda > 1.0 + kUnitSnap) {
      model.loadings.col(i) =
          psi_sqrt.array() * spectrum.vectors.col(i).array() * std::sqrt(lambda - 1.0);
      ++model.rank_used;
    }
  }
  model.neg_loglik = neg_loglik(cov, model);
  return model;
}

double neg_loglik(const CovarianceInput& cov, const FactorModel& model) {
  const Eigen::Index p = cov.p();
  if (model.psi.size() != p) throw DomainError("psi has wrong length");
  for (Eigen::Index i = 0; i < p; ++i) {
    if (!(model.psi[i] > 0.0)) throw DomainError("psi must be strictly positive");
  }

  const Eigen::Index r = model.loadings.cols();
  const Eigen::VectorXd inv_psi = model.psi.cwiseInverse();

  double logdet = model.psi.array().log().sum();
  double trace = (cov.diagonal().array() * inv_psi.array()).sum();
  if (r > 0) {
    // m = L^T Psi^{-1} L; log det Sigma = log det Psi + log det(I + m).
    const Eigen::MatrixXd a = inv_psi.asDiagonal() * model.loadings;  // p x r
    Eigen::MatrixXd m = model.loadings.transpose() * a;
    m = 0.5 * (m + m.transpose()).eval();

    Eigen::MatrixXd cap = Eigen::MatrixXd::Identity(r, r) + m;
    Eigen::LLT<Eigen::MatrixXd> llt(cap);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("capacitance matrix is not positive definite");
    }
    logdet += 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();

    // tr(Sigma^{-1} S) = tr(Psi^{-1} S) - tr((I + m)^{-1} A^T S A).
    Eigen::MatrixXd b;
    if (cov.has_data() && (!cov.has_covariance() || 2 * cov.data().rows() < p)) {
      const Eigen::MatrixXd& x = cov.data();
      const Eigen::MatrixXd xa = x * a;  // n x r
      b = xa.transpose() * xa / static_cast<double>(x.rows());
    } else {
      b = a.transpose() * cov.apply_covariance(a);
    }
    trace -= llt.solve(b).trace();
  }
  return logdet + trace;
}

Eigen::MatrixXd implied_covariance_dense(const FactorModel& model) {
  const Eigen::Index p = model.psi.size();
  if (p > kDenseLimit) {
    throw DomainError("dense covariance materialization refused for p > " +
                      std::to_string(kDenseLimit));
  }
  Eigen::MatrixXd sigma = model.loadings * model.loadings.transpose();
  sigma.diagonal() += model.psi;
  return sigma;
}

}  // namespace factmle
