#include "factmle/spectra.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "factmle/errors.hpp"
#include "factmle/rng.hpp"

namespace factmle {

namespace {

constexpr double kIterTol = 1e-10;
constexpr int kMaxMatvecs = 5000;
constexpr Eigen::Index kDenseLimit = 2048;
constexpr Eigen::Index kGramLimit = 4096;
constexpr std::uint64_t kIterSeed = 0x9e3779b97f4a7c15ULL;

void check_inputs(const CovarianceInput& cov, const Eigen::VectorXd& phi, int r) {
  const Eigen::Index p = cov.p();
  if (phi.size() != p) throw DomainError("phi has wrong length");
  if (r < 1 || r >= p) throw DomainError("rank must satisfy 1 <= r < p");
  for (Eigen::Index i = 0; i < p; ++i) {
    if (!(phi[i] > 0.0)) throw DomainError("phi must be strictly positive");
  }
}

// Sorts eigenpairs descending (stable over exact ties) and clamps small
// negative eigenvalues to zero.
void order_descending(Eigen::VectorXd& values, Eigen::MatrixXd& vectors) {
  std::vector<Eigen::Index> idx(static_cast<size_t>(values.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return values[a] > values[b]; });
  Eigen::VectorXd v(values.size());
  Eigen::MatrixXd u(vectors.rows(), vectors.cols());
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    v[k] = std::max(values[idx[static_cast<size_t>(k)]], 0.0);
    u.col(k) = vectors.col(idx[static_cast<size_t>(k)]);
  }
  values.swap(v);
  vectors.swap(u);
}

ScaledSpectrum dense_top(const CovarianceInput& cov, const Eigen::VectorXd& phi, int q) {
  const Eigen::MatrixXd s_star = scale_symmetric(cov.covariance(), phi.cwiseSqrt());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s_star);
  if (eig.info() != Eigen::Success) throw NumericalError("dense eigensolver failed");

  Eigen::VectorXd values = eig.eigenvalues();
  Eigen::MatrixXd vectors = eig.eigenvectors();
  order_descending(values, vectors);

  ScaledSpectrum out;
  out.eigenvalues = values.head(q);
  out.vectors = vectors.leftCols(q);
  out.strategy = SpectrumStrategy::DenseFull;
  canonicalize_sign(out.vectors);
  return out;
}

ScaledSpectrum gram_top(const CovarianceInput& cov, const Eigen::VectorXd& phi, int q) {
  const Eigen::MatrixXd& x = cov.data();
  const Eigen::Index n = x.rows();
  const double inv_n = 1.0 / static_cast<double>(n);

  const Eigen::VectorXd d = phi.cwiseSqrt();
  Eigen::MatrixXd b = x * d.asDiagonal();  // n x p
  Eigen::MatrixXd gram(n, n);
  gram.setZero();
  gram.selfadjointView<Eigen::Lower>().rankUpdate(b, inv_n);
  gram = gram.selfadjointView<Eigen::Lower>();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw NumericalError("gram eigensolver failed");

  Eigen::VectorXd values = eig.eigenvalues();
  Eigen::MatrixXd w = eig.eigenvectors();
  order_descending(values, w);

  const Eigen::Index q_avail = std::min<Eigen::Index>(q, n);
  // Eigenvalues at roundoff scale cannot be mapped back to stable
  // p-vectors; they belong to the (implicit) zero tail.
  const double floor = 1e-13 * std::max(values.size() > 0 ? values[0] : 0.0, 1.0);
  Eigen::Index keep = 0;
  while (keep < q_avail && values[keep] > floor) ++keep;

  ScaledSpectrum out;
  out.eigenvalues = values.head(keep);
  out.vectors.resize(cov.p(), keep);
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  for (Eigen::Index j = 0; j < keep; ++j) {
    const double sigma = std::sqrt(values[j]);
    out.vectors.col(j).noalias() = b.transpose() * w.col(j) / (sqrt_n * sigma);
    out.vectors.col(j).normalize();
  }
  out.strategy = SpectrumStrategy::GramThin;
  canonicalize_sign(out.vectors);
  return out;
}

ScaledSpectrum iterative_top(const CovarianceInput& cov, const Eigen::VectorXd& phi,
                             int q) {
  const Eigen::Index p = cov.p();
  const Eigen::VectorXd d = phi.cwiseSqrt();

  const auto apply = [&](const Eigen::MatrixXd& v) -> Eigen::MatrixXd {
    Eigen::MatrixXd scaled = d.asDiagonal() * v;
    Eigen::MatrixXd out = cov.apply_covariance(scaled);
    return d.asDiagonal() * out;
  };

  Rng rng(kIterSeed);
  Eigen::MatrixXd v(p, q);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < q; ++j) v(i, j) = rng.normal();
  }
  v = Eigen::HouseholderQR<Eigen::MatrixXd>(v).householderQ() *
      Eigen::MatrixXd::Identity(p, q);

  int matvecs = 0;
  while (matvecs < kMaxMatvecs) {
    const Eigen::MatrixXd w = apply(v);
    matvecs += q;

    // Rayleigh-Ritz on the current subspace; the Ritz residuals
    // W z - (V z) lambda are available from the same products.
    Eigen::MatrixXd small = v.transpose() * w;
    small = 0.5 * (small + small.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ritz(small);
    const Eigen::VectorXd values = ritz.eigenvalues().reverse();
    const Eigen::MatrixXd z = ritz.eigenvectors().rowwise().reverse();
    const Eigen::MatrixXd ritz_vectors = v * z;
    Eigen::MatrixXd residual = w * z - ritz_vectors * values.asDiagonal();

    const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
    if (residual.colwise().norm().maxCoeff() <= kIterTol * scale) {
      ScaledSpectrum out;
      out.eigenvalues = values.cwiseMax(0.0);
      out.vectors = ritz_vectors;
      out.strategy = SpectrumStrategy::IterativeLowRank;
      canonicalize_sign(out.vectors);
      return out;
    }
    v = Eigen::HouseholderQR<Eigen::MatrixXd>(w).householderQ() *
        Eigen::MatrixXd::Identity(p, q);
  }
  throw NumericalError("subspace iteration did not converge within " +
                       std::to_string(kMaxMatvecs) + " matrix products");
}

}  // namespace

Eigen::MatrixXd scale_symmetric(const Eigen::MatrixXd& s, const Eigen::VectorXd& d) {
  Eigen::MatrixXd out(s.rows(), s.cols());
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      out(i, j) = (d[i] * s(i, j)) * d[j];
    }
  }
  return out;
}

void canonicalize_sign(Eigen::MatrixXd& vectors) {
  for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      const double a = std::abs(vectors(i, j));
      if (a > best) {
        best = a;
        arg = i;
      }
    }
    if (vectors(arg, j) < 0.0) vectors.col(j) = -vectors.col(j);
  }
}

ScaledSpectrum eig_top(const CovarianceInput& cov, const Eigen::VectorXd& phi, int r,
                       SpectrumStrategy strategy) {
  check_inputs(cov, phi, r);
  const Eigen::Index p = cov.p();
  const int q = static_cast<int>(std::min<Eigen::Index>(r + 1, p));

  if (strategy == SpectrumStrategy::Auto) {
    const Eigen::Index n = cov.has_data() ? cov.data().rows() : 0;
    if (cov.has_data() && n < p && n <= kGramLimit) {
      strategy = SpectrumStrategy::GramThin;
    } else if (cov.has_covariance() && p <= kDenseLimit) {
      strategy = SpectrumStrategy::DenseFull;
    } else {
      strategy = SpectrumStrategy::IterativeLowRank;
    }
  }

  switch (strategy) {
    case SpectrumStrategy::DenseFull:
      return dense_top(cov, phi, q);
    case SpectrumStrategy::GramThin:
      return gram_top(cov, phi, q);
    case SpectrumStrategy::IterativeLowRank:
      return iterative_top(cov, phi, q);
    case SpectrumStrategy::Auto:
      break;
  }
  throw DomainError("unreachable spectrum strategy");
}

Eigen::VectorXd full_spectrum(const CovarianceInput& cov, const Eigen::VectorXd& phi) {
  if (phi.size() != cov.p()) throw DomainError("phi has wrong length");
  const Eigen::MatrixXd s_star = scale_symmetric(cov.covariance(), phi.cwiseSqrt());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s_star, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericalError("dense eigensolver failed");
  return eig.eigenvalues().reverse();
}

double spectrum_residual(const CovarianceInput& cov, const Eigen::VectorXd& phi,
                         const ScaledSpectrum& spectrum) {
  if (spectrum.vectors.cols() == 0) return 0.0;
  const Eigen::VectorXd d = phi.cwiseSqrt();
  Eigen::MatrixXd scaled = d.asDiagonal() * spectrum.vectors;
  Eigen::MatrixXd s_u = d.asDiagonal() * cov.apply_covariance(scaled).eval();
  s_u.noalias() -= spectrum.vectors * spectrum.eigenvalues.asDiagonal();
  return s_u.colwise().norm().maxCoeff();
}

}  // namespace factmle
