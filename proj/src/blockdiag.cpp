#include "factmle/blockdiag.hpp"

#include <chrono>
#include <cmath>

#include "factmle/errors.hpp"
#include "factmle/spectra.hpp"

namespace factmle {

namespace {

constexpr double kEigFloor = 1e-10;
constexpr double kPdGuard = -1e-6;
constexpr double kStallRel = 1e-8;

// Symmetric root (power = 0.5) or inverse root (power = -0.5) of an SPD
// block.
Eigen::MatrixXd spd_power(const Eigen::MatrixXd& block, double power) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(block);
  if (eig.info() != Eigen::Success) throw NumericalError("block eigensolver failed");
  Eigen::VectorXd values = eig.eigenvalues();
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (!(values[i] > 0.0)) throw DomainError("precision block is not positive definite");
    values[i] = std::pow(values[i], power);
  }
  return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

struct ScaledProblem {
  ScaledSpectrum spectrum;
  std::vector<Eigen::MatrixXd> sqrt_blocks;      // Phi^{1/2}
  std::vector<Eigen::MatrixXd> inv_sqrt_blocks;  // Phi^{-1/2}
};

// Spectrum of Phi^{1/2} S Phi^{1/2} for block-diagonal Phi. All-singleton
// structures share the diagonal solver's scaling kernel so the two paths
// stay bit-identical; general structures apply the blockwise roots.
ScaledProblem scaled_problem(const CovarianceInput& cov, const BlockStructure& structure,
                             const BlockPrecision& phi, int r) {
  const Eigen::Index p = cov.p();
  structure.validate(p);
  if (phi.blocks.size() != structure.sizes.size()) {
    throw DomainError("block count mismatch");
  }

  ScaledProblem out;
  if (structure.all_singletons()) {
    out.spectrum = eig_top(cov, phi.diagonal(), r, SpectrumStrategy::DenseFull);
    return out;
  }

  const auto offs = structure.offsets();
  const Eigen::Index m = static_cast<Eigen::Index>(structure.sizes.size());
  out.sqrt_blocks.resize(static_cast<size_t>(m));
  out.inv_sqrt_blocks.resize(static_cast<size_t>(m));
  for (Eigen::Index a = 0; a < m; ++a) {
    const Eigen::MatrixXd& block = phi.blocks[static_cast<size_t>(a)];
    if (block.rows() != structure.sizes[static_cast<size_t>(a)] ||
        block.cols() != structure.sizes[static_cast<size_t>(a)]) {
      throw DomainError("precision block has wrong shape");
    }
    out.sqrt_blocks[static_cast<size_t>(a)] = spd_power(block, 0.5);
    out.inv_sqrt_blocks[static_cast<size_t>(a)] = spd_power(block, -0.5);
  }

  Eigen::MatrixXd s_star = cov.covariance();
  for (Eigen::Index a = 0; a < m; ++a) {
    const auto& root = out.sqrt_blocks[static_cast<size_t>(a)];
    const Eigen::Index o = offs[static_cast<size_t>(a)];
    const Eigen::Index w = structure.sizes[static_cast<size_t>(a)];
    s_star.middleRows(o, w) = root * s_star.middleRows(o, w);
  }
  for (Eigen::Index a = 0; a < m; ++a) {
    const auto& root = out.sqrt_blocks[static_cast<size_t>(a)];
    const Eigen::Index o = offs[static_cast<size_t>(a)];
    const Eigen::Index w = structure.sizes[static_cast<size_t>(a)];
    s_star.middleCols(o, w) = s_star.middleCols(o, w) * root;
  }
  s_star = 0.5 * (s_star + s_star.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s_star);
  if (eig.info() != Eigen::Success) throw NumericalError("dense eigensolver failed");
  Eigen::VectorXd values = eig.eigenvalues().reverse();
  Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();

  const int q = static_cast<int>(std::min<Eigen::Index>(r + 1, p));
  out.spectrum.eigenvalues = values.head(q).cwiseMax(0.0);
  out.spectrum.vectors = vectors.leftCols(q);
  out.spectrum.strategy = SpectrumStrategy::DenseFull;
  canonicalize_sign(out.spectrum.vectors);
  return out;
}

// Applies a blockwise matrix (rows) to a thin p x q factor.
Eigen::MatrixXd apply_blockwise(const std::vector<Eigen::MatrixXd>& blocks,
                                const BlockStructure& structure,
                                const Eigen::MatrixXd& v) {
  const auto offs = structure.offsets();
  Eigen::MatrixXd out(v.rows(), v.cols());
  for (size_t a = 0; a < blocks.size(); ++a) {
    out.middleRows(offs[a], structure.sizes[a]) =
        blocks[a] * v.middleRows(offs[a], structure.sizes[a]);
  }
  return out;
}

}  // namespace

Eigen::Index BlockStructure::total() const {
  Eigen::Index t = 0;
  for (int s : sizes) t += s;
  return t;
}

std::vector<Eigen::Index> BlockStructure::offsets() const {
  std::vector<Eigen::Index> offs(sizes.size());
  Eigen::Index o = 0;
  for (size_t i = 0; i < sizes.size(); ++i) {
    offs[i] = o;
    o += sizes[i];
  }
  return offs;
}

void BlockStructure::validate(Eigen::Index p) const {
  if (sizes.empty()) throw DomainError("block structure is empty");
  for (int s : sizes) {
    if (s < 1) throw DomainError("block sizes must be positive");
  }
  if (total() != p) {
    throw DomainError("block sizes sum to " + std::to_string(total()) +
                      ", expected " + std::to_string(p));
  }
}

bool BlockStructure::all_singletons() const {
  for (int s : sizes) {
    if (s != 1) return false;
  }
  return true;
}

Eigen::VectorXd BlockPrecision::diagonal() const {
  Eigen::Index p = 0;
  for (const auto& b : blocks) p += b.rows();
  Eigen::VectorXd d(p);
  Eigen::Index o = 0;
  for (const auto& b : blocks) {
    d.segment(o, b.rows()) = b.diagonal();
    o += b.rows();
  }
  return d;
}

BlockPrecision BlockPrecision::identity(const BlockStructure& structure) {
  BlockPrecision out;
  for (int s : structure.sizes) out.blocks.push_back(Eigen::MatrixXd::Identity(s, s));
  return out;
}

BlockPrecision BlockPrecision::from_diagonal(const BlockStructure& structure,
                                             const Eigen::VectorXd& phi) {
  structure.validate(phi.size());
  BlockPrecision out;
  const auto offs = structure.offsets();
  for (size_t a = 0; a < structure.sizes.size(); ++a) {
    out.blocks.push_back(
        phi.segment(offs[a], structure.sizes[a]).asDiagonal().toDenseMatrix());
  }
  return out;
}

BlockObjective block_objective(const CovarianceInput& cov,
                               const BlockStructure& structure,
                               const BlockPrecision& phi, int r) {
  const ScaledProblem sp = scaled_problem(cov, structure, phi, r);
  const auto offs = structure.offsets();

  BlockObjective out;
  for (size_t a = 0; a < phi.blocks.size(); ++a) {
    const Eigen::MatrixXd& block = phi.blocks[a];
    Eigen::LLT<Eigen::MatrixXd> llt(block);
    if (llt.info() != Eigen::Success) {
      throw DomainError("precision block is not positive definite");
    }
    out.f1 -= 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    out.f1 += (cov.covariance()
                   .block(offs[a], offs[a], structure.sizes[a], structure.sizes[a])
                   .array() *
               block.array())
                  .sum();
  }

  double h = 0.0;
  const Eigen::Index top = std::min<Eigen::Index>(r, sp.spectrum.eigenvalues.size());
  for (Eigen::Index i = 0; i < top; ++i) {
    h += spectral_term(sp.spectrum.eigenvalues[i]);
  }
  out.f2 = -h;
  out.h = out.f1 - out.f2;
  out.lambda_star = sp.spectrum.eigenvalues;
  return out;
}

std::vector<Eigen::MatrixXd> block_subgradient(const CovarianceInput& cov,
                                               const BlockStructure& structure,
                                               const BlockPrecision& phi, int r) {
  const Eigen::Index p = cov.p();
  structure.validate(p);
  const auto offs = structure.offsets();

  if (structure.all_singletons()) {
    // Shares the diagonal solver's kernels so singleton structures
    // reduce to it exactly.
    UniquenessPrecision u{phi.diagonal(), 0.0};
    const ScaledSpectrum spectrum = eig_top(cov, u.phi, r, SpectrumStrategy::DenseFull);
    const SubgradientWorkspace grad = subgradient_f2(cov, u, r, spectrum);
    std::vector<Eigen::MatrixXd> out;
    out.reserve(static_cast<size_t>(p));
    for (Eigen::Index i = 0; i < p; ++i) {
      out.push_back(Eigen::MatrixXd::Constant(1, 1, grad.grad[i]));
    }
    return out;
  }

  const ScaledProblem sp = scaled_problem(cov, structure, phi, r);
  const Eigen::VectorXd& lambda = sp.spectrum.eigenvalues;
  const Eigen::Index top = std::min<Eigen::Index>(r, lambda.size());

  Eigen::Index active = 0;
  for (Eigen::Index i = 0; i < top; ++i) {
    if (spectral_weight(lambda[i]) > 0.0) ++active;
  }

  std::vector<Eigen::MatrixXd> out;
  out.reserve(structure.sizes.size());
  if (active == 0) {
    for (int s : structure.sizes) out.push_back(Eigen::MatrixXd::Zero(s, s));
    return out;
  }

  Eigen::MatrixXd u_act(p, active);
  Eigen::VectorXd delta(active);
  {
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < top; ++i) {
      const double w = spectral_weight(lambda[i]);
      if (w > 0.0) {
        u_act.col(k) = sp.spectrum.vectors.col(i);
        delta[k] = w;
        ++k;
      }
    }
  }

  // t1 = Phi^{-1/2} U D1 (p x q), t2 = U^T Phi^{1/2} S (q x p); the
  // required diagonal blocks come from products of matching slices.
  Eigen::MatrixXd t1 = apply_blockwise(sp.inv_sqrt_blocks, structure, u_act);
  t1 = t1 * delta.asDiagonal();
  const Eigen::MatrixXd scaled = apply_blockwise(sp.sqrt_blocks, structure, u_act);
  const Eigen::MatrixXd t2 = scaled.transpose() * cov.covariance();

  for (size_t a = 0; a < structure.sizes.size(); ++a) {
    Eigen::MatrixXd block = t1.middleRows(offs[a], structure.sizes[a]) *
                            t2.middleCols(offs[a], structure.sizes[a]);
    out.push_back(0.5 * (block + block.transpose()));
  }
  return out;
}

BlockPrecision block_dc_step(const CovarianceInput& cov, const BlockStructure& structure,
                             const BlockPrecision& phi,
                             const std::vector<Eigen::MatrixXd>& grad_blocks) {
  structure.validate(cov.p());
  if (grad_blocks.size() != structure.sizes.size()) {
    throw DomainError("subgradient block count mismatch");
  }
  const auto offs = structure.offsets();

  BlockPrecision next;
  next.blocks.reserve(structure.sizes.size());
  for (size_t a = 0; a < structure.sizes.size(); ++a) {
    const Eigen::Index w = structure.sizes[a];
    if (w == 1) {
      // Same scalar path as the unclamped diagonal update.
      const double denom = cov.diagonal()[offs[a]] - grad_blocks[a](0, 0);
      if (denom < kPdGuard) {
        throw NumericalError("update denominator " + std::to_string(denom) +
                             " is negative beyond tolerance");
      }
      next.blocks.push_back(
          Eigen::MatrixXd::Constant(1, 1, 1.0 / std::max(denom, kEigFloor)));
      continue;
    }

    Eigen::MatrixXd target =
        cov.covariance().block(offs[a], offs[a], w, w) - grad_blocks[a];
    target = 0.5 * (target + target.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(target);
    if (eig.info() != Eigen::Success) throw NumericalError("block eigensolver failed");
    Eigen::VectorXd values = eig.eigenvalues();
    const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
    if (values.minCoeff() < kPdGuard * scale) {
      throw NumericalError("block update target is not positive definite");
    }
    values = values.cwiseMax(kEigFloor);
    next.blocks.push_back(eig.eigenvectors() * values.cwiseInverse().asDiagonal() *
                          eig.eigenvectors().transpose());
  }
  return next;
}

std::pair<BlockPrecision, SolverTrace> solve_block(const CovarianceInput& cov,
                                                   const BlockStructure& structure,
                                                   const BlockSolverConfig& config,
                                                   const IterationObserver& observer) {
  const Eigen::Index p = cov.p();
  structure.validate(p);
  if (config.r < 1 || config.r >= p) throw DomainError("rank must satisfy 1 <= r < p");
  if (!(config.tol > 0.0)) throw DomainError("tolerance must be positive");
  if (config.max_iters < 1) throw DomainError("max_iters must be at least 1");
  if (!cov.has_covariance()) {
    throw DomainError("block solver requires a materialized covariance");
  }

  // Start at the blockwise analogue of the diagonal solver's default.
  Eigen::VectorXd phi0(p);
  for (Eigen::Index i = 0; i < p; ++i) phi0[i] = 1.0 / cov.diagonal()[i];
  BlockPrecision u = BlockPrecision::from_diagonal(structure, phi0);

  SolverTrace trace;
  trace.rho = 0.0;

  const auto t0 = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  double h_prev = block_objective(cov, structure, u, config.r).h;
  trace.objectives.push_back(h_prev);
  if (observer) observer(0, u.diagonal());

  trace.termination = Termination::MaxIters;
  for (int k = 1; k <= config.max_iters; ++k) {
    const auto grad_blocks = block_subgradient(cov, structure, u, config.r);
    BlockPrecision next = block_dc_step(cov, structure, u, grad_blocks);

    double step_sq = 0.0;
    for (size_t a = 0; a < next.blocks.size(); ++a) {
      step_sq += (next.blocks[a] - u.blocks[a]).squaredNorm();
    }
    const double h_next = block_objective(cov, structure, next, config.r).h;

    trace.objectives.push_back(h_next);
    trace.step_norms.push_back(std::sqrt(step_sq));
    trace.cum_seconds.push_back(elapsed());
    trace.iterations = k;
    u = std::move(next);
    if (observer) observer(k, u.diagonal());

    if (h_next > h_prev + kStallRel * std::max(1.0, std::abs(h_prev))) {
      trace.termination = Termination::Stalled;
      break;
    }
    if (h_prev - h_next < config.tol * std::max(1.0, std::abs(h_next))) {
      trace.termination = Termination::Converged;
      break;
    }
    h_prev = h_next;
  }
  return {std::move(u), std::move(trace)};
}

BlockModel recover_block_model(const CovarianceInput& cov,
                               const BlockStructure& structure,
                               const BlockPrecision& phi, int r) {
  const Eigen::Index p = cov.p();
  const ScaledProblem sp = scaled_problem(cov, structure, phi, r);

  BlockModel model;
  for (const auto& block : phi.blocks) {
    model.psi_blocks.push_back(block.inverse());
  }
  model.loadings = Eigen::MatrixXd::Zero(p, r);
  const Eigen::Index top = std::min<Eigen::Index>(r, sp.spectrum.eigenvalues.size());
  for (Eigen::Index i = 0; i < top; ++i) {
    const double lambda = sp.spectrum.eigenvalues[i];
    if (lambda > 1.0 + 1e-12) {
      Eigen::VectorXd z = sp.spectrum.vectors.col(i) * std::sqrt(lambda - 1.0);
      if (structure.all_singletons()) {
        const Eigen::VectorXd psi_sqrt = phi.diagonal().cwiseSqrt().cwiseInverse();
        model.loadings.col(i) = psi_sqrt.asDiagonal() * z;
      } else {
        model.loadings.col(i) = apply_blockwise(sp.inv_sqrt_blocks, structure, z);
      }
      ++model.rank_used;
    }
  }

  // log det Sigma + tr(Sigma^{-1} S) through the low-rank identities,
  // with Phi playing the role of Psi^{-1}.
  double logdet = 0.0;
  for (const auto& block : phi.blocks) {
    Eigen::LLT<Eigen::MatrixXd> llt(block);
    logdet -= 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }
  const Eigen::Index rr = model.loadings.cols();
  const Eigen::MatrixXd a =
      apply_blockwise(phi.blocks, structure, model.loadings);  // Psi^{-1} L
  Eigen::MatrixXd m = model.loadings.transpose() * a;
  m = 0.5 * (m + m.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> llt(Eigen::MatrixXd::Identity(rr, rr) + m);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("capacitance matrix is not positive definite");
  }
  logdet += 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();

  const auto offs = structure.offsets();
  double trace_term = 0.0;
  for (size_t idx = 0; idx < phi.blocks.size(); ++idx) {
    trace_term += (cov.covariance()
                       .block(offs[idx], offs[idx], structure.sizes[idx],
                              structure.sizes[idx])
                       .array() *
                   phi.blocks[idx].array())
                      .sum();
  }
  const Eigen::MatrixXd b = a.transpose() * cov.apply_covariance(a);
  trace_term -= llt.solve(b).trace();

  model.neg_loglik = logdet + trace_term;
  return model;
}

}  // namespace factmle
