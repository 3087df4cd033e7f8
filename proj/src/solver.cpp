#include "factmle/solver.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "factmle/errors.hpp"
#include "factmle/rng.hpp"

namespace factmle {

namespace {

constexpr double kDenominatorGuard = -1e-6;
constexpr double kUnclampedFloor = 1e-10;
constexpr double kStallRel = 1e-8;
constexpr double kCertSlackRel = 1e-9;

double update_component(double denom, double eps) {
  if (denom < kDenominatorGuard) {
    throw NumericalError("update denominator " + std::to_string(denom) +
                         " is negative beyond tolerance");
  }
  if (eps > 0.0) {
    // At or past the box bound the component is set to 1/eps exactly.
    return denom <= eps ? 1.0 / eps : 1.0 / denom;
  }
  return 1.0 / std::max(denom, kUnclampedFloor);
}

void validate_config(const SolverConfig& config, Eigen::Index p) {
  if (config.r < 1 || config.r >= p) throw DomainError("rank must satisfy 1 <= r < p");
  if (config.eps < 0.0) throw DomainError("eps must be nonnegative");
  if (!(config.tol > 0.0)) throw DomainError("tolerance must be positive");
  if (config.max_iters < 1) throw DomainError("max_iters must be at least 1");
  if (config.init == InitKind::WarmStart && config.warm_start.size() != p) {
    throw DomainError("warm start vector has wrong length");
  }
}

bool stop_satisfied(const SolverConfig& config, double f_prev, double f_next,
                    double step_norm, double phi_norm) {
  if (config.stop_rule == StopRule::ObjectiveRelative) {
    // Relative decrease rule, with max(1, |f|) as normalizer so the
    // test stays meaningful when f crosses zero.
    return f_prev - f_next < config.tol * std::max(1.0, std::abs(f_next));
  }
  return step_norm < config.tol * phi_norm;
}

}  // namespace

Eigen::VectorXd initial_phi(const CovarianceInput& cov, const SolverConfig& config) {
  const Eigen::Index p = cov.p();
  const double hi = config.eps > 0.0 ? 1.0 / config.eps
                                     : std::numeric_limits<double>::infinity();
  Eigen::VectorXd phi(p);
  switch (config.init) {
    case InitKind::FullDiagonal:
      for (Eigen::Index i = 0; i < p; ++i) {
        phi[i] = std::min(1.0 / cov.diagonal()[i], hi);
      }
      break;
    case InitKind::HalfDiagonal:
      for (Eigen::Index i = 0; i < p; ++i) {
        phi[i] = std::min(1.0 / (0.5 * cov.diagonal()[i]), hi);
      }
      break;
    case InitKind::UniformRandom: {
      Rng rng(config.seed);
      for (Eigen::Index i = 0; i < p; ++i) {
        phi[i] = std::min(rng.uniform_open(0.0, 1.0), hi);
      }
      break;
    }
    case InitKind::WarmStart:
      phi = config.warm_start;
      for (Eigen::Index i = 0; i < p; ++i) {
        if (!(phi[i] > 0.0)) throw DomainError("warm start must be positive");
        phi[i] = std::min(phi[i], hi);
      }
      break;
  }
  return phi;
}

UniquenessPrecision dc_step(const CovarianceInput& cov, const UniquenessPrecision& u,
                            const SubgradientWorkspace& grad) {
  UniquenessPrecision next;
  next.eps = u.eps;
  next.phi.resize(u.phi.size());
  const Eigen::VectorXd& diag = cov.diagonal();
  for (Eigen::Index i = 0; i < u.phi.size(); ++i) {
    next.phi[i] = update_component(diag[i] - grad.grad[i], u.eps);
  }
  return next;
}

std::pair<UniquenessPrecision, SolverTrace> solve_restricted(
    const CovarianceInput& cov, const SolverConfig& config,
    const std::vector<bool>& frozen, const Eigen::VectorXd& start,
    const IterationObserver& observer) {
  validate_config(config, cov.p());
  const Eigen::Index p = cov.p();
  if (!frozen.empty() && static_cast<Eigen::Index>(frozen.size()) != p) {
    throw DomainError("frozen mask has wrong length");
  }
  const auto is_frozen = [&](Eigen::Index i) {
    return !frozen.empty() && frozen[static_cast<size_t>(i)];
  };

  // Iterates carry eps = 0 internally: the box is enforced by the update
  // itself, and frozen coordinates may legitimately sit outside the
  // current box (the continuation pins them at the terminal bound).
  UniquenessPrecision u{start, 0.0};
  for (Eigen::Index i = 0; i < p; ++i) {
    if (!(u.phi[i] > 0.0)) throw DomainError("initial phi must be positive");
    if (config.eps > 0.0 && !is_frozen(i) && u.phi[i] > (1.0 / config.eps) * (1.0 + 1e-12)) {
      throw DomainError("initial phi is outside the feasible box");
    }
  }

  SolverTrace trace;
  trace.rho = config.eps * config.eps;
  trace.objectives.reserve(static_cast<size_t>(config.max_iters) + 1);

  const auto t0 = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  ScaledSpectrum spectrum = eig_top(cov, u.phi, config.r);
  double f_prev = objective_with_spectrum(cov, u, config.r, spectrum).f;
  trace.objectives.push_back(f_prev);
  if (observer) observer(0, u.phi);

  trace.termination = Termination::MaxIters;
  for (int k = 1; k <= config.max_iters; ++k) {
    const SubgradientWorkspace grad = subgradient_f2(cov, u, config.r, spectrum);

    UniquenessPrecision next = u;
    const Eigen::VectorXd& diag = cov.diagonal();
    for (Eigen::Index i = 0; i < p; ++i) {
      if (!is_frozen(i)) {
        next.phi[i] = update_component(diag[i] - grad.grad[i], config.eps);
      }
    }

    const double step_norm = (next.phi - u.phi).norm();
    spectrum = eig_top(cov, next.phi, config.r);
    const double f_next = objective_with_spectrum(cov, next, config.r, spectrum).f;

    trace.objectives.push_back(f_next);
    trace.step_norms.push_back(step_norm);
    trace.cum_seconds.push_back(elapsed());
    trace.iterations = k;
    if (observer) observer(k, next.phi);

    if (f_next > f_prev + kStallRel * std::max(1.0, std::abs(f_prev))) {
      u = std::move(next);
      trace.termination = Termination::Stalled;
      break;
    }
    const double phi_norm = u.phi.norm();
    u = std::move(next);
    if (stop_satisfied(config, f_prev, f_next, step_norm, phi_norm)) {
      trace.termination = Termination::Converged;
      break;
    }
    f_prev = f_next;
  }
  u.eps = config.eps;
  return {std::move(u), std::move(trace)};
}

std::pair<UniquenessPrecision, SolverTrace> solve(const CovarianceInput& cov,
                                                  const SolverConfig& config,
                                                  const IterationObserver& observer) {
  validate_config(config, cov.p());
  return solve_restricted(cov, config, {}, initial_phi(cov, config), observer);
}

DescentReport certify_descent(const SolverTrace& trace) {
  DescentReport report;
  const auto& f = trace.objectives;
  if (f.size() < 2) return report;

  report.worst_margin = std::numeric_limits<double>::infinity();
  double min_rate = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k + 1 < f.size(); ++k) {
    const double decrease = f[k] - f[k + 1];
    const double step = trace.step_norms[k];
    const double required = 0.5 * trace.rho * step * step;
    const double slack = kCertSlackRel * std::max(1.0, std::abs(f[k]));
    const double margin = decrease - required;
    if (margin < -slack) {
      throw CertificationFailure(
          static_cast<int>(k + 1),
          "descent certificate violated at iteration " + std::to_string(k + 1) +
              ": decrease " + std::to_string(decrease) + " < required " +
              std::to_string(required));
    }
    report.worst_margin = std::min(report.worst_margin, margin);
    min_rate = std::min(min_rate, trace.rho * step * step);
    ++report.steps_checked;
  }

  const double span = f.front() - f.back();
  const double k_total = static_cast<double>(f.size() - 1);
  report.rate_lhs = min_rate;
  report.rate_rhs = 2.0 / k_total * span;
  const double slack = kCertSlackRel * std::max(1.0, std::abs(f.front()));
  if (report.rate_lhs > report.rate_rhs + slack) {
    throw CertificationFailure(static_cast<int>(f.size() - 1),
                               "finite-time rate bound violated: min rho*||step||^2 = " +
                                   std::to_string(report.rate_lhs) + " > " +
                                   std::to_string(report.rate_rhs));
  }
  return report;
}

}  // namespace factmle
