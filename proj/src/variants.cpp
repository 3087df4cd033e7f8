#include "factmle/variants.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "factmle/errors.hpp"

namespace factmle {

namespace {

constexpr double kStallRel = 1e-8;

double ridge_component(double denom, double gamma) {
  // argmin of -log(phi) + denom*phi + gamma*phi^2 over phi > 0.
  return (std::sqrt(denom * denom + 8.0 * gamma) - denom) / (4.0 * gamma);
}

}  // namespace

UniquenessPrecision ridge_step(const CovarianceInput& cov, const UniquenessPrecision& u,
                               const SubgradientWorkspace& grad, double gamma) {
  if (!(gamma > 0.0)) throw DomainError("gamma must be positive");
  UniquenessPrecision next;
  next.eps = 0.0;  // feasible set is phi > 0
  next.phi.resize(u.phi.size());
  const Eigen::VectorXd& diag = cov.diagonal();
  for (Eigen::Index i = 0; i < u.phi.size(); ++i) {
    next.phi[i] = ridge_component(diag[i] - grad.grad[i], gamma);
  }
  return next;
}

std::pair<UniquenessPrecision, SolverTrace> solve_ridge(
    const CovarianceInput& cov, const RidgeConfig& config,
    const IterationObserver& observer) {
  if (config.r < 1 || config.r >= cov.p()) {
    throw DomainError("rank must satisfy 1 <= r < p");
  }
  if (!(config.gamma > 0.0)) throw DomainError("gamma must be positive");
  if (!(config.tol > 0.0)) throw DomainError("tolerance must be positive");
  if (config.max_iters < 1) throw DomainError("max_iters must be at least 1");

  // Start inside the region psi >= sqrt(2*gamma) that every update maps
  // into, so the bound holds for all iterates.
  const double phi_cap = 1.0 / std::sqrt(2.0 * config.gamma);
  SolverConfig init_cfg;
  init_cfg.r = config.r;
  init_cfg.eps = 0.0;
  init_cfg.init = config.init;
  init_cfg.seed = config.seed;
  init_cfg.warm_start = config.warm_start;
  UniquenessPrecision u{initial_phi(cov, init_cfg), 0.0};
  u.phi = u.phi.cwiseMin(phi_cap);

  SolverTrace trace;
  trace.rho = 2.0 * config.gamma;

  const auto t0 = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  const auto penalized = [&](const UniquenessPrecision& point,
                             const ScaledSpectrum& spectrum) {
    return objective_with_spectrum(cov, point, config.r, spectrum).f +
           config.gamma * point.phi.squaredNorm();
  };

  ScaledSpectrum spectrum = eig_top(cov, u.phi, config.r);
  double f_prev = penalized(u, spectrum);
  trace.objectives.push_back(f_prev);
  if (observer) observer(0, u.phi);

  trace.termination = Termination::MaxIters;
  for (int k = 1; k <= config.max_iters; ++k) {
    const SubgradientWorkspace grad = subgradient_f2(cov, u, config.r, spectrum);
    UniquenessPrecision next = ridge_step(cov, u, grad, config.gamma);

    const double step_norm = (next.phi - u.phi).norm();
    spectrum = eig_top(cov, next.phi, config.r);
    const double f_next = penalized(next, spectrum);

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
    const bool stop =
        config.stop_rule == StopRule::ObjectiveRelative
            ? f_prev - f_next < config.tol * std::max(1.0, std::abs(f_next))
            : step_norm < config.tol * phi_norm;
    if (stop) {
      trace.termination = Termination::Converged;
      break;
    }
    f_prev = f_next;
  }
  return {std::move(u), std::move(trace)};
}

ContinuationResult solve_continuation(const CovarianceInput& cov, SolverConfig config,
                                      const ContinuationConfig& cc) {
  if (cc.eps_schedule.empty()) throw DomainError("epsilon schedule is empty");
  for (size_t t = 0; t + 1 < cc.eps_schedule.size(); ++t) {
    if (!(cc.eps_schedule[t] > cc.eps_schedule[t + 1])) {
      throw DomainError("epsilon schedule must be strictly decreasing");
    }
  }
  if (!(cc.eps_schedule.back() > 0.0)) throw DomainError("epsilon must stay positive");

  const Eigen::Index p = cov.p();
  const double eps_final = cc.eps_schedule.back();
  const double phi_pin = 1.0 / eps_final;

  ContinuationResult result;
  std::vector<bool> frozen(static_cast<size_t>(p), false);

  config.eps = cc.eps_schedule.front();
  Eigen::VectorXd phi = initial_phi(cov, config);

  for (size_t t = 0; t < cc.eps_schedule.size(); ++t) {
    const double eps_t = cc.eps_schedule[t];
    SolverConfig step_cfg = config;
    step_cfg.eps = eps_t;
    // Clip unfrozen coordinates into the current box; frozen ones stay
    // at the terminal bound.
    for (Eigen::Index i = 0; i < p; ++i) {
      if (!frozen[static_cast<size_t>(i)]) phi[i] = std::min(phi[i], 1.0 / eps_t);
    }

    auto [sol, trace] = solve_restricted(cov, step_cfg, frozen, phi);
    phi = sol.phi;

    result.step_final_objectives.push_back(trace.objectives.back());
    result.trace.objectives.insert(result.trace.objectives.end(),
                                   trace.objectives.begin(), trace.objectives.end());
    result.trace.step_norms.insert(result.trace.step_norms.end(),
                                   trace.step_norms.begin(), trace.step_norms.end());
    result.trace.cum_seconds.insert(result.trace.cum_seconds.end(),
                                    trace.cum_seconds.begin(), trace.cum_seconds.end());
    result.trace.iterations += trace.iterations;
    result.trace.termination = trace.termination;
    result.trace.rho = eps_t * eps_t;

    // Pin boundary coordinates between schedule steps (never after the
    // final one, where the set is only reported).
    if (t + 1 < cc.eps_schedule.size()) {
      for (Eigen::Index i = 0; i < p; ++i) {
        if (frozen[static_cast<size_t>(i)]) continue;
        const double psi = 1.0 / phi[i];
        if (psi <= cc.pin_threshold * eps_t) {
          frozen[static_cast<size_t>(i)] = true;
          phi[i] = phi_pin;
        }
      }
    }
  }

  for (Eigen::Index i = 0; i < p; ++i) {
    const bool at_bound =
        frozen[static_cast<size_t>(i)] || 1.0 / phi[i] <= cc.pin_threshold * eps_final;
    if (at_bound) result.pinned.push_back(static_cast<int>(i));
  }
  result.phi = UniquenessPrecision{std::move(phi), eps_final};
  return result;
}

std::pair<UniquenessPrecision, SolverTrace> solve_ridge_continuation(
    const CovarianceInput& cov, RidgeConfig config, double gamma_end) {
  if (!(gamma_end > 0.0)) throw DomainError("gamma_end must be positive");
  if (!(config.gamma > 0.0)) throw DomainError("gamma must be positive");

  std::vector<double> schedule;
  for (double g = config.gamma; g > gamma_end * (1.0 + 1e-12); g /= 10.0) {
    schedule.push_back(g);
  }
  schedule.push_back(gamma_end);

  UniquenessPrecision phi;
  SolverTrace trace;
  for (size_t t = 0; t < schedule.size(); ++t) {
    RidgeConfig step_cfg = config;
    step_cfg.gamma = schedule[t];
    if (t > 0) {
      step_cfg.init = InitKind::WarmStart;
      step_cfg.warm_start = phi.phi;
    }
    auto [sol, step_trace] = solve_ridge(cov, step_cfg);
    phi = std::move(sol);
    trace.objectives.insert(trace.objectives.end(), step_trace.objectives.begin(),
                            step_trace.objectives.end());
    trace.step_norms.insert(trace.step_norms.end(), step_trace.step_norms.begin(),
                            step_trace.step_norms.end());
    trace.cum_seconds.insert(trace.cum_seconds.end(), step_trace.cum_seconds.begin(),
                             step_trace.cum_seconds.end());
    trace.iterations += step_trace.iterations;
    trace.termination = step_trace.termination;
    trace.rho = 2.0 * schedule[t];
  }
  return {std::move(phi), std::move(trace)};
}

std::vector<PathEntry> solve_path(const CovarianceInput& cov,
                                  const std::vector<int>& ranks, SolverConfig config) {
  if (ranks.empty()) throw DomainError("rank list is empty");
  for (size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i] < 1 || ranks[i] >= cov.p()) {
      throw DomainError("ranks must satisfy 1 <= r < p");
    }
    if (i > 0 && ranks[i] <= ranks[i - 1]) {
      throw DomainError("ranks must be strictly increasing");
    }
  }

  std::vector<PathEntry> path;
  path.reserve(ranks.size());
  for (size_t i = 0; i < ranks.size(); ++i) {
    SolverConfig cfg = config;
    cfg.r = ranks[i];
    if (i > 0) {
      cfg.init = InitKind::WarmStart;
      cfg.warm_start = path.back().phi.phi;
    }
    auto [phi, trace] = solve(cov, cfg);
    PathEntry entry;
    entry.rank = ranks[i];
    entry.model = recover_loadings(cov, phi, ranks[i]);
    entry.phi = std::move(phi);
    entry.trace = std::move(trace);
    path.push_back(std::move(entry));
  }
  return path;
}

}  // namespace factmle
