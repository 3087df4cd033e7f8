// Acceptance suite: one pass/fail line per criterion, nonzero exit on
// any failure. Criteria may be selected by number on the command line
// (default: all).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdarg>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "factmle/blockdiag.hpp"
#include "factmle/data_io.hpp"
#include "factmle/em.hpp"
#include "factmle/errors.hpp"
#include "factmle/model.hpp"
#include "factmle/solver.hpp"
#include "factmle/variants.hpp"
#include "../unit/oracles.hpp"

using namespace factmle;

namespace {

std::string fmt(const char* spec, ...) {
  char buf[160];
  va_list args;
  va_start(args, spec);
  std::vsnprintf(buf, sizeof(buf), spec, args);
  va_end(args);
  return buf;
}

double now_seconds() {
  static const auto t0 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SyntheticDataset make_instance(Eigen::Index p, Eigen::Index n, Eigen::Index r0,
                               std::uint64_t seed, double mu = 1.0,
                               double uniq_mean = 1.0) {
  SyntheticSpec spec;
  spec.p = p;
  spec.n = n;
  spec.r0 = r0;
  spec.loading_mean = mu;
  spec.loading_var = 1.0;
  spec.uniqueness_mean = uniq_mean;
  spec.seed = seed;
  return generate_synthetic(spec);
}

struct SolvedRun {
  CovarianceInput cov;
  SolverConfig config;
  UniquenessPrecision phi;
  SolverTrace trace;
};

// The shared pool of solves used by criteria 1-4.
std::vector<SolvedRun>& certification_runs() {
  static std::vector<SolvedRun> runs = [] {
    std::vector<SolvedRun> out;
    const Eigen::Index ps[] = {5, 20, 50};
    const int rs[] = {1, 3, 5};
    std::uint64_t seed = 1000;
    while (out.size() < 100) {
      for (Eigen::Index p : ps) {
        for (int half : {0, 1}) {
          for (int r : rs) {
            if (r >= p) continue;
            if (out.size() >= 100) break;
            const Eigen::Index n = half ? p / 2 : 2 * p;
            SolvedRun run{make_instance(p, n, 2, seed++).cov, SolverConfig{}, {}, {}};
            run.config.r = r;
            run.config.eps = (seed % 2 == 0) ? 1e-4 : 1e-6;
            auto [phi, trace] = solve(run.cov, run.config);
            run.phi = std::move(phi);
            run.trace = std::move(trace);
            out.push_back(std::move(run));
          }
        }
      }
    }
    return out;
  }();
  return runs;
}

// Tightly converged, well-conditioned solves for the stationarity check
// (plentiful samples and a well-specified rank keep the optimum interior).
std::vector<SolvedRun>& stationary_runs() {
  static std::vector<SolvedRun> runs = [] {
    std::vector<SolvedRun> out;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const Eigen::Index p = 8 + 4 * (seed % 3);
      SolvedRun run{make_instance(p, 10 * p, 2, 2000 + seed, 2.0).cov, SolverConfig{},
                    {}, {}};
      run.config.r = 2;
      run.config.eps = 1e-7;
      run.config.stop_rule = StopRule::IterateRelative;
      run.config.tol = 1e-10;
      run.config.max_iters = 20000;
      auto [phi, trace] = solve(run.cov, run.config);
      run.phi = std::move(phi);
      run.trace = std::move(trace);
      out.push_back(std::move(run));
    }
    return out;
  }();
  return runs;
}

bool criterion_descent(std::string& detail) {
  const double start = now_seconds();
  int certified = 0;
  for (const auto& run : certification_runs()) {
    certify_descent(run.trace);  // throws on violation
    ++certified;
  }
  const double elapsed = now_seconds() - start;
  detail = fmt("%d runs certified in %.2f s", certified, elapsed);
  return certified == 100 && elapsed < 60.0;
}

bool criterion_stationarity(std::string& detail) {
  int tested = 0, passed = 0;
  for (const auto& run : stationary_runs()) {
    if (run.trace.termination != Termination::Converged) continue;
    const auto spectrum = eig_top(run.cov, run.phi.phi, run.config.r);
    const auto grad = subgradient_f2(run.cov, run.phi, run.config.r, spectrum);
    if (grad.tie_flag) continue;
    bool clamped = false;
    for (Eigen::Index i = 0; i < run.phi.phi.size(); ++i) {
      if (run.phi.phi[i] >= (1.0 / run.config.eps) * (1.0 - 1e-9)) clamped = true;
    }
    if (clamped) continue;

    ++tested;
    const Eigen::VectorXd g1 = grad_f1(run.cov, run.phi);
    const double err = (g1 - grad.grad).cwiseAbs().maxCoeff();
    if (err <= 1e-6 * std::max(1.0, g1.cwiseAbs().maxCoeff())) ++passed;
  }
  detail = std::to_string(passed) + "/" + std::to_string(tested) +
           " interior solutions stationary";
  return tested >= 20 && passed == tested;
}

bool criterion_bounds(std::string& detail) {
  int runs = 0;
  const auto check = [&](const SolvedRun& run) {
    const Eigen::VectorXd psi = run.phi.phi.cwiseInverse();
    for (Eigen::Index i = 0; i < psi.size(); ++i) {
      if (psi[i] < run.config.eps - 1e-12) return false;
      if (psi[i] > run.cov.diagonal()[i] + 1e-6) return false;
    }
    ++runs;
    return true;
  };
  for (const auto& run : certification_runs()) {
    if (!check(run)) {
      detail = "bound violated";
      return false;
    }
  }
  for (const auto& run : stationary_runs()) {
    if (!check(run)) {
      detail = "bound violated";
      return false;
    }
  }
  detail = "psi in [eps, diag(S)] on " + std::to_string(runs) + " runs";
  return true;
}

bool criterion_consistency(std::string& detail) {
  int runs = 0;
  double worst = 0.0;
  const auto check = [&](const SolvedRun& run) {
    const FactorModel model = recover_loadings(run.cov, run.phi, run.config.r);
    const double f = run.trace.objectives.back();
    const double dense =
        oracle::neg_loglik_dense(run.cov.covariance(), model.psi, model.loadings);
    const double tol = 1e-8 * std::max(1.0, std::abs(f));
    worst = std::max(worst, std::abs(dense - f));
    return std::abs(model.neg_loglik - f) <= tol && std::abs(dense - f) <= tol;
  };
  for (const auto& run : certification_runs()) {
    if (!check(run)) {
      detail = "likelihood/objective mismatch";
      return false;
    }
    ++runs;
  }
  for (const auto& run : stationary_runs()) {
    if (!check(run)) {
      detail = "likelihood/objective mismatch";
      return false;
    }
    ++runs;
  }
  detail = fmt("%d runs consistent, worst |L-f| = %.2e", runs, worst);
  return true;
}

bool criterion_subgradient(std::string& detail) {
  Rng rng(77);
  int tested = 0;
  double worst = 0.0;
  while (tested < 50) {
    const int p = 5 + static_cast<int>(tested % 4);
    const int r = 1 + tested % 3;
    const Eigen::MatrixXd s = oracle::random_spd(p, rng);
    const Eigen::VectorXd phi = oracle::random_loguniform(p, 0.2, 5.0, rng);
    const Eigen::VectorXd lambda = oracle::scaled_eigenvalues(s, phi);
    if (r < lambda.size() &&
        std::abs(lambda[r - 1] - lambda[r]) < 1e-3 * std::max(lambda[0], 1.0)) {
      continue;
    }
    if ((lambda.head(std::min<Eigen::Index>(r + 1, lambda.size())).array() - 1.0)
            .abs()
            .minCoeff() < 1e-3) {
      continue;
    }
    const CovarianceInput cov = CovarianceInput::from_covariance(s);
    const UniquenessPrecision u{phi, 1e-9};
    const auto grad = subgradient_f2(cov, u, r, eig_top(cov, phi, r));
    const Eigen::VectorXd fd = oracle::fd_subgradient(s, phi, r, 1e-6);
    const double err = (grad.grad - fd).cwiseAbs().maxCoeff() /
                       std::max(1.0, fd.cwiseAbs().maxCoeff());
    worst = std::max(worst, err);
    if (err > 1e-5) {
      detail = "finite-difference mismatch " + std::to_string(err);
      return false;
    }
    ++tested;
  }
  detail = fmt("50 differentiable points, worst relative error %.2e", worst);
  return true;
}

bool criterion_grid_oracle(std::string& detail) {
  Rng rng(55);
  double worst_gap = -1e300;
  for (int instance = 0; instance < 10; ++instance) {
    Eigen::Vector3d l0;
    for (int i = 0; i < 3; ++i) l0[i] = rng.normal(1.0, 0.5);
    Eigen::Vector3d psi0;
    for (int i = 0; i < 3; ++i) psi0[i] = 0.5 + rng.uniform();
    Eigen::Matrix3d s = l0 * l0.transpose();
    s.diagonal() += psi0;

    const double eps = 1e-3;
    SolverConfig config;
    config.r = 1;
    config.eps = eps;
    config.tol = 1e-12;
    const CovarianceInput cov = CovarianceInput::from_covariance(s);
    const auto [phi, trace] = solve(cov, config);

    const double f_grid = oracle::grid_min_p3(s, eps, 400, 2);
    worst_gap = std::max(worst_gap, trace.objectives.back() - f_grid);
    if (trace.objectives.back() > f_grid + 1e-4) {
      detail = "solver " + std::to_string(trace.objectives.back()) + " vs grid " +
               std::to_string(f_grid);
      return false;
    }
  }
  detail = fmt("10 instances, worst (solver - grid) = %.2e", worst_gap);
  return true;
}

bool criterion_full_rank(std::string& detail) {
  Rng rng(66);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int p = 4 + trial % 13;  // up to 16
    const Eigen::MatrixXd s = oracle::random_spd(p, rng);
    const CovarianceInput cov = CovarianceInput::from_covariance(s);
    const Eigen::VectorXd phi = oracle::random_loguniform(p, 0.1, 10.0, rng);
    const UniquenessPrecision u{phi, 1e-9};
    const int r = 1 + trial % 3;

    const double fbar = full_rank_objective(cov, u, r);
    const double f = objective(cov, u, r).f;
    const double logdet =
        2.0 * Eigen::LLT<Eigen::MatrixXd>(s).matrixL().toDenseMatrix().diagonal()
                  .array().log().sum();
    const double err = std::abs(fbar - (f - logdet));
    worst = std::max(worst, err);
    if (err > 1e-9) {
      detail = "identity violated by " + std::to_string(err);
      return false;
    }
  }
  detail = fmt("50 points, worst |fbar - (f - logdet S)| = %.2e", worst);
  return true;
}

bool criterion_ridge(std::string& detail) {
  Rng rng(88);
  double min_margin = 1e300;
  for (const double gamma : {1e-4, 1e-2, 1.0}) {
    for (int trial = 0; trial < 4; ++trial) {
      const Eigen::MatrixXd s = oracle::random_spd(8, rng);
      const CovarianceInput cov = CovarianceInput::from_covariance(s);
      RidgeConfig config;
      config.r = 2;
      config.gamma = gamma;
      double min_psi = 1e300;
      solve_ridge(cov, config, [&](int, const Eigen::VectorXd& point) {
        min_psi = std::min(min_psi, point.cwiseInverse().minCoeff());
      });
      min_margin = std::min(min_margin, min_psi - std::sqrt(2.0 * gamma));
      if (min_psi < std::sqrt(2.0 * gamma) - 1e-12) {
        detail = "psi dipped below sqrt(2 gamma) at gamma " + std::to_string(gamma);
        return false;
      }
    }
  }
  detail = fmt("12 solves, min (psi - sqrt(2 gamma)) = %.2e", min_margin);
  return true;
}

bool criterion_gram(std::string& detail) {
  // Control set: both strategies apply.
  Rng rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    const SyntheticDataset data = make_instance(64, 50, 3, 500 + trial);
    const Eigen::VectorXd phi = oracle::random_loguniform(64, 0.2, 5.0, rng);
    const auto dense = eig_top(data.cov, phi, 5, SpectrumStrategy::DenseFull);
    const auto gram = eig_top(data.cov, phi, 5, SpectrumStrategy::GramThin);
    for (int i = 0; i < 5; ++i) {
      const double ref = dense.eigenvalues[i];
      if (std::abs(gram.eigenvalues[i] - ref) > 1e-7 * std::max(1.0, ref)) {
        detail = "control eigenvalue mismatch at " + std::to_string(i);
        return false;
      }
    }
  }

  // Genuinely thin regime: residuals checked through implicit products.
  {
    const SyntheticDataset data = make_instance(2000, 50, 5, 321);
    const Eigen::VectorXd phi = oracle::random_loguniform(2000, 0.5, 2.0, rng);
    const auto sp = eig_top(data.cov, phi, 5);
    if (sp.strategy != SpectrumStrategy::GramThin) {
      detail = "expected the gram strategy for p >> n";
      return false;
    }
    const double resid = spectrum_residual(data.cov, phi, sp);
    if (resid > 1e-7 * std::max(1.0, sp.eigenvalues[0])) {
      detail = "thin-regime residual " + std::to_string(resid);
      return false;
    }
  }

  // Timed full fit in the reference thin-data shape.
  const double start = now_seconds();
  const SyntheticDataset big = make_instance(10000, 150, 5, 777, 10.0, 1.0);
  SolverConfig config;
  config.r = 5;
  config.eps = 1e-3;
  const auto [phi_big, trace] = solve(big.cov, config);
  const double elapsed = now_seconds() - start;
  detail = fmt("fit (n,p)=(150,10000) r=5: %d iterations in %.2f s", trace.iterations,
               elapsed);
  return elapsed < 60.0;
}

bool criterion_benchmark(std::string& detail) {
  const int replicates = 10;
  const int ranks[] = {2, 4, 6, 8};
  int cells = 0, wins = 0;
  for (int rep = 0; rep < replicates; ++rep) {
    const SyntheticDataset data = make_instance(50, 550, 8, 4000 + rep, 10.0, 10.0);
    for (int r : ranks) {
      SolverConfig sc;
      sc.r = r;
      sc.max_iters = 2000;
      const auto [phi, dc_trace] = solve(data.cov, sc);

      EmConfig ec;
      ec.r = r;
      ec.max_iters = 2000;
      const auto [em_model, em_trace] = solve_em(data.cov, ec);

      ++cells;
      if (dc_trace.objectives.back() <= em_trace.objectives.back() + 1e-6) ++wins;
    }
  }
  detail = std::to_string(wins) + "/" + std::to_string(cells) +
           " cells with DC <= EM + 1e-6";
  return wins * 10 >= cells * 9;  // >= 90%
}

bool criterion_block_reduction(std::string& detail) {
  Rng rng(111);
  for (int trial = 0; trial < 20; ++trial) {
    const int p = 6 + trial % 5;
    const Eigen::MatrixXd s = oracle::random_spd(p, rng);
    const CovarianceInput cov = CovarianceInput::from_covariance(s);

    std::vector<Eigen::VectorXd> diag_iters, block_iters;
    SolverConfig sc;
    sc.r = 2;
    sc.eps = 0.0;  // clamping disabled
    sc.tol = 1e-300;
    sc.max_iters = 15;
    solve(cov, sc, [&](int, const Eigen::VectorXd& v) { diag_iters.push_back(v); });

    BlockStructure structure{std::vector<int>(static_cast<size_t>(p), 1)};
    BlockSolverConfig bc;
    bc.r = 2;
    bc.tol = 1e-300;
    bc.max_iters = 15;
    solve_block(cov, structure, bc,
                [&](int, const Eigen::VectorXd& v) { block_iters.push_back(v); });

    if (diag_iters.size() != block_iters.size()) {
      detail = "iterate counts differ";
      return false;
    }
    for (size_t k = 0; k < diag_iters.size(); ++k) {
      if ((diag_iters[k] - block_iters[k]).cwiseAbs().maxCoeff() != 0.0) {
        detail = "iterates differ at step " + std::to_string(k) + " of trial " +
                 std::to_string(trial);
        return false;
      }
    }
  }
  detail = "20 instances, all iterates bitwise equal";
  return true;
}

bool criterion_em_monotone(std::string& detail) {
  int traces = 0;
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::Index n = rep % 2 == 0 ? 80 : 8;  // includes n < p
    const SyntheticDataset data = make_instance(16, n, 3, 6000 + rep);
    EmConfig config;
    config.r = 3;
    config.max_iters = 500;
    const auto [model, trace] = solve_em(data.cov, config);
    for (size_t k = 0; k + 1 < trace.objectives.size(); ++k) {
      const double slack = 1e-8 * std::max(1.0, std::abs(trace.objectives[k]));
      if (trace.objectives[k + 1] > trace.objectives[k] + slack) {
        detail = "likelihood increased at step " + std::to_string(k);
        return false;
      }
    }
    ++traces;
  }
  detail = std::to_string(traces) + " EM traces nonincreasing";
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  Eigen::setNbThreads(1);  // deterministic kernels for the bitwise checks
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  struct Criterion {
    int id;
    const char* name;
    std::function<bool(std::string&)> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "descent-certificates", criterion_descent},
      {2, "stationarity", criterion_stationarity},
      {3, "solution-bounds", criterion_bounds},
      {4, "objective-likelihood-consistency", criterion_consistency},
      {5, "subgradient-finite-differences", criterion_subgradient},
      {6, "brute-force-grid-optimality", criterion_grid_oracle},
      {7, "full-rank-identity", criterion_full_rank},
      {8, "ridge-lower-bound", criterion_ridge},
      {9, "gram-equivalence-and-timing", criterion_gram},
      {10, "benchmark-vs-em", criterion_benchmark},
      {11, "block-singleton-reduction", criterion_block_reduction},
      {12, "em-monotonicity", criterion_em_monotone},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    if (!selected.empty() && !selected.count(criterion.id)) continue;
    std::string detail;
    bool ok = false;
    try {
      ok = criterion.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] %2d %s%s%s\n", ok ? "PASS" : "FAIL", criterion.id,
                criterion.name, detail.empty() ? "" : ": ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures;
}
