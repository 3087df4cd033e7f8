// factmle: batch front end for the factor-analysis solvers.
//
// Subcommands: fit, path, benchmark, simulate. CSV/JSON in, JSON/CSV out.
// Exit codes: 0 success/converged, 2 iteration budget exhausted,
// 1 runtime failure, 64 usage error.

#include <Eigen/Core>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "factmle/blockdiag.hpp"
#include "factmle/data_io.hpp"
#include "factmle/em.hpp"
#include "factmle/errors.hpp"
#include "factmle/model.hpp"
#include "factmle/serialize.hpp"
#include "factmle/solver.hpp"
#include "factmle/variants.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitMaxIters = 2;
constexpr int kExitUsage = 64;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string input;
  std::string input_kind = "data";
  bool header = false;
  int rank = 0;
  double eps = 1e-7;
  double tol = 1e-8;
  int max_iters = 2000;
  std::string init = "diag";
  std::string stop_rule = "objective";
  std::uint64_t seed = 0;
  std::string out;
};

factmle::CovarianceInput load_input(const CommonOptions& opts) {
  if (opts.input_kind != "data" && opts.input_kind != "cov") {
    throw UsageError("--input-kind must be 'data' or 'cov'");
  }
  const auto mode = opts.input_kind == "data" ? factmle::InputMode::DataMatrix
                                              : factmle::InputMode::CovarianceMatrix;
  return factmle::load_csv(opts.input, opts.header, mode);
}

factmle::SolverConfig solver_config(const CommonOptions& opts, Eigen::Index p) {
  if (opts.rank < 1 || opts.rank >= p) {
    throw UsageError("--rank must satisfy 1 <= rank < p (p = " + std::to_string(p) +
                     ")");
  }
  factmle::SolverConfig config;
  config.r = opts.rank;
  config.eps = opts.eps;
  config.tol = opts.tol;
  config.max_iters = opts.max_iters;
  config.seed = opts.seed;
  if (opts.init == "diag") {
    config.init = factmle::InitKind::FullDiagonal;
  } else if (opts.init == "half-diag") {
    config.init = factmle::InitKind::HalfDiagonal;
  } else if (opts.init == "random") {
    config.init = factmle::InitKind::UniformRandom;
  } else {
    throw UsageError("--init must be one of diag|half-diag|random");
  }
  if (opts.stop_rule == "objective") {
    config.stop_rule = factmle::StopRule::ObjectiveRelative;
  } else if (opts.stop_rule == "iterate") {
    config.stop_rule = factmle::StopRule::IterateRelative;
  } else {
    throw UsageError("--stop-rule must be 'objective' or 'iterate'");
  }
  return config;
}

std::vector<int> parse_ranks(const std::string& text, Eigen::Index p) {
  std::vector<int> ranks;
  const auto dots = text.find("..");
  try {
    if (dots != std::string::npos) {
      const int lo = std::stoi(text.substr(0, dots));
      const int hi = std::stoi(text.substr(dots + 2));
      for (int r = lo; r <= hi; ++r) ranks.push_back(r);
    } else {
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) ranks.push_back(std::stoi(item));
      }
    }
  } catch (const std::exception&) {
    throw UsageError("cannot parse rank list '" + text + "'");
  }
  if (ranks.empty()) throw UsageError("empty rank list");
  for (size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i] < 1 || ranks[i] >= p) {
      throw UsageError("ranks must satisfy 1 <= r < p");
    }
    if (i > 0 && ranks[i] <= ranks[i - 1]) {
      throw UsageError("ranks must be strictly increasing");
    }
  }
  return ranks;
}

std::vector<double> parse_doubles(const std::string& text, const char* what) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  try {
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) values.push_back(std::stod(item));
    }
  } catch (const std::exception&) {
    throw UsageError(std::string("cannot parse ") + what + " '" + text + "'");
  }
  if (values.empty()) throw UsageError(std::string("empty ") + what);
  return values;
}

void write_output(const std::string& text, const std::string& out_path) {
  std::cout << text << std::endl;
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw factmle::ParseError("cannot write '" + out_path + "'");
    out << text << '\n';
  }
}

double time_at(const factmle::SolverTrace& trace, size_t k) {
  return k == 0 ? 0.0 : trace.cum_seconds[k - 1];
}

// ---------------------------------------------------------------- fit --

int run_fit(const CommonOptions& opts, double ridge_gamma, bool continuation,
            const std::string& blocks_text) {
  const factmle::CovarianceInput cov = load_input(opts);
  const factmle::SolverConfig config = solver_config(opts, cov.p());

  nlohmann::json report{{"schema", 1}, {"command", "fit"}};
  report["config"] = {{"input", opts.input},
                      {"input_kind", opts.input_kind},
                      {"rank", opts.rank},
                      {"eps", opts.eps},
                      {"tol", opts.tol},
                      {"max_iters", opts.max_iters},
                      {"init", opts.init},
                      {"stop_rule", opts.stop_rule},
                      {"seed", opts.seed}};

  factmle::Termination termination = factmle::Termination::Converged;

  if (!blocks_text.empty()) {
    std::vector<int> sizes;
    for (double v : parse_doubles(blocks_text, "block sizes")) {
      sizes.push_back(static_cast<int>(v));
    }
    factmle::BlockStructure structure{sizes};
    Eigen::Index total = 0;
    for (int s : sizes) {
      if (s < 1) throw UsageError("block sizes must be positive");
      total += s;
    }
    if (total != cov.p()) throw UsageError("--blocks sizes must sum to p");

    factmle::BlockSolverConfig bc;
    bc.r = config.r;
    bc.tol = config.tol;
    bc.max_iters = config.max_iters;
    const auto [phi, trace] = factmle::solve_block(cov, structure, bc);
    const factmle::BlockModel model =
        factmle::recover_block_model(cov, structure, phi, config.r);
    report["config"]["blocks"] = sizes;
    report["model"] = factmle::block_model_to_json(model, structure);
    report["trace"] = factmle::trace_summary_to_json(trace);
    termination = trace.termination;
  } else if (ridge_gamma > 0.0) {
    factmle::RidgeConfig rc;
    rc.gamma = ridge_gamma;
    rc.r = config.r;
    rc.tol = config.tol;
    rc.max_iters = config.max_iters;
    rc.init = config.init;
    rc.seed = config.seed;
    rc.stop_rule = config.stop_rule;
    auto [phi, trace] = continuation ? factmle::solve_ridge_continuation(cov, rc)
                                     : factmle::solve_ridge(cov, rc);
    const factmle::FactorModel model = factmle::recover_loadings(cov, phi, config.r);
    report["config"]["ridge"] = ridge_gamma;
    report["config"]["continuation"] = continuation;
    report["model"] = factmle::model_to_json(model);
    report["trace"] = factmle::trace_summary_to_json(trace);
    termination = trace.termination;
  } else if (continuation) {
    factmle::ContinuationConfig cc;
    const factmle::ContinuationResult res = factmle::solve_continuation(cov, config, cc);
    const factmle::FactorModel model =
        factmle::recover_loadings(cov, res.phi, config.r);
    report["config"]["continuation"] = true;
    report["config"]["eps_schedule"] = cc.eps_schedule;
    report["model"] = factmle::model_to_json(model);
    report["trace"] = factmle::trace_summary_to_json(res.trace);
    report["pinned"] = res.pinned;
    termination = res.trace.termination;
  } else {
    const auto [phi, trace] = factmle::solve(cov, config);
    const factmle::FactorModel model = factmle::recover_loadings(cov, phi, config.r);
    report["model"] = factmle::model_to_json(model);
    report["trace"] = factmle::trace_summary_to_json(trace);
    termination = trace.termination;
  }

  write_output(report.dump(2), opts.out);
  switch (termination) {
    case factmle::Termination::Converged:
      return kExitOk;
    case factmle::Termination::MaxIters:
      return kExitMaxIters;
    case factmle::Termination::Stalled:
      return kExitRuntime;
  }
  return kExitRuntime;
}

// --------------------------------------------------------------- path --

int run_path(const CommonOptions& opts, const std::string& ranks_text) {
  const factmle::CovarianceInput cov = load_input(opts);
  CommonOptions probe = opts;
  probe.rank = 1;
  factmle::SolverConfig config = solver_config(probe, cov.p());
  const std::vector<int> ranks = parse_ranks(ranks_text, cov.p());

  const auto path = factmle::solve_path(cov, ranks, config);
  std::ostringstream csv;
  csv << "r,objective,neg_loglik,iterations,seconds,termination\n";
  bool all_converged = true;
  for (const auto& entry : path) {
    const auto& trace = entry.trace;
    if (trace.termination != factmle::Termination::Converged) all_converged = false;
    csv << entry.rank << ',' << trace.objectives.back() << ','
        << entry.model.neg_loglik << ',' << trace.iterations << ','
        << (trace.cum_seconds.empty() ? 0.0 : trace.cum_seconds.back()) << ','
        << factmle::termination_name(trace.termination) << '\n';
  }
  std::string text = csv.str();
  text.pop_back();  // trailing newline re-added by write_output
  write_output(text, opts.out);
  return all_converged ? kExitOk : kExitMaxIters;
}

// ---------------------------------------------------------- benchmark --

struct BenchmarkOptions {
  Eigen::Index p = 0;
  Eigen::Index n = 0;
  Eigen::Index r0 = 0;
  double mu = 10.0;
  double sigma2 = 1.0;
  double uniq_mean = 10.0;
  int replicates = 10;
  std::string methods = "factmle,em";
  std::string tol_levels = "1e-2,1e-3,1e-4,1e-5";
};

int run_benchmark(const CommonOptions& opts, const BenchmarkOptions& bench,
                  bool as_json) {
  std::vector<std::string> methods;
  {
    std::stringstream ss(bench.methods);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item != "factmle" && item != "em") {
        throw UsageError("unknown method '" + item + "' (expected factmle|em)");
      }
      methods.push_back(item);
    }
    if (methods.empty()) throw UsageError("empty method list");
  }
  const std::vector<double> tols = parse_doubles(bench.tol_levels, "tolerance levels");
  if (bench.replicates < 1) throw UsageError("--replicates must be positive");

  const bool synthetic = opts.input.empty();
  if (synthetic && (bench.p < 2 || bench.n < 1 || bench.r0 < 1 || bench.r0 >= bench.p)) {
    throw UsageError("synthetic benchmark needs --p, --n, --r0 with 1 <= r0 < p");
  }

  // traces[m][rep]
  std::vector<std::vector<factmle::SolverTrace>> traces(
      methods.size(), std::vector<factmle::SolverTrace>(
                          static_cast<size_t>(bench.replicates)));
  for (int rep = 0; rep < bench.replicates; ++rep) {
    factmle::CovarianceInput cov = [&] {
      if (!synthetic) return load_input(opts);
      factmle::SyntheticSpec spec;
      spec.p = bench.p;
      spec.n = bench.n;
      spec.r0 = bench.r0;
      spec.loading_mean = bench.mu;
      spec.loading_var = bench.sigma2;
      spec.uniqueness_mean = bench.uniq_mean;
      spec.seed = opts.seed + static_cast<std::uint64_t>(rep);
      return factmle::generate_synthetic(spec).cov;
    }();
    CommonOptions run_opts = opts;
    if (run_opts.rank < 1) throw UsageError("--rank is required");

    for (size_t m = 0; m < methods.size(); ++m) {
      if (methods[m] == "factmle") {
        factmle::SolverConfig config = solver_config(run_opts, cov.p());
        auto [phi, trace] = factmle::solve(cov, config);
        traces[m][static_cast<size_t>(rep)] = std::move(trace);
      } else {
        factmle::EmConfig config;
        config.r = run_opts.rank;
        config.tol = run_opts.tol;
        config.max_iters = run_opts.max_iters;
        auto [model, trace] = factmle::solve_em(cov, config);
        traces[m][static_cast<size_t>(rep)] = std::move(trace);
      }
    }
  }

  // Best final objective across methods, per replicate.
  std::vector<double> f_star(static_cast<size_t>(bench.replicates),
                             std::numeric_limits<double>::infinity());
  for (int rep = 0; rep < bench.replicates; ++rep) {
    for (size_t m = 0; m < methods.size(); ++m) {
      f_star[static_cast<size_t>(rep)] =
          std::min(f_star[static_cast<size_t>(rep)],
                   traces[m][static_cast<size_t>(rep)].objectives.back());
    }
  }
  const auto time_to_tol = [&](const factmle::SolverTrace& trace, double star,
                               double tol) -> std::optional<double> {
    for (size_t k = 0; k < trace.objectives.size(); ++k) {
      if ((trace.objectives[k] - star) / std::abs(star) <= tol) {
        return time_at(trace, k);
      }
    }
    return std::nullopt;
  };

  nlohmann::json summary = nlohmann::json::array();
  std::ostringstream csv;
  csv << "tol,method,mean_seconds,se_seconds,reached,replicates\n";
  for (double tol : tols) {
    for (size_t m = 0; m < methods.size(); ++m) {
      std::vector<double> times;
      for (int rep = 0; rep < bench.replicates; ++rep) {
        const auto t = time_to_tol(traces[m][static_cast<size_t>(rep)],
                                   f_star[static_cast<size_t>(rep)], tol);
        if (t) times.push_back(*t);
      }
      double mean = 0.0, se = 0.0;
      if (!times.empty()) {
        for (double t : times) mean += t;
        mean /= static_cast<double>(times.size());
        if (times.size() > 1) {
          for (double t : times) se += (t - mean) * (t - mean);
          se = std::sqrt(se / static_cast<double>(times.size() - 1) /
                         static_cast<double>(times.size()));
        }
      }
      csv << tol << ',' << methods[m] << ',' << mean << ',' << se << ','
          << times.size() << ',' << bench.replicates << '\n';
      summary.push_back({{"tol", tol},
                         {"method", methods[m]},
                         {"mean_seconds", mean},
                         {"se_seconds", se},
                         {"reached", times.size()},
                         {"replicates", bench.replicates}});
    }
  }

  if (as_json) {
    nlohmann::json rows = nlohmann::json::array();
    for (size_t m = 0; m < methods.size(); ++m) {
      for (int rep = 0; rep < bench.replicates; ++rep) {
        const auto& trace = traces[m][static_cast<size_t>(rep)];
        rows.push_back({{"method", methods[m]},
                        {"replicate", rep},
                        {"objective", trace.objectives.back()},
                        {"neg_loglik", trace.objectives.back()},
                        {"iterations", trace.iterations},
                        {"wall_seconds",
                         trace.cum_seconds.empty() ? 0.0 : trace.cum_seconds.back()},
                        {"termination", factmle::termination_name(trace.termination)}});
      }
    }
    nlohmann::json report{{"schema", 1},
                          {"command", "benchmark"},
                          {"f_star", f_star},
                          {"rows", std::move(rows)},
                          {"summary", std::move(summary)}};
    write_output(report.dump(2), opts.out);
  } else {
    std::string text = csv.str();
    text.pop_back();
    write_output(text, opts.out);
  }
  return kExitOk;
}

// ----------------------------------------------------------- simulate --

int run_simulate(const factmle::SyntheticSpec& spec, const std::string& out_x,
                 const std::string& out_truth) {
  if (spec.p < 2 || spec.n < 1 || spec.r0 < 1 || spec.r0 >= spec.p) {
    throw UsageError("need --p, --n, --r0 with 1 <= r0 < p");
  }
  if (out_x.empty() || out_truth.empty()) {
    throw UsageError("--out-x and --out-truth are required");
  }
  const factmle::SyntheticDataset data = factmle::generate_synthetic(spec);
  factmle::save_csv(data.cov.data(), out_x);
  {
    std::ofstream out(out_truth);
    if (!out) throw factmle::ParseError("cannot write '" + out_truth + "'");
    out << factmle::ground_truth_to_json(data.truth, spec.seed).dump(2) << '\n';
  }
  nlohmann::json report{{"schema", 1}, {"command", "simulate"}, {"x", out_x},
                        {"truth", out_truth}, {"p", spec.p}, {"n", spec.n},
                        {"r0", spec.r0}, {"seed", spec.seed}};
  std::cout << report.dump(2) << std::endl;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("FACTMLE_THREADS")) {
    Eigen::setNbThreads(std::max(1, std::atoi(threads)));
  } else {
    Eigen::setNbThreads(1);
  }

  CLI::App app{"Maximum-likelihood factor analysis via DC programming"};
  app.require_subcommand(1);

  CommonOptions opts;
  double ridge_gamma = 0.0;
  bool continuation = false;
  std::string blocks_text;
  std::string ranks_text;
  BenchmarkOptions bench;
  factmle::SyntheticSpec sim_spec;
  sim_spec.loading_mean = 10.0;
  sim_spec.loading_var = 1.0;
  sim_spec.uniqueness_mean = 10.0;
  std::string out_x, out_truth;

  const auto add_common = [&](CLI::App* cmd, bool need_input) {
    if (need_input) cmd->add_option("--input", opts.input, "CSV file")->required();
    cmd->add_option("--input-kind", opts.input_kind, "data|cov");
    cmd->add_flag("--header", opts.header, "skip a single header row");
    cmd->add_option("--eps", opts.eps, "lower bound on psi (box 1/eps on phi)");
    cmd->add_option("--tol", opts.tol, "stopping tolerance");
    cmd->add_option("--max-iters", opts.max_iters, "iteration budget");
    cmd->add_option("--init", opts.init, "diag|half-diag|random");
    cmd->add_option("--stop-rule", opts.stop_rule, "objective|iterate");
    cmd->add_option("--seed", opts.seed, "random seed");
    cmd->add_option("--out", opts.out, "also write the result to this file");
  };

  CLI::App* fit = app.add_subcommand("fit", "fit one factor model");
  add_common(fit, true);
  fit->add_option("--rank", opts.rank, "number of factors")->required();
  fit->add_option("--ridge", ridge_gamma, "ridge penalty gamma (replaces the box)");
  fit->add_flag("--continuation", continuation, "anneal eps (or gamma) downward");
  fit->add_option("--blocks", blocks_text, "block sizes, e.g. 3,3,2");

  CLI::App* path = app.add_subcommand("path", "warm-started rank path");
  add_common(path, true);
  path->add_option("--ranks", ranks_text, "e.g. 1..8 or 2,4,6")->required();

  bool bench_json = false;
  CLI::App* benchmark = app.add_subcommand("benchmark", "FACTMLE vs EM table");
  add_common(benchmark, false);
  benchmark->add_flag("--json", bench_json, "emit a full JSON report instead of CSV");
  benchmark->add_option("--input", opts.input, "CSV file (omit for synthetic)");
  benchmark->add_option("--rank", opts.rank, "number of factors")->required();
  benchmark->add_option("--p", bench.p, "synthetic: variables");
  benchmark->add_option("--n", bench.n, "synthetic: samples");
  benchmark->add_option("--r0", bench.r0, "synthetic: true rank");
  benchmark->add_option("--mu", bench.mu, "synthetic: loading mean");
  benchmark->add_option("--sigma2", bench.sigma2, "synthetic: loading variance");
  benchmark->add_option("--uniq-mean", bench.uniq_mean, "synthetic: uniqueness mean");
  benchmark->add_option("--replicates", bench.replicates, "number of replicates");
  benchmark->add_option("--methods", bench.methods, "comma list: factmle,em");
  benchmark->add_option("--tol-levels", bench.tol_levels, "comma list of tolerances");

  CLI::App* simulate = app.add_subcommand("simulate", "write a synthetic dataset");
  simulate->add_option("--p", sim_spec.p, "variables")->required();
  simulate->add_option("--n", sim_spec.n, "samples")->required();
  simulate->add_option("--r0", sim_spec.r0, "true rank")->required();
  simulate->add_option("--mu", sim_spec.loading_mean, "loading mean");
  simulate->add_option("--sigma2", sim_spec.loading_var, "loading variance");
  simulate->add_option("--uniq-mean", sim_spec.uniqueness_mean, "uniqueness mean");
  simulate->add_option("--seed", sim_spec.seed, "random seed");
  simulate->add_option("--out-x", out_x, "output CSV for the data matrix");
  simulate->add_option("--out-truth", out_truth, "output JSON for the ground truth");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << std::endl;
    return kExitUsage;
  }

  try {
    if (fit->parsed()) return run_fit(opts, ridge_gamma, continuation, blocks_text);
    if (path->parsed()) return run_path(opts, ranks_text);
    if (benchmark->parsed()) return run_benchmark(opts, bench, bench_json);
    if (simulate->parsed()) return run_simulate(sim_spec, out_x, out_truth);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitRuntime;
  }
  return kExitUsage;
}
